"""Bayes-risk acquisition, its nested Monte Carlo estimator and design optimisation.

The estimator draws ``N`` outer posterior paths ``g_i`` and, for each, ``M``
inner paths from the posterior augmented with the hypothetical data
``delta_z(g_i)``. Inner paths are produced by Matheron's rule, written in two
stages: a design-independent posterior path ``h_ij`` (the current data only)
followed by the rank-``k`` correction for the new batch,

    g'_ij = h_ij + Sigma b^T (b Sigma b^T + nugget I)^{-1} b (g_i - h_ij),

which equals the one-shot Matheron update on the augmented dataset for the
same prior draw. Only the correction depends on ``z``, so it is the only part
carried through dual numbers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .basis import BoxDomain
from .functionals import (Laplacian, LineIntegral, PartialDerivative, PointEval,
                          basis_matrix, parallel_line_batch)
from .gp import Dataset, PosteriorState, SpectralModel, matheron_update, prior_sample
from .numerics import Dual, RngStream, make_optimizer, solve, value_of
from .qoi import LossSpec


class BoundaryPoint(ValueError):
    pass


class AllCandidatesDegenerate(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Design families
# ---------------------------------------------------------------------------

class PointFamily:
    """Batch of point functionals (values / derivatives / Laplacian) at ``x = z``."""

    def __init__(self, domain: BoxDomain, kinds=("value",)):
        self.domain = domain
        self.kinds = tuple(kinds)

    @property
    def dim(self) -> int:
        return self.domain.d

    def functionals(self, z):
        out = []
        for kind in self.kinds:
            if kind == "value":
                out.append(PointEval(z))
            elif kind == "laplacian":
                out.append(Laplacian(z))
            elif isinstance(kind, tuple) and kind[0] == "derivative":
                out.append(PartialDerivative(z, tuple(kind[1])))
            else:
                raise ValueError(f"unknown functional kind {kind!r}")
        return out

    def location(self, z) -> np.ndarray:
        return np.asarray(value_of(z), dtype=float)


class LineBundleFamily:
    """``z = (theta, cx, cy)``: parallel chords through ``(cx, cy)`` clipped to ``clip_box``."""

    def __init__(self, domain: BoxDomain, clip_box: BoxDomain, count: int = 9, spacing: float = 0.03):
        self.domain = domain
        self.clip_box = clip_box
        self.count = count
        self.spacing = spacing

    @property
    def dim(self) -> int:
        return 3

    def functionals(self, z):
        segs = parallel_line_batch(z[0], z[1:3], self.clip_box, self.count, self.spacing)
        return [LineIntegral(s) for s in segs]

    def location(self, z) -> np.ndarray:
        return np.asarray(value_of(z), dtype=float)[1:3]


# ---------------------------------------------------------------------------
# Logit reparametrisation
# ---------------------------------------------------------------------------

def logit_map(z, box: BoxDomain) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    lo, L = np.asarray(box.lower), box.lengths
    u = (z - lo) / L
    if np.any(u <= 0) or np.any(u >= 1):
        raise BoundaryPoint(f"{z.tolist()} is not strictly inside {box}")
    return np.log(u) - np.log1p(-u)


def inverse_logit_map(u, box: BoxDomain):
    lo, L = np.asarray(box.lower), box.lengths
    return lo + L * (1.0 / (1.0 + np.exp(-u)))


# ---------------------------------------------------------------------------
# Nested Monte Carlo estimator
# ---------------------------------------------------------------------------

@dataclass
class AcquisitionConfig:
    n_outer: int = 81
    n_inner: int = 9
    mc_init_count: int = 100
    adam_lr: float = 1e-1
    adam_steps: int = 1000
    optimizer: str = "adam"

    def __post_init__(self):
        if self.n_outer < 1 or self.n_inner < 1:
            raise ValueError("n_outer and n_inner must be at least 1")
        if self.mc_init_count < 1 or self.adam_steps < 0:
            raise ValueError("mc_init_count must be >= 1 and adam_steps >= 0")


@dataclass
class NestedDraws:
    """Design-independent ingredients of one estimate: outer paths ``G`` and inner paths ``H``."""

    G: np.ndarray  # (N, m)
    H: np.ndarray  # (N, M, m)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def N(self) -> int:
        return self.G.shape[0]

    @property
    def M(self) -> int:
        return self.H.shape[1]

    def permuted(self, order) -> "NestedDraws":
        return NestedDraws(self.G[order], self.H[order])

    def prepared(self, Phi: np.ndarray):
        key = id(Phi)
        if key not in self._cache:
            N, M, m = self.H.shape
            delta = (self.G[:, None, :] - self.H).reshape(N * M, m)
            self._cache[key] = (self.G @ Phi.T, self.H.reshape(N * M, m) @ Phi.T, delta)
        return self._cache[key]


def draw_nested(model: SpectralModel, posterior: PosteriorState, rng: RngStream, N: int, M: int) -> NestedDraws:
    G = matheron_update(posterior, prior_sample(model, rng, N))
    H = matheron_update(posterior, prior_sample(model, rng, N * M))
    return NestedDraws(G, H.reshape(N, M, -1))


def acquisition_from_draws(z, family, posterior: PosteriorState, loss: LossSpec,
                           draws: NestedDraws, nugget: float):
    """Estimate ``-1/(2NM) sum_ij L(g_i, g'_ij)`` for fixed draws; dual-capable in ``z``."""
    fs = family.functionals(z)
    if not fs:
        return -math.inf
    spec = posterior.spec
    b = basis_matrix(fs, spec)  # (k, m)
    Phi = loss.mesh.basis(spec)  # (P, m)
    FG, FH, delta = draws.prepared(Phi)
    k = len(fs)
    Sb = b @ posterior.cov  # (k, m); equals (Sigma b^T)^T
    S = Sb @ b.T + nugget * np.eye(k)
    r = delta @ b.T  # (NM, k)
    u = solve(S, r.T)  # (k, NM)
    corr = (Sb @ Phi.T).T @ u  # (P, NM)
    M = draws.M
    inner = FH + corr.T  # (NM, P) inner paths on the mesh
    outer = np.repeat(FG, M, axis=0)
    pair_loss = loss.from_fields(outer, inner)
    return pair_loss.mean() * -0.5


def estimate_acquisition(z, model: SpectralModel, dataset: Dataset, posterior: PosteriorState,
                         loss: LossSpec, cfg: AcquisitionConfig, rng: RngStream, family) -> float:
    draws = draw_nested(model, posterior, rng, cfg.n_outer, cfg.n_inner)
    return float(value_of(acquisition_from_draws(np.asarray(z, dtype=float), family, posterior,
                                                 loss, draws, model.nugget)))


def acquisition_value_and_grad(z, family, posterior, loss, draws, nugget):
    z = np.asarray(z, dtype=float)
    out = acquisition_from_draws(Dual.variables(z), family, posterior, loss, draws, nugget)
    if not isinstance(out, Dual):
        return float(out), np.zeros(z.size)
    return float(out.value), out.tangent.reshape(z.size).copy()


def estimate_acquisition_gradient(z, model: SpectralModel, dataset: Dataset, posterior: PosteriorState,
                                  loss: LossSpec, cfg: AcquisitionConfig, rng: RngStream, family) -> np.ndarray:
    draws = draw_nested(model, posterior, rng, cfg.n_outer, cfg.n_inner)
    return acquisition_value_and_grad(z, family, posterior, loss, draws, model.nugget)[1]


# ---------------------------------------------------------------------------
# Design optimisation
# ---------------------------------------------------------------------------

@dataclass
class DesignChoice:
    z: np.ndarray
    functionals: list
    screened_best: float
    trace: list = field(default_factory=list)


def optimize_design(model: SpectralModel, dataset: Dataset, posterior: PosteriorState, family,
                    loss: LossSpec, cfg: AcquisitionConfig, rng: RngStream) -> DesignChoice:
    """Uniform screening of ``mc_init_count`` designs, then stochastic ascent in logit coordinates."""
    box = family.domain
    screen_rng, ascent_rng = rng.spawn(2)
    candidates = screen_rng.uniform(box.lower, box.upper, (cfg.mc_init_count, box.d))
    scores = np.array([
        estimate_acquisition(c, model, dataset, posterior, loss, cfg, child, family)
        for c, child in zip(candidates, screen_rng.spawn(cfg.mc_init_count))
    ])
    if not np.any(np.isfinite(scores)):
        raise AllCandidatesDegenerate("every screened design produced an empty batch")
    best = int(np.argmax(np.where(np.isfinite(scores), scores, -np.inf)))
    z = candidates[best]
    trace = []
    if cfg.adam_steps > 0:
        u = logit_map(z, box)
        state, step = make_optimizer(cfg.optimizer, cfg.adam_lr)
        for _ in range(cfg.adam_steps):
            draws = draw_nested(model, posterior, ascent_rng, cfg.n_outer, cfg.n_inner)
            out = acquisition_from_draws(inverse_logit_map(Dual.variables(u), box), family,
                                         posterior, loss, draws, model.nugget)
            if not isinstance(out, Dual):
                # empty batch at this iterate: no usable gradient
                trace.append(float(out))
                continue
            trace.append(float(out.value))
            u, state = step(state, u, -out.tangent.reshape(u.size))
        z = np.asarray(inverse_logit_map(u, box), dtype=float)
    return DesignChoice(z, family.functionals(z), float(scores[best]), trace)
