"""Finite-rank spectral Gaussian process over functional data."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import solve_triangular

from .basis import BasisSpec, basis_values
from .functionals import OutOfDomain
from .kernel import MaternKernel, coefficient_variances
from .numerics import AdamState, Dual, RngStream, adam_step, cholesky, solve_psd

POSTERIOR_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class SpectralModel:
    kernel: MaternKernel
    spec: BasisSpec
    nugget: float = 0.0

    def __post_init__(self):
        if self.kernel.d != self.spec.d:
            raise ValueError(f"kernel dimension {self.kernel.d} != basis dimension {self.spec.d}")
        if self.nugget < 0:
            raise ValueError("nugget must be nonnegative")

    @property
    def variances(self) -> np.ndarray:
        return coefficient_variances(self.spec, self.kernel)

    def with_hyperparameters(self, theta) -> "SpectralModel":
        return replace(self, kernel=self.kernel.with_hyperparameters(theta))


@dataclass
class Dataset:
    """Append-only list of ``(functional, observed value)`` pairs."""

    functionals: list = field(default_factory=list)
    values: list = field(default_factory=list)
    _rows: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.functionals = list(self.functionals)
        self.values = [float(v) for v in self.values]
        if len(self.functionals) != len(self.values):
            raise ValueError("functionals and values must have equal length")

    def __len__(self):
        return len(self.functionals)

    def extend(self, functionals, values) -> None:
        functionals, values = list(functionals), [float(v) for v in values]
        if len(functionals) != len(values):
            raise ValueError("functionals and values must have equal length")
        self.functionals.extend(functionals)
        self.values.extend(values)

    @property
    def y(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def matrix(self, spec: BasisSpec) -> np.ndarray:
        """Cached ``(n, m)`` matrix of functionals applied to the basis."""
        rows = self._rows.setdefault(spec, [])
        for f in self.functionals[len(rows):]:
            rows.append(np.asarray(f.row(spec), dtype=float))
        if not rows:
            return np.zeros((0, spec.m))
        return np.stack(rows)

    def permuted(self, order) -> "Dataset":
        return Dataset([self.functionals[i] for i in order], [self.values[i] for i in order])


@dataclass(frozen=True, eq=False)
class PosteriorState:
    spec: BasisSpec
    kernel: MaternKernel
    nugget: float
    variances: np.ndarray  # prior coefficient variances
    B: np.ndarray  # (n, m) functionals applied to the basis
    y: np.ndarray
    mean: np.ndarray  # (m,)
    cov: np.ndarray  # (m, m)
    chol: np.ndarray  # lower factor of B diag(variances) B^T + nugget I
    cross: np.ndarray  # (m, n) coefficient / data covariance
    alpha: np.ndarray  # K^{-1} y

    @property
    def n(self) -> int:
        return self.B.shape[0]

    def to_json(self) -> str:
        return json.dumps({
            "schema_version": POSTERIOR_SCHEMA_VERSION,
            "basis": self.spec.to_dict(),
            "kernel": {"nu": self.kernel.nu, "amplitude": self.kernel.amplitude,
                       "lengthscale": self.kernel.lengthscale, "d": self.kernel.d},
            "nugget": self.nugget,
            "B": self.B.tolist(),
            "y": self.y.tolist(),
            "mean": self.mean.tolist(),
            "chol": self.chol.tolist(),
        })

    @classmethod
    def from_json(cls, text: str) -> "PosteriorState":
        data = json.loads(text)
        if data.get("schema_version") != POSTERIOR_SCHEMA_VERSION:
            raise ValueError(f"unsupported posterior schema {data.get('schema_version')!r}")
        spec = BasisSpec.from_dict(data["basis"])
        k = data["kernel"]
        kernel = MaternKernel(k["nu"], k["lengthscale"], k["amplitude"], k["d"])
        B = np.asarray(data["B"], dtype=float).reshape(-1, spec.m)
        L = np.asarray(data["chol"], dtype=float).reshape(B.shape[0], B.shape[0])
        return _assemble(spec, kernel, float(data["nugget"]), coefficient_variances(spec, kernel),
                         B, np.asarray(data["y"], dtype=float), L)


def _assemble(spec, kernel, nugget, lam, B, y, L) -> PosteriorState:
    cross = lam[:, None] * B.T
    if B.shape[0] == 0:
        return PosteriorState(spec, kernel, nugget, lam, B, y, np.zeros(spec.m), np.diag(lam),
                              L, cross, np.zeros(0))
    alpha = solve_psd(L, y)
    mean = cross @ alpha
    V = solve_triangular(L, cross.T, lower=True)
    cov = np.diag(lam) - V.T @ V
    cov = 0.5 * (cov + cov.T)
    return PosteriorState(spec, kernel, nugget, lam, B, y, mean, cov, L, cross, alpha)


def data_gram(B: np.ndarray, lam) -> np.ndarray:
    return (B * lam) @ B.T


def condition(model: SpectralModel, dataset: Dataset) -> PosteriorState:
    for f in dataset.functionals:
        model.kernel.validate(f)
    lam = model.variances
    B = dataset.matrix(model.spec)
    y = dataset.y
    if len(dataset) == 0:
        return _assemble(model.spec, model.kernel, model.nugget, lam, B, y, np.zeros((0, 0)))
    L = cholesky(data_gram(B, lam), jitter=model.nugget)
    return _assemble(model.spec, model.kernel, model.nugget, lam, B, y, L)


def prior_sample(model: SpectralModel, rng: RngStream, count: int) -> np.ndarray:
    """Coefficient vectors ``(count, m)`` of independent prior paths."""
    lam = model.variances
    return rng.normal((count, lam.size)) * np.sqrt(lam)


def matheron_update(posterior: PosteriorState, C: np.ndarray) -> np.ndarray:
    """Map prior coefficient draws ``C`` (rows) to posterior draws by Matheron's rule."""
    if posterior.n == 0:
        return C
    resid = posterior.y[None, :] - C @ posterior.B.T
    W = solve_psd(posterior.chol, resid.T)
    return C + (posterior.cross @ W).T


def matheron_sample(model: SpectralModel, dataset: Dataset, posterior: PosteriorState,
                    rng: RngStream, count: int) -> np.ndarray:
    if posterior.n != len(dataset):
        raise ValueError("posterior was not built from this dataset")
    return matheron_update(posterior, prior_sample(model, rng, count))


def evaluate_paths(spec: BasisSpec, coeffs, points) -> np.ndarray:
    """Values of coefficient vectors (``(m,)`` or ``(k, m)``) at ``points``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    for p in points:
        if not spec.domain.contains(p):
            raise OutOfDomain(f"point {p.tolist()} lies outside {spec.domain}")
    Phi = basis_values(spec, points)
    return np.asarray(coeffs) @ Phi.T


def posterior_mean_field(posterior: PosteriorState, points) -> np.ndarray:
    return evaluate_paths(posterior.spec, posterior.mean, points)


def log_marginal_likelihood(model: SpectralModel, dataset: Dataset, theta=None):
    """Gaussian evidence of the data under ``K = B diag(lambda(theta)) B^T + nugget I``.

    ``theta = (log amplitude, log lengthscale)``; when it is a :class:`Dual`
    the result is a dual carrying the exact gradient.
    """
    if len(dataset) == 0:
        raise ValueError("marginal likelihood needs at least one datum")
    if theta is None:
        theta = model.kernel.hyperparameters
    lam = coefficient_variances(model.spec, model.kernel, theta[0], theta[1])
    lam_v = lam.value if isinstance(lam, Dual) else lam
    B = dataset.matrix(model.spec)
    y = dataset.y
    n = y.size
    K = data_gram(B, lam_v) + model.nugget * np.eye(n)
    L = cholesky(K)
    a = solve_psd(L, y)
    value = -0.5 * float(y @ a) - float(np.sum(np.log(np.diag(L)))) - 0.5 * n * math.log(2 * math.pi)
    if not isinstance(lam, Dual):
        return value
    # d/dlam_j = 0.5 * ((B^T a)_j^2 - (B^T K^{-1} B)_jj), chained through lam(theta)
    V = solve_triangular(L, B, lower=True)
    g_lam = 0.5 * ((B.T @ a) ** 2 - np.sum(V * V, axis=0))
    return Dual(value, lam.tangent @ g_lam)


def optimize_hyperparameters(model: SpectralModel, dataset: Dataset, n: int, n0: int = 10,
                             steps: int = 1000, lr: float = 1e-3, history: list | None = None,
                             state: AdamState | None = None) -> SpectralModel:
    """Adam on the negative log marginal likelihood, warm-started from the current kernel.

    No-op while ``n < n0``.
    """
    if n < n0 or len(dataset) == 0 or steps <= 0:
        return model
    theta = model.kernel.hyperparameters
    state = state or AdamState(lr=lr)
    for _ in range(steps):
        out = log_marginal_likelihood(model, dataset, Dual.variables(theta))
        if history is not None:
            history.append(-float(out.value))
        theta, state = adam_step(state, theta, -out.tangent)
    if history is not None:
        history.append(-float(log_marginal_likelihood(model, dataset, theta)))
    return model.with_hyperparameters(theta)

