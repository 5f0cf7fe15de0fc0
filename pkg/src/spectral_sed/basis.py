"""Dirichlet Laplacian eigenpairs on axis-aligned boxes."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class BoxDomain:
    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(a) for a in self.lower)
        hi = tuple(float(b) for b in self.upper)
        if len(lo) != len(hi) or not 1 <= len(lo) <= 4:
            raise ValueError(f"box bounds must have equal length in 1..4, got {lo}, {hi}")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ValueError(f"empty box: lower={lo} upper={hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def from_bounds(cls, bounds) -> "BoxDomain":
        """Build from ``[[a1, b1], [a2, b2], ...]``."""
        bounds = np.asarray(bounds, dtype=float)
        return cls(tuple(bounds[:, 0]), tuple(bounds[:, 1]))

    @property
    def d(self) -> int:
        return len(self.lower)

    @property
    def lengths(self) -> np.ndarray:
        return np.asarray(self.upper) - np.asarray(self.lower)

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (np.asarray(self.lower) + np.asarray(self.upper))

    def contains(self, x, tol: float = 1e-9) -> bool:
        x = np.asarray(x, dtype=float)
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        span = hi - lo
        return bool(np.all(x >= lo - tol * span) and np.all(x <= hi + tol * span))

    def grid(self, n_per_dim) -> np.ndarray:
        """Uniform tensor grid including the faces, C-ordered (first coordinate slowest)."""
        n = np.broadcast_to(np.asarray(n_per_dim, dtype=int), (self.d,))
        axes = [np.linspace(a, b, k) for a, b, k in zip(self.lower, self.upper, n)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=-1)

    def to_dict(self) -> dict:
        return {"lower": list(self.lower), "upper": list(self.upper)}


@dataclass(frozen=True)
class BasisSpec:
    """Tensor sine basis; index order is lexicographic in the multi-index ``j``."""

    domain: BoxDomain
    m_per_dim: tuple[int, ...]
    ordering: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        m = tuple(int(k) for k in np.broadcast_to(np.asarray(self.m_per_dim), (self.domain.d,)))
        if any(k < 1 for k in m):
            raise ValueError(f"m_per_dim entries must be positive, got {m}")
        object.__setattr__(self, "m_per_dim", m)
        order = np.array(list(itertools.product(*[range(1, k + 1) for k in m])), dtype=int)
        order.setflags(write=False)
        object.__setattr__(self, "ordering", order)

    @property
    def d(self) -> int:
        return self.domain.d

    @property
    def m(self) -> int:
        return int(np.prod(self.m_per_dim))

    def eigenvalues(self) -> np.ndarray:
        return eigenvalue(self.ordering, self.domain)

    def to_dict(self) -> dict:
        return {"domain": self.domain.to_dict(), "m_per_dim": list(self.m_per_dim)}

    @classmethod
    def from_dict(cls, data: dict) -> "BasisSpec":
        dom = data["domain"]
        return cls(BoxDomain(tuple(dom["lower"]), tuple(dom["upper"])), tuple(data["m_per_dim"]))


def eigenvalue(j, domain: BoxDomain) -> np.ndarray | float:
    """Sum over dimensions of ``(pi j_k / L_k)^2``; ``j`` may be one index or an array of them."""
    j = np.asarray(j, dtype=float)
    out = np.sum((np.pi * j / domain.lengths) ** 2, axis=-1)
    return float(out) if out.ndim == 0 else out


def eigenfunction(j, domain: BoxDomain, x) -> float:
    j = np.asarray(j, dtype=float)
    x = np.asarray(x, dtype=float)
    lo, L = np.asarray(domain.lower), domain.lengths
    return float(np.prod(np.sqrt(2.0 / L) * np.sin(np.pi * j * (x - lo) / L)))


def factor_derivatives(x, domain: BoxDomain, m_per_dim, order: int):
    """Per-dimension factors ``d^order/dx^order [sqrt(2/L) sin(pi j (x-a)/L)]``.

    ``x`` has shape ``(..., d)`` (array or :class:`~spectral_sed.numerics.Dual`);
    returns a list of ``d`` arrays of shape ``(..., m_k)``.
    """
    lo, L = np.asarray(domain.lower), domain.lengths
    out = []
    for k in range(domain.d):
        freq = np.pi * np.arange(1, m_per_dim[k] + 1) / L[k]
        u = ((x[..., k] - lo[k]) / L[k] * np.pi)
        arg = u.reshape(u.shape + (1,)) * np.arange(1, m_per_dim[k] + 1)
        scale = np.sqrt(2.0 / L[k])
        r = order % 4
        if r == 0:
            f = np.sin(arg) * scale
        elif r == 1:
            f = np.cos(arg) * (scale * freq)
        elif r == 2:
            f = np.sin(arg) * (-scale * freq ** 2)
        else:
            f = np.cos(arg) * (-scale * freq ** 3)
        out.append(f)
    return out


def tensor_product(factors):
    """Combine per-dimension factor arrays ``(..., m_k)`` into ``(..., prod m_k)`` in lexicographic order."""
    out = factors[0]
    for f in factors[1:]:
        a = out.reshape(out.shape + (1,))
        b = f.reshape(f.shape[:-1] + (1,) + f.shape[-1:])
        prod = a * b
        out = prod.reshape(prod.shape[:-2] + (prod.shape[-2] * prod.shape[-1],))
    return out


def basis_values(spec: BasisSpec, points, alpha=None):
    """Matrix ``(npts, m)`` of ``D^alpha phi_j`` at ``points``; ``alpha=None`` means no derivative."""
    if alpha is None:
        alpha = (0,) * spec.d
    per_order = {}
    factors = []
    for k, a in enumerate(alpha):
        if a not in per_order:
            per_order[a] = factor_derivatives(points, spec.domain, spec.m_per_dim, a)
        factors.append(per_order[a][k])
    return tensor_product(factors)


def l2_inner_product(j, jp, domain: BoxDomain, resolution: int = 256) -> float:
    """Midpoint-rule approximation of the L2 inner product of two eigenfunctions."""
    if resolution < 64:
        raise ValueError("resolution must be at least 64 points per dimension")
    j = np.asarray(j, dtype=float)
    jp = np.asarray(jp, dtype=float)
    total = 1.0
    # separable integrand: product of 1-d integrals
    for k in range(domain.d):
        L = domain.lengths[k]
        t = (np.arange(resolution) + 0.5) / resolution
        f = np.sin(np.pi * j[k] * t) * np.sin(np.pi * jp[k] * t)
        total *= 2.0 / L * np.sum(f) * L / resolution
    return float(total)
