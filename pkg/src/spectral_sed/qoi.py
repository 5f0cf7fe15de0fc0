"""Quantities of interest and squared-error losses between sample paths."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .basis import BasisSpec, BoxDomain, basis_values
from .functionals import OutOfDomain
from .numerics import Dual


class MeshMismatch(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Mesh:
    points: np.ndarray
    weights: np.ndarray
    _phi: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (pts.shape[0],) or np.any(w <= 0):
            raise ValueError("mesh weights must be positive, one per point")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, box: BoxDomain, n_per_dim) -> "Mesh":
        """Tensor grid with faces included; every point carries the grid cell volume ``prod(L_k / (n_k - 1))``."""
        n = np.broadcast_to(np.asarray(n_per_dim, dtype=int), (box.d,))
        if np.any(n < 2):
            raise ValueError("a uniform mesh needs at least two points per dimension")
        pts = box.grid(n)
        cell = float(np.prod(box.lengths / (n - 1)))
        return cls(pts, np.full(pts.shape[0], cell))

    def __len__(self):
        return self.points.shape[0]

    def basis(self, spec: BasisSpec) -> np.ndarray:
        """Cached ``(npts, m)`` basis matrix on this mesh."""
        if spec not in self._phi:
            if not all(spec.domain.contains(p) for p in self.points):
                raise OutOfDomain("mesh extends outside the basis domain")
            self._phi[spec] = basis_values(spec, self.points)
        return self._phi[spec]


@dataclass(frozen=True)
class SamplePath:
    coeffs: np.ndarray
    spec: BasisSpec

    def __call__(self, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return basis_values(self.spec, points) @ self.coeffs


class Identity:
    scalar = False

    def __init__(self, mesh: Mesh):
        self.mesh = mesh

    def from_field(self, values):
        return values


class OutputWarp:
    """Pointwise strictly monotone transform ``t`` of the field, with derivative ``dt``."""

    scalar = False

    def __init__(self, mesh: Mesh, fn: Callable, dfn: Callable):
        self.mesh = mesh
        self.fn = fn
        self.dfn = dfn

    @classmethod
    def exponential(cls, mesh: Mesh, rate: float = 3.0) -> "OutputWarp":
        return cls(mesh, lambda x: np.exp(rate * x), lambda x: rate * np.exp(rate * x))

    def from_field(self, values):
        if isinstance(values, Dual):
            v = values.value
            return Dual(self.fn(v), values.tangent * self.dfn(v))
        return self.fn(values)


class GridMax:
    """Maximum of the field over the mesh; ties go to the lowest index."""

    scalar = True

    def __init__(self, mesh: Mesh):
        self.mesh = mesh

    def from_field(self, values):
        if isinstance(values, Dual):
            return values.max(axis=-1)
        return np.max(values, axis=-1)

    def locate(self, values) -> tuple[float, int]:
        idx = int(np.argmax(values))
        return float(values[idx]), idx


def eval_qoi(q, path: SamplePath):
    """Identity / warp: values on the mesh. GridMax: ``(max value, argmax index)``."""
    field_vals = q.mesh.basis(path.spec) @ path.coeffs
    if isinstance(q, GridMax):
        return q.locate(field_vals)
    return q.from_field(field_vals)


@dataclass
class LossSpec:
    qoi: object

    @property
    def mesh(self) -> Mesh:
        return self.qoi.mesh

    def from_fields(self, fa, fb):
        """Loss between field values ``(..., npts)`` on the mesh (dual-capable)."""
        qa, qb = self.qoi.from_field(fa), self.qoi.from_field(fb)
        diff = qa - qb
        if self.qoi.scalar:
            return diff * diff
        return (diff * diff * self.mesh.weights).sum(axis=-1)


def loss(spec: LossSpec, path_a, path_b, basis: BasisSpec | None = None):
    """``||q(a) - q(b)||^2``; paths are :class:`SamplePath` or bare coefficients with ``basis``."""
    if isinstance(path_a, SamplePath) or isinstance(path_b, SamplePath):
        sa = path_a.spec if isinstance(path_a, SamplePath) else basis
        sb = path_b.spec if isinstance(path_b, SamplePath) else basis
        if sa != sb:
            raise MeshMismatch("paths live on different bases")
        basis = sa
        path_a = path_a.coeffs if isinstance(path_a, SamplePath) else path_a
        path_b = path_b.coeffs if isinstance(path_b, SamplePath) else path_b
    if basis is None:
        raise MeshMismatch("a basis is required to evaluate coefficient paths")
    Phi = spec.mesh.basis(basis)
    return spec.from_fields(Phi @ path_a, Phi @ path_b)
