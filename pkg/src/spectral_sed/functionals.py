"""Continuous linear functionals and their action on the sine basis.

Coordinates held by a functional may be plain arrays or duals; every row
computation is written so that derivatives with respect to the design
parameters propagate through evaluation points, derivative factors and
line-integral endpoints.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import BasisSpec, BoxDomain, basis_values
from .numerics import Dual, stack, value_of

GAUSS_ORDER = 64
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(GAUSS_ORDER)


class OutOfDomain(ValueError):
    pass


class UnsupportedOrder(ValueError):
    pass


def _as_point(x):
    return x if isinstance(x, Dual) else np.asarray(x, dtype=float)


def _check_inside(x, spec: BasisSpec, what: str):
    xv = np.asarray(value_of(x), dtype=float)
    if xv.shape[-1] != spec.d:
        raise OutOfDomain(f"{what} has dimension {xv.shape[-1]}, basis has {spec.d}")
    if not spec.domain.contains(xv):
        raise OutOfDomain(f"{what} {xv.tolist()} lies outside {spec.domain}")


@dataclass(frozen=True, eq=False)
class PointEval:
    x: object
    order = 0

    def row(self, spec: BasisSpec):
        x = _as_point(self.x)
        _check_inside(x, spec, "evaluation point")
        return basis_values(spec, x.reshape((1, spec.d)))[0]

    def describe(self) -> dict:
        return {"kind": "point", "x": np.asarray(value_of(self.x)).tolist()}


@dataclass(frozen=True, eq=False)
class PartialDerivative:
    x: object
    alpha: tuple[int, ...]

    @property
    def order(self) -> int:
        return int(sum(self.alpha))

    def row(self, spec: BasisSpec):
        if any(a < 0 for a in self.alpha) or len(self.alpha) != spec.d:
            raise UnsupportedOrder(f"bad multi-index {self.alpha} for d={spec.d}")
        if self.order > 2:
            raise UnsupportedOrder(f"derivative order {self.order} exceeds 2")
        x = _as_point(self.x)
        _check_inside(x, spec, "derivative point")
        return basis_values(spec, x.reshape((1, spec.d)), self.alpha)[0]

    def describe(self) -> dict:
        return {"kind": "derivative", "x": np.asarray(value_of(self.x)).tolist(), "alpha": list(self.alpha)}


@dataclass(frozen=True, eq=False)
class Laplacian:
    x: object
    order = 2

    def row(self, spec: BasisSpec):
        x = _as_point(self.x)
        _check_inside(x, spec, "Laplacian point")
        # eigen relation: Laplacian phi_j = -lambda_j phi_j
        return basis_values(spec, x.reshape((1, spec.d)))[0] * (-spec.eigenvalues())

    def describe(self) -> dict:
        return {"kind": "laplacian", "x": np.asarray(value_of(self.x)).tolist()}


@dataclass(frozen=True, eq=False)
class Segment:
    start: object
    end: object

    @property
    def length(self):
        diff = _as_point(self.end) - _as_point(self.start)
        return np.sqrt((diff * diff).sum())

    def reversed(self) -> "Segment":
        return Segment(self.end, self.start)

    def point_at(self, t):
        """Point at arc-length fraction ``t`` in [0, 1]."""
        s, e = _as_point(self.start), _as_point(self.end)
        return s + (e - s) * t


@dataclass(frozen=True, eq=False)
class LineIntegral:
    segment: Segment
    order = 0

    def row(self, spec: BasisSpec):
        s, e = _as_point(self.segment.start), _as_point(self.segment.end)
        _check_inside(s, spec, "segment start")
        _check_inside(e, spec, "segment end")
        length = self.segment.length
        if float(value_of(length)) == 0.0:
            return np.zeros(spec.m)
        t = 0.5 * (_GL_NODES + 1.0)
        pts = s.reshape((1, spec.d)) + (e - s).reshape((1, spec.d)) * t[:, None]
        vals = basis_values(spec, pts)
        # arc-length parametrisation: |r'(t)| = length on [0, 1]
        return (_GL_WEIGHTS * 0.5) @ vals * length

    def describe(self) -> dict:
        return {
            "kind": "line",
            "start": np.asarray(value_of(self.segment.start)).tolist(),
            "end": np.asarray(value_of(self.segment.end)).tolist(),
        }


def apply_to_basis(functional, j, spec: BasisSpec) -> float:
    """Action of ``functional`` on the single eigenfunction with multi-index ``j``."""
    j = np.asarray(j, dtype=int)
    hits = np.flatnonzero(np.all(spec.ordering == j, axis=1))
    if hits.size == 0:
        raise IndexError(f"multi-index {j.tolist()} not in basis")
    return float(value_of(functional.row(spec))[hits[0]])


def basis_matrix(functionals, spec: BasisSpec):
    """Stack functional rows into an ``(n, m)`` matrix (a dual if any row is)."""
    if len(functionals) == 0:
        return np.zeros((0, spec.m))
    return stack([f.row(spec) for f in functionals])


def clip_line_to_box(theta, center, box: BoxDomain, parallel_tol: float = 1e-12):
    """Maximal chord of the line through ``center`` with direction ``(cos theta, sin theta)``.

    Returns ``None`` when the line misses the box or touches it in a single point.
    """
    if box.d != 2:
        raise ValueError("line clipping is defined for 2-d boxes")
    c = _as_point(center)
    direction = [np.cos(theta), np.sin(theta)]
    t_lo, t_hi = None, None
    for k in range(2):
        dk = direction[k]
        ck = c[k]
        a, b = box.lower[k], box.upper[k]
        if abs(float(value_of(dk))) < parallel_tol:
            if not a <= float(value_of(ck)) <= b:
                return None
            continue
        t1 = (a - ck) / dk
        t2 = (b - ck) / dk
        lo, hi = (t1, t2) if value_of(t1) <= value_of(t2) else (t2, t1)
        if t_lo is None or value_of(lo) > value_of(t_lo):
            t_lo = lo
        if t_hi is None or value_of(hi) < value_of(t_hi):
            t_hi = hi
    if float(value_of(t_hi)) - float(value_of(t_lo)) <= 1e-12:
        return None
    dvec = stack(direction)
    return Segment(c + dvec * t_lo, c + dvec * t_hi)


def parallel_line_batch(theta, center, box: BoxDomain, count: int = 9, spacing: float = 0.03):
    """Clipped parallel chords at perpendicular offsets ``(-(count//2) .. count//2) * spacing``."""
    if count % 2 != 1:
        raise ValueError("count must be odd")
    c = _as_point(center)
    normal = stack([-np.sin(theta), np.cos(theta)])
    out = []
    for k in range(-(count // 2), count // 2 + 1):
        seg = clip_line_to_box(theta, c + normal * (k * spacing), box)
        if seg is not None:
            out.append(seg)
    return out

