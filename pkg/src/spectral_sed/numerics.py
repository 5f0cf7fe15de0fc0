"""Dense PSD linear algebra, forward-mode dual numbers, Adam and seeded normal streams.

The :class:`Dual` type is array-valued: ``value`` has any shape and ``tangent``
carries one leading axis per differentiated parameter, i.e.
``tangent.shape == (p,) + value.shape``. Elementwise numpy ufuncs and
``np.matmul`` dispatch through ``__array_ufunc__`` so model code can be written
once and evaluated either on plain arrays or on duals.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg


class NotPositiveDefinite(np.linalg.LinAlgError):
    pass


class DimensionMismatch(ValueError):
    pass


class NonFinite(FloatingPointError):
    pass


# ---------------------------------------------------------------------------
# Cholesky with jitter escalation
# ---------------------------------------------------------------------------

def cholesky(A, jitter: float = 0.0, retries: int = 3, factor: float = 10.0) -> np.ndarray:
    """Lower Cholesky factor of ``A + jitter * I``.

    On failure the jitter is escalated by ``factor`` (starting from a small
    multiple of the diagonal scale when ``jitter`` is zero) up to ``retries``
    more times before :class:`NotPositiveDefinite` is raised.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {A.shape}")
    if jitter < 0:
        raise ValueError("jitter must be nonnegative")
    n = A.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    eye = np.eye(n)
    current = float(jitter)
    for attempt in range(retries + 1):
        try:
            L = np.linalg.cholesky(A + current * eye)
            if np.all(np.isfinite(L)):
                return L
        except np.linalg.LinAlgError:
            pass
        if attempt == retries:
            break
        if current == 0.0:
            current = 1e-10 * max(float(np.max(np.abs(np.diag(A)))), 1.0)
        else:
            current *= factor
    raise NotPositiveDefinite(
        f"matrix of size {n} not positive definite after jitter escalation to {current:.3g}"
    )


def solve_psd(L: np.ndarray, b) -> np.ndarray:
    """Solve ``(L L^T) x = b`` by forward then back substitution."""
    L = np.asarray(L, dtype=float)
    b = np.asarray(b, dtype=float)
    if b.shape[0] != L.shape[0]:
        raise DimensionMismatch(f"factor has size {L.shape[0]}, right-hand side {b.shape[0]}")
    if L.shape[0] == 0:
        return np.zeros_like(b)
    w = scipy.linalg.solve_triangular(L, b, lower=True)
    return scipy.linalg.solve_triangular(L.T, w, lower=False)


# ---------------------------------------------------------------------------
# Forward-mode dual numbers
# ---------------------------------------------------------------------------

def _expand(t: np.ndarray, vndim: int, ndim: int) -> np.ndarray:
    # insert broadcast axes between the tangent axis and the value axes
    if vndim == ndim:
        return t
    return t.reshape((t.shape[0],) + (1,) * (ndim - vndim) + t.shape[1:])


def value_of(x):
    return x.value if isinstance(x, Dual) else x


class Dual:
    __array_priority__ = 1000

    def __init__(self, value, tangent):
        self.value = np.asarray(value, dtype=float)
        self.tangent = np.asarray(tangent, dtype=float)
        if self.tangent.shape[1:] != self.value.shape:
            self.tangent = np.broadcast_to(
                _expand(self.tangent, self.tangent.ndim - 1, self.value.ndim),
                (self.tangent.shape[0],) + self.value.shape,
            ).copy()

    @classmethod
    def variables(cls, x) -> "Dual":
        """Seed a vector of independent variables (identity tangents)."""
        x = np.asarray(x, dtype=float)
        if x.ndim != 1:
            raise ValueError("variables() expects a 1-d vector")
        return cls(x, np.eye(x.size))

    @classmethod
    def constant(cls, x, p: int) -> "Dual":
        x = np.asarray(x, dtype=float)
        return cls(x, np.zeros((p,) + x.shape))

    # -- array protocol ----------------------------------------------------
    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def size(self):
        return self.value.size

    @property
    def nparams(self):
        return self.tangent.shape[0]

    def __len__(self):
        return len(self.value)

    def __repr__(self):
        return f"Dual(value={self.value!r}, tangent={self.tangent!r})"

    def __getitem__(self, idx):
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Dual(self.value[idx], self.tangent[(slice(None),) + idx])

    def __float__(self):
        return float(self.value)

    @property
    def T(self):
        return self.transpose()

    def transpose(self, *axes):
        if not axes:
            axes = tuple(range(self.ndim))[::-1]
        elif len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return Dual(self.value.transpose(axes), self.tangent.transpose((0,) + tuple(a + 1 for a in axes)))

    def swapaxes(self, a, b):
        axes = list(range(self.ndim))
        axes[a], axes[b] = axes[b], axes[a]
        return self.transpose(tuple(axes))

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        v = self.value.reshape(shape)
        return Dual(v, self.tangent.reshape((self.nparams,) + v.shape))

    def _axis(self, axis):
        if axis is None:
            return tuple(range(1, self.ndim + 1))
        if isinstance(axis, tuple):
            return tuple(a + 1 if a >= 0 else a for a in axis)
        return axis + 1 if axis >= 0 else axis

    def sum(self, axis=None, keepdims=False):
        return Dual(self.value.sum(axis=axis, keepdims=keepdims),
                    self.tangent.sum(axis=self._axis(axis), keepdims=keepdims))

    def mean(self, axis=None, keepdims=False):
        n = self.value.size if axis is None else np.prod(
            [self.value.shape[a] for a in (axis if isinstance(axis, tuple) else (axis,))])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def max(self, axis=-1):
        """Maximum along ``axis``; the derivative flows through the first argmax."""
        idx = np.argmax(self.value, axis=axis)
        v = np.take_along_axis(self.value, np.expand_dims(idx, axis), axis=axis)
        ax = axis if axis >= 0 else self.ndim + axis
        t = np.take_along_axis(self.tangent, np.expand_dims(idx, ax)[None], axis=ax + 1)
        return Dual(np.squeeze(v, axis=ax), np.squeeze(t, axis=ax + 1))

    # -- arithmetic ----------------------------------------------------------
    def __add__(self, o):
        return np.add(self, o)

    __radd__ = __add__

    def __sub__(self, o):
        return np.subtract(self, o)

    def __rsub__(self, o):
        return np.subtract(o, self)

    def __mul__(self, o):
        return np.multiply(self, o)

    __rmul__ = __mul__

    def __truediv__(self, o):
        return np.divide(self, o)

    def __rtruediv__(self, o):
        return np.divide(o, self)

    def __neg__(self):
        return Dual(-self.value, -self.tangent)

    def __pow__(self, o):
        return np.power(self, o)

    def __matmul__(self, o):
        return np.matmul(self, o)

    def __rmatmul__(self, o):
        return np.matmul(o, self)

    def __abs__(self):
        return np.abs(self)

    # comparisons act on the value so duals can drive control flow
    def __lt__(self, o):
        return self.value < value_of(o)

    def __le__(self, o):
        return self.value <= value_of(o)

    def __gt__(self, o):
        return self.value > value_of(o)

    def __ge__(self, o):
        return self.value >= value_of(o)

    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        if method != "__call__" or kwargs.get("out") is not None:
            return NotImplemented
        rule = _UNARY.get(ufunc)
        if rule is not None and len(inputs) == 1:
            x = inputs[0]
            v = ufunc(x.value)
            return Dual(v, x.tangent * rule(x.value, v))
        if ufunc is np.matmul:
            return _matmul(*inputs)
        rule = _BINARY.get(ufunc)
        if rule is None:
            return NotImplemented
        a, b = inputs
        av, bv = value_of(a), value_of(b)
        v = ufunc(av, bv)
        da, db = rule(np.asarray(av, dtype=float), np.asarray(bv, dtype=float), v)
        nd = np.ndim(v)
        p = a.nparams if isinstance(a, Dual) else b.nparams
        t = None
        for x, dx in ((a, da), (b, db)):
            if not isinstance(x, Dual):
                continue
            tx = _expand(x.tangent, x.ndim, nd)
            if dx is not None:
                tx = tx * dx
            t = tx if t is None else t + tx
        return Dual(v, np.broadcast_to(t, (p,) + np.shape(v)))


def _pow_rule(a, b, v):
    da = b * np.power(a, b - 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        db = np.where(a > 0, v * np.log(np.where(a > 0, a, 1.0)), 0.0)
    return da, db


def _max_rule(a, b, v):
    pick = a >= b
    return pick.astype(float), (~pick).astype(float)


def _min_rule(a, b, v):
    pick = a <= b
    return pick.astype(float), (~pick).astype(float)


_UNARY: dict = {
    np.sin: lambda x, v: np.cos(x),
    np.cos: lambda x, v: -np.sin(x),
    np.exp: lambda x, v: v,
    np.log: lambda x, v: 1.0 / x,
    np.sqrt: lambda x, v: 0.5 / v,
    np.square: lambda x, v: 2.0 * x,
    np.abs: lambda x, v: np.sign(x),
    np.negative: lambda x, v: -np.ones_like(x),
    np.tanh: lambda x, v: 1.0 - v * v,
    np.arctan: lambda x, v: 1.0 / (1.0 + x * x),
    np.log1p: lambda x, v: 1.0 / (1.0 + x),
    np.expm1: lambda x, v: v + 1.0,
}

_BINARY: dict = {
    np.add: lambda a, b, v: (None, None),
    np.subtract: lambda a, b, v: (None, -1.0),
    np.multiply: lambda a, b, v: (b, a),
    np.divide: lambda a, b, v: (1.0 / b, -v / b),
    np.true_divide: lambda a, b, v: (1.0 / b, -v / b),
    np.power: _pow_rule,
    np.maximum: _max_rule,
    np.minimum: _min_rule,
}


def _matmul(a, b):
    av, bv = value_of(a), value_of(b)
    v = np.matmul(av, bv)
    terms = []
    # tangent axis sits in front, so it acts as a batch axis for matmul
    nd = max(np.ndim(av), np.ndim(bv))
    if isinstance(a, Dual):
        ta = a.tangent
        if a.ndim == 1:
            if np.ndim(bv) > 2:
                raise DimensionMismatch("1-d dual @ batched matrix is not supported")
            terms.append(ta @ bv)
        elif a.ndim == 2 and np.ndim(bv) == 2:
            # fold the tangent axis into rows so a single BLAS call does the work
            p_, n_, _ = ta.shape
            terms.append((np.ascontiguousarray(ta).reshape(p_ * n_, -1) @ bv).reshape(p_, n_, -1))
        else:
            terms.append(np.matmul(_expand(ta, a.ndim, nd), bv))
    if isinstance(b, Dual):
        tb = b.tangent
        if b.ndim == 1:
            terms.append(np.matmul(av, tb[..., None])[..., 0])
        elif b.ndim == 2 and np.ndim(av) == 2:
            p_, k_, l_ = tb.shape
            flat = np.ascontiguousarray(np.moveaxis(tb, 0, 1)).reshape(k_, p_ * l_)
            terms.append(np.moveaxis((av @ flat).reshape(-1, p_, l_), 1, 0))
        else:
            terms.append(np.matmul(av, _expand(tb, b.ndim, nd)))
    p = a.nparams if isinstance(a, Dual) else b.nparams
    t = terms[0] if len(terms) == 1 else terms[0] + terms[1]
    return Dual(v, np.broadcast_to(t, (p,) + np.shape(v)))


def stack(items: Sequence, axis: int = 0):
    duals = [x for x in items if isinstance(x, Dual)]
    if not duals:
        return np.stack([np.asarray(x, dtype=float) for x in items], axis=axis)
    p = duals[0].nparams
    ds = [x if isinstance(x, Dual) else Dual.constant(x, p) for x in items]
    ax = axis if axis >= 0 else ds[0].ndim + 1 + axis
    return Dual(np.stack([d.value for d in ds], axis=ax), np.stack([d.tangent for d in ds], axis=ax + 1))


def concatenate(items: Sequence, axis: int = 0):
    duals = [x for x in items if isinstance(x, Dual)]
    if not duals:
        return np.concatenate([np.asarray(x, dtype=float) for x in items], axis=axis)
    p = duals[0].nparams
    ds = [x if isinstance(x, Dual) else Dual.constant(x, p) for x in items]
    ax = axis if axis >= 0 else ds[0].ndim + axis
    return Dual(np.concatenate([d.value for d in ds], axis=ax),
                np.concatenate([d.tangent for d in ds], axis=ax + 1))


def solve(A, B):
    """Solve ``A X = B`` for small dense systems; dual-aware in both arguments.

    Uses ``dX = A^{-1} (dB - dA X)``.
    """
    Av, Bv = value_of(A), value_of(B)
    lu = scipy.linalg.lu_factor(Av)
    X = scipy.linalg.lu_solve(lu, Bv)
    if not isinstance(A, Dual) and not isinstance(B, Dual):
        return X
    p = A.nparams if isinstance(A, Dual) else B.nparams
    rhs = np.zeros((p,) + X.shape)
    if isinstance(B, Dual):
        rhs = rhs + B.tangent
    if isinstance(A, Dual):
        rhs = rhs - np.matmul(A.tangent, X if X.ndim > 1 else X[:, None]).reshape(rhs.shape)
    flat = np.moveaxis(rhs, 0, -1).reshape(X.shape[0], -1)
    dX = scipy.linalg.lu_solve(lu, flat).reshape(X.shape + (p,))
    return Dual(X, np.moveaxis(dX, -1, 0))


def psd_solve_logdet(K, y, jitter: float = 0.0):
    """Return ``(y^T K^{-1} y, log det K)`` for PSD ``K``; dual-aware in ``K`` and ``y``.

    ``d(y^T K^{-1} y) = 2 a^T dy - a^T dK a`` and ``d log det K = tr(K^{-1} dK)``
    with ``a = K^{-1} y``.
    """
    Kv, yv = value_of(K), value_of(y)
    L = cholesky(Kv, jitter)
    a = solve_psd(L, yv)
    quad = float(yv @ a)
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    if not isinstance(K, Dual) and not isinstance(y, Dual):
        return quad, logdet
    p = K.nparams if isinstance(K, Dual) else y.nparams
    dquad = np.zeros(p)
    dlogdet = np.zeros(p)
    if isinstance(y, Dual):
        dquad += 2.0 * (y.tangent @ a)
    if isinstance(K, Dual):
        Kinv = solve_psd(L, np.eye(Kv.shape[0]))
        dquad -= np.einsum("i,pij,j->p", a, K.tangent, a)
        dlogdet += np.einsum("ij,pji->p", Kinv, K.tangent)
    return Dual(quad, dquad), Dual(logdet, dlogdet)


def grad(f: Callable, x) -> tuple[float, np.ndarray]:
    """Value and gradient of a scalar function by forward mode (one tangent slot per coordinate)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = f(Dual.variables(x))
    if not isinstance(out, Dual):
        val = float(out)
        g = np.zeros(x.size)
    else:
        val = float(out.value)
        g = out.tangent.reshape(x.size).copy()
    if not (np.isfinite(val) and np.all(np.isfinite(g))):
        raise NonFinite(f"non-finite value or gradient at x={x}")
    return val, g


# ---------------------------------------------------------------------------
# Optimisers
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: np.ndarray | None = None
    v: np.ndarray | None = None


def adam_step(state: AdamState, params, gradient) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam descent step. Returns new params; ``state`` is updated in place."""
    params = np.asarray(params, dtype=float)
    g = np.asarray(gradient, dtype=float)
    if params.shape != g.shape:
        raise DimensionMismatch(f"params {params.shape} vs gradient {g.shape}")
    if state.m is None:
        state.m = np.zeros_like(params)
        state.v = np.zeros_like(params)
    elif state.m.shape != params.shape:
        raise DimensionMismatch("Adam moments do not match parameter shape")
    state.step += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * g
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * g * g
    mhat = state.m / (1.0 - state.beta1 ** state.step)
    vhat = state.v / (1.0 - state.beta2 ** state.step)
    return params - state.lr * mhat / (np.sqrt(vhat) + state.eps), state


@dataclass
class SGDState:
    lr: float = 1e-3
    step: int = 0


def sgd_step(state: SGDState, params, gradient) -> tuple[np.ndarray, SGDState]:
    params = np.asarray(params, dtype=float)
    g = np.asarray(gradient, dtype=float)
    if params.shape != g.shape:
        raise DimensionMismatch(f"params {params.shape} vs gradient {g.shape}")
    state.step += 1
    return params - state.lr * g, state


def make_optimizer(name: str, lr: float):
    """Return ``(state, step_fn)`` for ``'adam'`` or ``'sgd'``."""
    if name == "adam":
        return AdamState(lr=lr), adam_step
    if name == "sgd":
        return SGDState(lr=lr), sgd_step
    raise ValueError(f"unknown optimizer {name!r}")


# ---------------------------------------------------------------------------
# Random streams
# ---------------------------------------------------------------------------

@dataclass
class RngStream:
    """Seeded Gaussian source; ``spawn`` yields independent child streams."""

    seed: int
    _gen: np.random.Generator = field(init=False, repr=False)
    _seq: np.random.SeedSequence = field(init=False, repr=False)

    def __post_init__(self):
        self._seq = np.random.SeedSequence(int(self.seed) & 0xFFFFFFFFFFFFFFFF)
        self._gen = np.random.Generator(np.random.PCG64(self._seq))

    @classmethod
    def _from_seq(cls, seq: np.random.SeedSequence) -> "RngStream":
        obj = cls.__new__(cls)
        obj.seed = int(seq.generate_state(1, np.uint64)[0])
        obj._seq = seq
        obj._gen = np.random.Generator(np.random.PCG64(seq))
        return obj

    def spawn(self, n: int) -> list["RngStream"]:
        return [RngStream._from_seq(s) for s in self._seq.spawn(n)]

    def normal(self, size) -> np.ndarray:
        return self._gen.standard_normal(size)

    def uniform(self, low, high, size=None) -> np.ndarray:
        return self._gen.uniform(low, high, size)

    def integers(self, high: int) -> int:
        return int(self._gen.integers(high))


def normal_stream(rng: RngStream, n: int) -> np.ndarray:
    if n < 0:
        raise ValueError("n must be nonnegative")
    return rng.normal(n)
