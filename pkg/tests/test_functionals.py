import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spectral_sed.basis import BasisSpec, BoxDomain, eigenfunction
from spectral_sed.functionals import (Laplacian, LineIntegral, OutOfDomain, PartialDerivative, PointEval, Segment,
                                      UnsupportedOrder, apply_to_basis, basis_matrix, clip_line_to_box,
                                      parallel_line_batch)
from spectral_sed.numerics import Dual


def test_point_examples(unit_interval):
    spec = BasisSpec(unit_interval, (3,))
    assert apply_to_basis(Laplacian(np.array([0.5])), (1,), spec) == pytest.approx(-math.pi ** 2 * math.sqrt(2))
    assert apply_to_basis(PartialDerivative(np.array([0.0]), (1,)), (1,), spec) == pytest.approx(math.sqrt(2) * math.pi)
    seg = Segment(np.array([0.3]), np.array([0.3]))
    assert apply_to_basis(LineIntegral(seg), (2,), spec) == 0.0


def test_basis_matrix_shapes(spec2):
    assert basis_matrix([], spec2).shape == (0, spec2.m)
    x = np.array([0.2, -0.4])
    B = basis_matrix([PointEval(x), PointEval(x)], spec2)
    assert np.array_equal(B[0], B[1])
    assert np.allclose(B[0], [eigenfunction(j, spec2.domain, x) for j in spec2.ordering])


def test_out_of_domain_and_bad_orders(spec2):
    with pytest.raises(OutOfDomain):
        PointEval(np.array([1.5, 0.0])).row(spec2)
    with pytest.raises(UnsupportedOrder):
        PartialDerivative(np.array([0.0, 0.0]), (2, 1)).row(spec2)
    with pytest.raises(UnsupportedOrder):
        PartialDerivative(np.array([0.0, 0.0]), (1,)).row(spec2)


@given(st.integers(0, 2), st.integers(0, 2), st.floats(-0.9, 0.9), st.floats(-0.9, 0.9), st.integers(0, 63))
def test_partial_derivative_matches_fd(a1, a2, x1, x2, jidx):
    if a1 + a2 > 2:
        a1, a2 = 1, 1
    box = BoxDomain((-1.0, -1.0), (1.0, 1.0))
    spec = BasisSpec(box, (8, 8))
    j = spec.ordering[jidx]
    x = np.array([x1, x2])
    h = 1e-4

    def phi(y):
        return eigenfunction(j, box, y)

    f = phi
    for k, a in enumerate((a1, a2)):
        for _ in range(a):
            f = (lambda g, e: (lambda y: (g(y + h * e) - g(y - h * e)) / (2 * h)))(f, np.eye(2)[k])
    fd = f(x)
    exact = apply_to_basis(PartialDerivative(x, (a1, a2)), j, spec)
    scale = math.prod((math.pi * jj / 2) for jj, aa in zip(j, (a1, a2)) for _ in range(aa))
    assert exact == pytest.approx(fd, rel=1e-6, abs=1e-6 * max(scale, 1.0))


def test_laplacian_equals_sum_of_second_partials(spec2, rng):
    for _ in range(5):
        x = rng.uniform(-1, 1, 2)
        lap = Laplacian(x).row(spec2)
        parts = PartialDerivative(x, (2, 0)).row(spec2) + PartialDerivative(x, (0, 2)).row(spec2)
        assert np.allclose(lap, parts, rtol=1e-12, atol=1e-10)


def riemann_line(seg, j, box, n=100_000):
    # midpoint rule on the closed-form sine product, independent of the basis module
    t = (np.arange(n) + 0.5) / n
    s, e = np.asarray(seg.start), np.asarray(seg.end)
    pts = s + (e - s) * t[:, None]
    lo, L = np.asarray(box.lower), np.asarray(box.upper) - np.asarray(box.lower)
    vals = np.prod(np.sqrt(2 / L) * np.sin(np.pi * np.asarray(j) * (pts - lo) / L), axis=1)
    return vals.mean() * np.linalg.norm(e - s)


@given(st.floats(-0.9, 0.9), st.floats(-0.9, 0.9), st.floats(-0.9, 0.9), st.floats(-0.9, 0.9), st.integers(0, 24))
def test_line_integral_matches_riemann(x1, y1, x2, y2, jidx):
    box = BoxDomain((-1.0, -1.0), (1.0, 1.0))
    spec = BasisSpec(box, (5, 5))
    j = spec.ordering[jidx]
    seg = Segment(np.array([x1, y1]), np.array([x2, y2]))
    if seg.length < 1e-3:
        return
    gl = apply_to_basis(LineIntegral(seg), j, spec)
    ref = riemann_line(seg, j, box)
    assert gl == pytest.approx(ref, rel=1e-6, abs=1e-6 * seg.length)


def test_line_integral_additive_and_reversible(spec2):
    a, b, c = np.array([-0.8, -0.3]), np.array([0.1, 0.2]), np.array([0.7, 0.9])
    whole = LineIntegral(Segment(a, c)).row(spec2)
    mid = a + 0.37 * (c - a)
    split = LineIntegral(Segment(a, mid)).row(spec2) + LineIntegral(Segment(mid, c)).row(spec2)
    assert np.allclose(whole, split, atol=1e-10)
    assert np.allclose(whole, LineIntegral(Segment(c, a)).row(spec2), atol=1e-12)
    del b


def test_clip_examples():
    box = BoxDomain((-1.0, -1.0), (1.0, 1.0))
    s = clip_line_to_box(0.0, np.array([0.0, 0.0]), box)
    assert np.allclose(sorted([s.start[0], s.end[0]]), [-1, 1]) and np.allclose([s.start[1], s.end[1]], 0)
    assert clip_line_to_box(math.pi / 2, np.array([2.0, 0.0]), box) is None
    s = clip_line_to_box(math.pi / 4, np.array([0.0, 0.0]), box)
    assert float(s.length) == pytest.approx(2 * math.sqrt(2))
    assert np.allclose(np.sort(np.stack([s.start, s.end]), axis=0), [[-1, -1], [1, 1]])


def test_clip_corner_tangent_is_none():
    box = BoxDomain((-1.0, -1.0), (1.0, 1.0))
    # line x + y = 2 only touches the corner (1, 1)
    assert clip_line_to_box(3 * math.pi / 4, np.array([1.0, 1.0]), box) is None


def test_parallel_batch_examples():
    box = BoxDomain((-1.0, -1.0), (1.0, 1.0))
    segs = parallel_line_batch(0.0, np.array([0.0, 0.0]), box, 9, 0.03)
    ys = sorted(float(s.start[1]) for s in segs)
    assert len(segs) == 9 and np.allclose(ys, np.arange(-4, 5) * 0.03)
    corner = parallel_line_batch(3 * math.pi / 4, np.array([1.0, 1.0]), box, 9, 0.03)
    assert len(corner) < 9
    segs = parallel_line_batch(0.7, np.array([0.2, -0.1]), box)
    dirs = [(np.asarray(s.end) - np.asarray(s.start)) / float(s.length) for s in segs]
    for d in dirs:
        assert abs(abs(d @ dirs[0]) - 1) <= 1e-12


def test_line_rows_carry_design_derivatives(spec2):
    z0 = np.array([0.7, 0.2, -0.1])

    def rows(z):
        segs = parallel_line_batch(z[0], z[1:3], spec2.domain)
        return basis_matrix([LineIntegral(s) for s in segs], spec2)

    D = rows(Dual.variables(z0))
    h = 1e-6
    for i, e in enumerate(np.eye(3)):
        fd = (rows(z0 + h * e) - rows(z0 - h * e)) / (2 * h)
        assert np.abs(D.tangent[i] - fd).max() <= 1e-6 * max(np.abs(fd).max(), 1)
