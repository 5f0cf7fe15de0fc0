import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spectral_sed.basis import (BasisSpec, BoxDomain, basis_values, eigenfunction, eigenvalue, l2_inner_product)


def test_eigenvalues_closed_form(unit_interval):
    assert eigenvalue((1,), unit_interval) == pytest.approx(math.pi ** 2)
    assert eigenvalue((1,), BoxDomain((-1.0,), (1.0,))) == pytest.approx((math.pi / 2) ** 2)
    assert eigenvalue((1, 2), BoxDomain((0.0, 0.0), (1.0, 1.0))) == pytest.approx(5 * math.pi ** 2)


def test_eigenfunction_values(unit_interval):
    assert eigenfunction((1,), unit_interval, (0.5,)) == pytest.approx(math.sqrt(2))
    assert eigenfunction((1, 1), BoxDomain((0.0, 0.0), (1.0, 1.0)), (0.5, 0.5)) == pytest.approx(2.0)


@given(st.integers(1, 6), st.integers(1, 6), st.floats(-1, 1))
def test_eigenfunction_vanishes_on_faces(j1, j2, t):
    box = BoxDomain((-1.0, 0.0), (1.0, 2.0))
    for x in [(-1.0, 1 + t), (1.0, 1 + t), (t, 0.0), (t, 2.0)]:
        assert abs(eigenfunction((j1, j2), box, x)) <= 1e-12


@given(st.integers(1, 5), st.integers(1, 5), st.floats(-0.9, 0.9), st.floats(0.1, 1.9))
def test_eigen_relation_by_finite_differences(j1, j2, x1, x2):
    box = BoxDomain((-1.0, 0.0), (1.0, 2.0))
    j, x, h = (j1, j2), np.array([x1, x2]), 1e-4
    lap = sum((eigenfunction(j, box, x + h * e) - 2 * eigenfunction(j, box, x) + eigenfunction(j, box, x - h * e)) / h ** 2
              for e in np.eye(2))
    phi = eigenfunction(j, box, x)
    assert lap == pytest.approx(-eigenvalue(j, box) * phi, rel=1e-4, abs=1e-4 * eigenvalue(j, box))


def test_orthonormality(square):
    assert l2_inner_product((2, 3), (2, 3), square, 128) == pytest.approx(1.0, abs=1e-3)
    assert abs(l2_inner_product((2, 3), (1, 3), square, 128)) <= 1e-3
    # odd symmetry about the midpoint makes this vanish at any even resolution
    assert abs(l2_inner_product((1,), (2,), BoxDomain((0.0,), (1.0,)), 64)) <= 1e-15
    with pytest.raises(ValueError):
        l2_inner_product((1,), (1,), square, 32)


def test_ordering_lexicographic_and_stable(square):
    spec = BasisSpec(square, (2, 3))
    assert spec.m == 6
    assert [tuple(j) for j in spec.ordering] == [(1, 1), (1, 2), (1, 3), (2, 1), (2, 2), (2, 3)]
    again = BasisSpec.from_dict(spec.to_dict())
    assert again == spec and np.array_equal(again.ordering, spec.ordering)


def test_basis_values_match_eigenfunction(square, rng):
    spec = BasisSpec(square, (4, 3))
    pts = rng.uniform(-1, 1, (5, 2))
    B = basis_values(spec, pts)
    for i, x in enumerate(pts):
        for k, j in enumerate(spec.ordering):
            assert B[i, k] == pytest.approx(eigenfunction(j, square, x), abs=1e-14)


def test_box_validation():
    with pytest.raises(ValueError):
        BoxDomain((0.0,), (0.0,))
    with pytest.raises(ValueError):
        BoxDomain((0.0,) * 5, (1.0,) * 5)


def test_grid_includes_faces(square):
    g = square.grid(3)
    assert g.shape == (9, 2)
    assert np.array_equal(g[0], [-1.0, -1.0]) and np.array_equal(g[-1], [1.0, 1.0])
