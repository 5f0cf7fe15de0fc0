import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spectral_sed.basis import BasisSpec, BoxDomain, basis_values
from spectral_sed.functionals import OutOfDomain
from spectral_sed.numerics import Dual
from spectral_sed.qoi import GridMax, Identity, LossSpec, Mesh, MeshMismatch, OutputWarp, SamplePath, eval_qoi, loss

UNIT = BoxDomain((0.0, 0.0), (1.0, 1.0))
SPEC = BasisSpec(UNIT, (4, 4))


def test_mesh_weights_and_validation():
    mesh = Mesh.uniform(UNIT, 15)
    assert len(mesh) == 225 and np.allclose(mesh.weights, 1 / 14 ** 2)
    with pytest.raises(ValueError):
        Mesh(np.zeros((2, 2)), np.array([1.0, -1.0]))


def test_eval_qoi_examples():
    mesh = Mesh.uniform(UNIT, 21)
    zero = SamplePath(np.zeros(SPEC.m), SPEC)
    assert np.allclose(eval_qoi(OutputWarp.exponential(mesh), zero), 1.0)
    single = np.zeros(SPEC.m)
    single[0] = 1.0
    value, idx = eval_qoi(GridMax(mesh), SamplePath(single, SPEC))
    assert value == pytest.approx(2.0) and np.allclose(mesh.points[idx], [0.5, 0.5])


def test_gridmax_argmax_shift_invariant_and_ties(rng):
    q = GridMax(Mesh.uniform(UNIT, 5))
    v = rng.standard_normal(25)
    assert q.locate(v)[1] == q.locate(v + 3.7)[1]
    assert q.locate(np.ones(25))[1] == 0


def test_mesh_outside_domain():
    mesh = Mesh.uniform(BoxDomain((0.0, 0.0), (2.0, 1.0)), 5)
    with pytest.raises(OutOfDomain):
        mesh.basis(SPEC)


def test_loss_identity_single_coefficient():
    mesh = Mesh.uniform(UNIT, 15)
    spec = LossSpec(Identity(mesh))
    a = np.zeros(SPEC.m)
    b = a.copy()
    b[0] = 0.3
    phi1 = basis_values(SPEC, mesh.points)[:, 0]
    # hand expansion: (Delta phi_1)^2 weighted
    expected = 0.3 ** 2 * np.sum(mesh.weights * phi1 ** 2)
    assert loss(spec, SamplePath(a, SPEC), SamplePath(b, SPEC)) == pytest.approx(expected, abs=1e-10)


@given(st.integers(0, 2 ** 31), st.sampled_from(["id", "warp", "max"]))
def test_loss_nonnegative_symmetric_and_zero_diagonal(seed, kind):
    rng = np.random.default_rng(seed)
    mesh = Mesh.uniform(UNIT, 9)
    q = {"id": Identity(mesh), "warp": OutputWarp.exponential(mesh, 0.5), "max": GridMax(mesh)}[kind]
    spec = LossSpec(q)
    a, b = rng.standard_normal(SPEC.m), rng.standard_normal(SPEC.m)
    lab = loss(spec, a, b, SPEC)
    assert lab >= 0 and lab == pytest.approx(loss(spec, b, a, SPEC), rel=1e-12)
    assert loss(spec, a, a, SPEC) == 0


@pytest.mark.parametrize("kind", ["id", "warp", "max"])
def test_loss_gradient_matches_fd(kind, rng):
    mesh = Mesh.uniform(UNIT, 9)
    q = {"id": Identity(mesh), "warp": OutputWarp.exponential(mesh, 3.0), "max": GridMax(mesh)}[kind]
    spec = LossSpec(q)
    a, b = rng.standard_normal(SPEC.m) * 0.3, rng.standard_normal(SPEC.m) * 0.3
    out = loss(spec, Dual.variables(a), b, SPEC)
    h = 1e-6
    fd = np.array([(loss(spec, a + h * e, b, SPEC) - loss(spec, a - h * e, b, SPEC)) / (2 * h) for e in np.eye(SPEC.m)])
    assert np.allclose(out.tangent, fd, rtol=1e-5, atol=1e-8 * max(1, np.abs(fd).max()))


def test_riemann_refinement_is_stable():
    rng = np.random.default_rng(4)
    spec = BasisSpec(UNIT, (3, 3))
    a, b = rng.standard_normal(spec.m), rng.standard_normal(spec.m)
    coarse = loss(LossSpec(Identity(Mesh.uniform(UNIT, 15))), a, b, spec)
    fine = loss(LossSpec(Identity(Mesh.uniform(UNIT, 61))), a, b, spec)
    assert abs(coarse - fine) / fine < 0.01


def test_loss_basis_mismatch():
    mesh = Mesh.uniform(UNIT, 5)
    other = BasisSpec(UNIT, (3, 3))
    with pytest.raises(MeshMismatch):
        loss(LossSpec(Identity(mesh)), SamplePath(np.zeros(SPEC.m), SPEC), SamplePath(np.zeros(other.m), other))
    with pytest.raises(MeshMismatch):
        loss(LossSpec(Identity(mesh)), np.zeros(3), np.zeros(3))
