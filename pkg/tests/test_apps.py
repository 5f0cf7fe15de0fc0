import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spectral_sed import apps
from spectral_sed.functionals import Laplacian, LineIntegral, PartialDerivative, PointEval, Segment
from spectral_sed.gp import Dataset, condition

# -- Poisson source ------------------------------------------------------------------


@given(st.floats(-1, 1))
def test_poisson_source_vanishes_on_axis(x2):
    assert apps.poisson_source([0.0, x2]) == 0.0


@given(st.floats(-1, 1), st.floats(-1, 1))
def test_poisson_source_nonpositive(x1, x2):
    assert apps.poisson_source([x1, x2]) <= 0.0


def test_poisson_source_frozen_value():
    # -320 exp(-10.24), 30-digit mpmath value
    assert apps.poisson_source([1.0, 0.5]) == pytest.approx(-0.0114281118853232694, rel=1e-14)


def test_poisson_blackbox_rejects_other_functionals():
    box = apps.poisson_blackbox()
    assert box([Laplacian(np.array([1.0, 0.5]))])[0] == pytest.approx(-0.0114281118853232694)
    with pytest.raises(TypeError):
        box([PointEval(np.array([0.0, 0.0]))])


# -- tomography phantom ------------------------------------------------------------------

def test_phantom_outside_disc_is_zero():
    seg = Segment(np.array([-1.0, -0.5]), np.array([1.0, -0.5]))
    assert apps.phantom_line_integrals([seg])[0] == 0.0


def test_phantom_diameter_chord():
    seg = Segment(np.array([-1.0, 0.4]), np.array([1.0, 0.4]))
    assert apps.phantom_line_integrals([seg])[0] == pytest.approx(0.6, abs=0.01)


@given(st.floats(0, np.pi), st.floats(-1, 1), st.floats(-1, 1))
def test_phantom_integrals_bounded_and_reversible(theta, cx, cy):
    from spectral_sed.functionals import parallel_line_batch
    segs = parallel_line_batch(theta, np.array([cx, cy]), apps.TOMO_IMAGE, 9, 0.03)
    if not segs:
        return
    fwd = apps.phantom_line_integrals(segs)
    rev = apps.phantom_line_integrals([Segment(s.end, s.start) for s in segs])
    assert np.all((fwd >= 0) & (fwd <= 2 * apps.PHANTOM_RADIUS + 0.02))
    assert np.allclose(fwd, rev, atol=1e-12)


def test_phantom_blackbox_counts():
    box = apps.phantom_blackbox()
    box([LineIntegral(Segment(np.array([-1.0, 0.4]), np.array([1.0, 0.4])))] * 3)
    assert box.calls == 3


# -- Lotka-Volterra ------------------------------------------------------------------------

def test_lv_shipped_data_matches_seed():
    data, seed = apps.load_lv_data()
    assert seed == apps.LV_DATA_SEED and data.shape == (101, 2)
    assert np.allclose(data, apps.generate_lv_data(seed), atol=1e-12)


def test_lv_gradient_matches_finite_differences():
    data = apps.load_lv_data()[0]
    pts = np.random.default_rng(3).uniform(apps.LV_DESIGN.lower, apps.LV_DESIGN.upper, (10, 2))
    h = 1e-5
    for x in pts:
        v, g1, g2 = apps.lv_loglik_and_grad(x, data)
        probes = np.array([x + h * e for e in np.eye(2)] + [x - h * e for e in np.eye(2)])
        ll = apps.lv_grid_loglik(probes, data)
        fd = np.array([ll[0] - ll[2], ll[1] - ll[3]]) / (2 * h)
        assert v == pytest.approx(apps.lv_grid_loglik(x[None], data)[0], rel=1e-12)
        assert np.linalg.norm(np.array([g1, g2]) - fd) <= 1e-4 * np.linalg.norm(fd)


def test_lv_noise_free_maximiser_is_truth():
    clean = apps.lv_trajectory(np.float64(0.5), np.float64(0.1))
    mesh = apps.lv_mesh()
    _, x = apps.lv_grid_optimum(clean, mesh)
    cell = apps.LV_DESIGN.lengths / 39
    assert np.all(np.abs(x - np.array([0.5, 0.1])) <= cell)


def test_lv_divergence_raises():
    with pytest.raises(apps.IntegratorDiverged):
        apps.lv_trajectory(np.float64(50.0), np.float64(-5.0))


def test_lv_blackbox_answers_values_and_partials():
    box = apps.lv_blackbox()
    x = np.array([0.5, 0.1])
    v = box([PointEval(x), PartialDerivative(x, (1, 0)), PartialDerivative(x, (0, 1))])
    ref = apps.lv_loglik_and_grad(x)
    assert np.allclose(v, ref) and box.calls == 3
    with pytest.raises(TypeError):
        box([PartialDerivative(x, (2, 0))])


# -- configurations ------------------------------------------------------------------------

@pytest.mark.parametrize("build", [apps.pde_config, apps.tomography_config, apps.lv_config])
def test_configs_build_valid_models(build):
    cfg = build(seed=0, m_per_dim=6, iterations=1)
    model = cfg.model()
    assert model.spec.m == 36
    fs = cfg.family.functionals(np.asarray(cfg.initial_design[0], dtype=float))
    assert fs
    assert all(model.spec.domain.contains(p) for p in cfg.loss.mesh.points)


def test_initial_designs_are_midpoints():
    assert np.allclose(apps.pde_config().initial_design[0], [0.0, 0.0])
    assert np.allclose(apps.lv_config().initial_design[0], apps.LV_DESIGN.midpoint)


def test_reconstruction_metric_is_zero_for_exact_reference():
    cfg = apps.tomography_config(m_per_dim=6)
    post = condition(cfg.model(), Dataset())
    err = cfg.metrics["reconstruction_error"](post, Dataset())
    # prior mean is zero, so exp(3*0)=1 against exp(3*phantom)
    mesh = cfg.loss.mesh
    expected = np.sqrt(np.sum(mesh.weights * (1 - np.exp(3 * apps.phantom(mesh.points))) ** 2))
    assert err == pytest.approx(expected, rel=1e-12)
