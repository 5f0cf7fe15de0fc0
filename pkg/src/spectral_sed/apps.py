"""Built-in black boxes and ready-made configurations for the three demonstrations."""
from __future__ import annotations

import json
import math
import time
from importlib import resources

import numpy as np
from scipy.optimize import minimize

from .acquisition import AcquisitionConfig, LineBundleFamily, PointFamily
from .basis import BoxDomain
from .engine import BlackBox, ExperimentConfig, RunRecord, design_points, fill_distance, qoi_trace, reconstruction_error
from .functionals import Laplacian, LineIntegral, PartialDerivative, PointEval
from .numerics import Dual, stack
from .qoi import GridMax, Identity, LossSpec, Mesh, OutputWarp


class IntegratorDiverged(FloatingPointError):
    pass


# ---------------------------------------------------------------------------
# Poisson source
# ---------------------------------------------------------------------------

def poisson_source(x) -> np.ndarray | float:
    """``g(x) = -320 |x1^3 exp(-(3.2 x1)^2 - (10 x2 - 5)^2)|``; vectorised over leading axes."""
    x = np.asarray(x, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    out = -320.0 * np.abs(x1 ** 3 * np.exp(-(3.2 * x1) ** 2 - (10.0 * x2 - 5.0) ** 2))
    return float(out) if out.ndim == 0 else out


def poisson_blackbox() -> BlackBox:
    def fn(functionals):
        vals = []
        for f in functionals:
            if not isinstance(f, Laplacian):
                raise TypeError(f"the Poisson black box only answers Laplacian queries, got {type(f).__name__}")
            vals.append(poisson_source(np.asarray(f.x, dtype=float)))
        return vals

    return BlackBox(fn, "poisson_source")


# ---------------------------------------------------------------------------
# Tomography phantom
# ---------------------------------------------------------------------------

PHANTOM_CENTER = (0.4, 0.4)
PHANTOM_RADIUS = 0.3
PHANTOM_NODES = 200


def phantom(x) -> np.ndarray:
    """Indicator of the disc of radius 0.3 around (0.4, 0.4)."""
    x = np.asarray(x, dtype=float)
    r2 = (x[..., 0] - PHANTOM_CENTER[0]) ** 2 + (x[..., 1] - PHANTOM_CENTER[1]) ** 2
    return (r2 <= PHANTOM_RADIUS ** 2).astype(float)


def phantom_line_integrals(segments, nodes: int = PHANTOM_NODES) -> np.ndarray:
    """Midpoint Riemann sum of the phantom along each segment (arc-length measure)."""
    t = (np.arange(nodes) + 0.5) / nodes
    out = np.empty(len(segments))
    for i, seg in enumerate(segments):
        s, e = np.asarray(seg.start, dtype=float), np.asarray(seg.end, dtype=float)
        length = float(np.linalg.norm(e - s))
        out[i] = phantom(s + (e - s) * t[:, None]).sum() * length / nodes
    return out


def phantom_blackbox() -> BlackBox:
    def fn(functionals):
        for f in functionals:
            if not isinstance(f, LineIntegral):
                raise TypeError(f"the phantom black box only answers line integrals, got {type(f).__name__}")
        return phantom_line_integrals([f.segment for f in functionals])

    return BlackBox(fn, "phantom_line_integrals")


# ---------------------------------------------------------------------------
# Lotka-Volterra likelihood
# ---------------------------------------------------------------------------

LV_TRUTH = (0.5, 0.1, 0.3, 0.1)
LV_INITIAL = (5.0, 5.0)
LV_STEP = 0.01
LV_HORIZON = 50.0
LV_OBS_EVERY = 0.5
LV_NOISE = 0.05
LV_DATA_SEED = 20220314


def lv_trajectory(alpha, beta, gamma: float = LV_TRUTH[2], delta: float = LV_TRUTH[3],
                  initial=LV_INITIAL, step: float = LV_STEP, horizon: float = LV_HORIZON,
                  every: float = LV_OBS_EVERY):
    """Fixed-step RK4 for ``p' = alpha p - beta p q``, ``q' = -gamma q + delta p q``.

    ``alpha``/``beta`` may be arrays (vectorised over a parameter grid) or duals.
    Returns the states at ``t = 0, every, ..., horizon`` stacked as ``(T, 2, ...)``.
    """
    n_steps = int(round(horizon / step))
    stride = int(round(every / step))
    zero = alpha * 0.0 + beta * 0.0
    p, q = zero + initial[0], zero + initial[1]

    def rhs(p, q):
        pq = p * q
        return alpha * p - beta * pq, pq * delta - q * gamma

    h = step
    out = [stack([p, q])]
    # overflow is reported once, below, as IntegratorDiverged
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, n_steps + 1):
            k1p, k1q = rhs(p, q)
            k2p, k2q = rhs(p + k1p * (0.5 * h), q + k1q * (0.5 * h))
            k3p, k3q = rhs(p + k2p * (0.5 * h), q + k2q * (0.5 * h))
            k4p, k4q = rhs(p + k3p * h, q + k3q * h)
            p = p + (k1p + k2p * 2.0 + k3p * 2.0 + k4p) * (h / 6.0)
            q = q + (k1q + k2q * 2.0 + k3q * 2.0 + k4q) * (h / 6.0)
            if k % stride == 0:
                out.append(stack([p, q]))
    traj = stack(out)
    v = traj.value if isinstance(traj, Dual) else traj
    if not np.all(np.isfinite(v)) or np.any(v <= 0):
        raise IntegratorDiverged("Lotka-Volterra integration left the positive orthant or overflowed")
    return traj


def generate_lv_data(seed: int = LV_DATA_SEED, noise: float = LV_NOISE) -> np.ndarray:
    """Noisy ``(T, 2)`` observations of the truth trajectory at the observation times."""
    truth = lv_trajectory(np.float64(LV_TRUTH[0]), np.float64(LV_TRUTH[1]))
    rng = np.random.Generator(np.random.PCG64(seed))
    return truth + noise * rng.standard_normal(truth.shape)


def load_lv_data() -> tuple[np.ndarray, int]:
    """The shipped synthetic dataset and the seed that generated it."""
    text = resources.files("spectral_sed").joinpath("data/lv_data.json").read_text()
    data = json.loads(text)
    return np.asarray(data["observations"], dtype=float), int(data["seed"])


def lv_loglik(x, data: np.ndarray | None = None, noise: float = LV_NOISE):
    """Gaussian log-likelihood at ``x = (alpha, beta)``; ``x`` of shape ``(2,)`` or ``(2, K)``.

    Accepts a dual ``x`` and then returns the dual log-likelihood.
    """
    if data is None:
        data = load_lv_data()[0]
    traj = lv_trajectory(x[0], x[1])
    y = data.reshape(data.shape + (1,) * (traj.ndim - 2))
    r = (traj - y) * (1.0 / noise)
    const = -data.size * (math.log(noise) + 0.5 * math.log(2 * math.pi))
    return (r * r).sum(axis=(0, 1)) * -0.5 + const


def lv_loglik_and_grad(x, data: np.ndarray | None = None) -> tuple[float, float, float]:
    out = lv_loglik(Dual.variables(np.asarray(x, dtype=float)), data)
    return float(out.value), float(out.tangent[0]), float(out.tangent[1])


def lv_grid_loglik(grid_points: np.ndarray, data: np.ndarray | None = None) -> np.ndarray:
    """Plain (non-dual) log-likelihood over many parameter points at once."""
    return lv_loglik(np.asarray(grid_points, dtype=float).T, data)


def lv_blackbox(data: np.ndarray | None = None) -> BlackBox:
    if data is None:
        data = load_lv_data()[0]
    cache: dict = {}

    def fn(functionals):
        vals = []
        for f in functionals:
            x = np.asarray(f.x, dtype=float)
            key = tuple(x.tolist())
            if key not in cache:
                cache[key] = lv_loglik_and_grad(x, data)
            v, g1, g2 = cache[key]
            if isinstance(f, PointEval):
                vals.append(v)
            elif isinstance(f, PartialDerivative) and f.alpha in ((1, 0), (0, 1)):
                vals.append(g1 if f.alpha == (1, 0) else g2)
            else:
                raise TypeError(f"the LV black box answers values and first partials, got {f.describe()}")
        return vals

    return BlackBox(fn, "lv_loglik")


# ---------------------------------------------------------------------------
# Experiment configurations
# ---------------------------------------------------------------------------

PDE_DOMAIN = BoxDomain((-1.0, -1.0), (1.0, 1.0))
TOMO_GP_DOMAIN = BoxDomain((-1.05, -1.05), (1.05, 1.05))
TOMO_IMAGE = BoxDomain((-1.0, -1.0), (1.0, 1.0))
TOMO_DESIGN = BoxDomain((0.0, -1.0, -1.0), (math.pi, 1.0, 1.0))
LV_GP_DOMAIN = BoxDomain((0.4, 0.04), (0.95, 0.55))
LV_DESIGN = BoxDomain((0.45, 0.09), (0.9, 0.5))


def _acq(outer_N, inner_M, mc_init_count, adam_steps, adam_lr=1e-1) -> AcquisitionConfig:
    return AcquisitionConfig(n_outer=outer_N, n_inner=inner_M, mc_init_count=mc_init_count,
                             adam_lr=adam_lr, adam_steps=adam_steps)


def pde_config(seed: int = 0, iterations: int = 150, m_per_dim: int = 30, n0: int = 10,
               outer_N: int = 81, inner_M: int = 9, nugget: float = 1e-6, mc_init_count: int = 100,
               adam_steps: int = 1000, fill_grid: int = 201, strategy: str = "sed") -> ExperimentConfig:
    mesh = Mesh.uniform(PDE_DOMAIN, 15)
    return ExperimentConfig(
        name="pde", domain=PDE_DOMAIN, m_per_dim=(m_per_dim, m_per_dim), nu=3.5,
        amplitude=1.0, lengthscale=0.2, nugget=nugget,
        family=PointFamily(PDE_DOMAIN, ("laplacian",)), loss=LossSpec(Identity(mesh)),
        acquisition=_acq(outer_N, inner_M, mc_init_count, adam_steps),
        iterations=iterations, n0=n0, initial_design=[PDE_DOMAIN.midpoint], seed=seed,
        metrics={"fill_distance": lambda post, ds: fill_distance(design_points(ds), PDE_DOMAIN, fill_grid)},
        strategy=strategy,
    )


def tomography_config(seed: int = 0, iterations: int = 30, m_per_dim: int = 28, n0: int = 0,
                      outer_N: int = 81, inner_M: int = 9, nugget: float = 1e-2, mc_init_count: int = 100,
                      adam_steps: int = 1000, nu: float = 2.5, strategy: str = "sed") -> ExperimentConfig:
    mesh = Mesh.uniform(TOMO_IMAGE, 25)
    warp = OutputWarp.exponential(mesh, 3.0)
    return ExperimentConfig(
        name="tomography", domain=TOMO_GP_DOMAIN, m_per_dim=(m_per_dim, m_per_dim), nu=nu,
        amplitude=0.5, lengthscale=0.4, nugget=nugget,
        family=LineBundleFamily(TOMO_DESIGN, TOMO_IMAGE, count=9, spacing=0.03), loss=LossSpec(warp),
        acquisition=_acq(outer_N, inner_M, mc_init_count, adam_steps),
        iterations=iterations, n0=n0, initial_design=[np.zeros(3)], seed=seed,
        metrics={"reconstruction_error": lambda post, ds: reconstruction_error(
            post, lambda p: np.exp(3.0 * phantom(p)), mesh, warp.fn)},
        strategy=strategy,
    )


def lv_mesh() -> Mesh:
    return Mesh.uniform(LV_DESIGN, 40)


def lv_config(seed: int = 0, iterations: int = 30, m_per_dim: int = 35, n0: int = 10,
              outer_N: int = 81, inner_M: int = 9, nugget: float = 1e-5, mc_init_count: int = 100,
              adam_steps: int = 1000, nu: float = 3.5, strategy: str = "sed") -> ExperimentConfig:
    mesh = lv_mesh()
    return ExperimentConfig(
        name="lv", domain=LV_GP_DOMAIN, m_per_dim=(m_per_dim, m_per_dim), nu=nu,
        amplitude=1.0, lengthscale=0.1, nugget=nugget,
        family=PointFamily(LV_DESIGN, ("value", ("derivative", (1, 0)), ("derivative", (0, 1)))),
        loss=LossSpec(GridMax(mesh)),
        acquisition=_acq(outer_N, inner_M, mc_init_count, adam_steps),
        iterations=iterations, n0=n0, initial_design=[LV_DESIGN.midpoint], seed=seed,
        metrics={"qoi": lambda post, ds: qoi_trace(post, mesh)},
        strategy=strategy,
    )


# ---------------------------------------------------------------------------
# Direct optimisation baselines for the LV likelihood
# ---------------------------------------------------------------------------

# fixed gradient-ascent step: the first move covers this fraction of the design-box diagonal
LV_GA_FIRST_MOVE = 0.01


def _lv_functionals(x):
    return [PointEval(x), PartialDerivative(x, (1, 0)), PartialDerivative(x, (0, 1))]


def _baseline_record(config: ExperimentConfig) -> RunRecord:
    return RunRecord(["qoi"], config=dict(config.to_dict(), strategy="baseline"))


def _baseline_row(record: RunRecord, config: ExperimentConfig, it: int, x, values, best: float, t0: float):
    """Same schema as an SED row; ``qoi`` is the best log-likelihood observed so far."""
    record.add_row(it, x, _lv_functionals(x), values, config.model(), {"qoi": best}, time.perf_counter() - t0)


def lv_gradient_ascent(config: ExperimentConfig, blackbox: BlackBox, step: float | None = None) -> RunRecord:
    """Projected fixed-step gradient ascent from the initial design, one query per iteration."""
    lo, hi = np.asarray(LV_DESIGN.lower), np.asarray(LV_DESIGN.upper)
    x = np.asarray(config.initial_design[0], dtype=float)
    record = _baseline_record(config)
    best = -math.inf
    for it in range(config.iterations + 1):
        t0 = time.perf_counter()
        values = blackbox(_lv_functionals(x))
        best = max(best, float(values[0]))
        _baseline_row(record, config, it, x, values, best, t0)
        g = values[1:]
        if step is None:
            step = LV_GA_FIRST_MOVE * float(np.linalg.norm(LV_DESIGN.lengths)) / max(float(np.linalg.norm(g)), 1e-300)
        x = np.clip(x + step * g, lo, hi)
    record.config["gradient_step"] = step
    return record


def lv_lbfgs(config: ExperimentConfig, blackbox: BlackBox) -> RunRecord:
    """scipy L-BFGS-B on the negative log-likelihood; every function evaluation is one row."""
    record = _baseline_record(config)
    state = {"best": -math.inf, "it": 0}
    budget = config.iterations + 1

    class _Budget(Exception):
        pass

    def fun(x):
        if state["it"] >= budget:
            raise _Budget
        t0 = time.perf_counter()
        x = np.asarray(x, dtype=float).copy()
        values = blackbox(_lv_functionals(x))
        state["best"] = max(state["best"], float(values[0]))
        _baseline_row(record, config, state["it"], x, values, state["best"], t0)
        state["it"] += 1
        return -values[0], -np.asarray(values[1:])

    bounds = list(zip(LV_DESIGN.lower, LV_DESIGN.upper))
    try:
        minimize(fun, np.asarray(config.initial_design[0], dtype=float), jac=True, method="L-BFGS-B",
                 bounds=bounds, options={"maxfun": budget, "maxiter": budget})
    except _Budget:
        pass
    return record


def lv_grid_optimum(data: np.ndarray | None = None, mesh: Mesh | None = None) -> tuple[float, np.ndarray]:
    """Brute-force maximum of the true log-likelihood over the 40x40 design grid."""
    mesh = mesh or lv_mesh()
    ll = lv_grid_loglik(mesh.points, data)
    i = int(np.argmax(ll))
    return float(ll[i]), mesh.points[i]
