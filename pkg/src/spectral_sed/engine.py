"""The sequential design loop, its run record and the standard metrics."""
from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree

from .acquisition import AcquisitionConfig, AllCandidatesDegenerate, DesignChoice, optimize_design
from .basis import BasisSpec, BoxDomain
from .gp import Dataset, PosteriorState, SpectralModel, condition, optimize_hyperparameters, posterior_mean_field
from .kernel import MaternKernel
from .numerics import RngStream
from .qoi import GridMax, LossSpec, Mesh, MeshMismatch

RECORD_SCHEMA_VERSION = 1

# Column order of the CSV written by RunRecord.to_csv. Metric columns follow
# "lengthscale" in the order the metric hooks were declared; "wall_time" is last.
BASE_COLUMNS = ("iteration", "z", "functionals", "values", "amplitude", "lengthscale")
STRATEGIES = ("sed", "random", "grid")


class EmptyDesign(ValueError):
    pass


class RunAborted(RuntimeError):
    """Black-box failure; ``record`` holds every row completed before it."""

    def __init__(self, message: str, record: "RunRecord"):
        super().__init__(message)
        self.record = record


class BlackBox:
    """Wraps ``fn(functionals) -> values`` and counts functional evaluations."""

    def __init__(self, fn: Callable, name: str = "blackbox"):
        self.fn = fn
        self.name = name
        self.calls = 0

    def __call__(self, functionals) -> np.ndarray:
        values = np.asarray(self.fn(list(functionals)), dtype=float).reshape(-1)
        if values.size != len(functionals):
            raise ValueError(f"{self.name} returned {values.size} values for {len(functionals)} functionals")
        self.calls += len(functionals)
        return values


@dataclass
class ExperimentConfig:
    name: str
    domain: BoxDomain
    m_per_dim: tuple
    nu: float
    amplitude: float
    lengthscale: float
    nugget: float
    family: object
    loss: LossSpec
    acquisition: AcquisitionConfig = field(default_factory=AcquisitionConfig)
    iterations: int = 10
    n0: int = 10
    initial_design: list = field(default_factory=list)
    seed: int = 0
    hyper_steps: int = 1000
    hyper_lr: float = 1e-3
    # name -> fn(posterior, dataset) -> float, evaluated after every row
    metrics: dict = field(default_factory=dict)
    # "sed" optimises the acquisition; "random" and "grid" are non-adaptive baselines
    strategy: str = "sed"

    def __post_init__(self):
        if self.iterations < 0 or self.n0 < 0:
            raise ValueError("iterations and n0 must be nonnegative")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")

    def model(self) -> SpectralModel:
        spec = BasisSpec(self.domain, tuple(self.m_per_dim))
        kernel = MaternKernel(self.nu, self.lengthscale, self.amplitude, self.domain.d)
        return SpectralModel(kernel, spec, self.nugget)

    def to_dict(self) -> dict:
        acq = self.acquisition
        return {
            "schema_version": RECORD_SCHEMA_VERSION,
            "name": self.name,
            "domain": self.domain.to_dict(),
            "m_per_dim": list(self.m_per_dim),
            "nu": self.nu,
            "amplitude": self.amplitude,
            "lengthscale": self.lengthscale,
            "nugget": self.nugget,
            "family": type(self.family).__name__,
            "design_domain": self.family.domain.to_dict(),
            "qoi": type(self.loss.qoi).__name__,
            "acquisition": {"n_outer": acq.n_outer, "n_inner": acq.n_inner,
                            "mc_init_count": acq.mc_init_count, "adam_lr": acq.adam_lr,
                            "adam_steps": acq.adam_steps, "optimizer": acq.optimizer},
            "iterations": self.iterations,
            "n0": self.n0,
            "initial_design": [np.asarray(z, dtype=float).tolist() for z in self.initial_design],
            "seed": self.seed,
            "hyper_steps": self.hyper_steps,
            "hyper_lr": self.hyper_lr,
            "metrics": list(self.metrics),
            "strategy": self.strategy,
        }


@dataclass
class RunRecord:
    metric_names: list
    rows: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    dataset: Dataset | None = None
    posterior: PosteriorState | None = None
    model: SpectralModel | None = None

    @property
    def columns(self) -> list:
        return list(BASE_COLUMNS) + list(self.metric_names) + ["wall_time"]

    def add_row(self, iteration: int, z, functionals, values, model: SpectralModel,
                metrics: dict, wall_time: float) -> None:
        self.rows.append({
            "iteration": iteration,
            "z": [float(v) for v in np.asarray(z, dtype=float).ravel()],
            "functionals": [f.describe() for f in functionals],
            "values": [float(v) for v in values],
            "amplitude": model.kernel.amplitude,
            "lengthscale": model.kernel.lengthscale,
            **{k: float(metrics[k]) for k in self.metric_names},
            "wall_time": wall_time,
        })

    def column(self, name: str) -> list:
        return [row[name] for row in self.rows]

    def to_csv(self, path=None, include_time: bool = True) -> str:
        """RFC-4180 CSV; list-valued cells are JSON. Drop ``wall_time`` for byte-stable output."""
        cols = self.columns if include_time else self.columns[:-1]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\r\n")
        writer.writerow(cols)
        for row in self.rows:
            writer.writerow([json.dumps(row[c]) if isinstance(row[c], list) else repr(row[c]) for c in cols])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def write_sidecar(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.config, fh, indent=2, sort_keys=True)

    @staticmethod
    def read_csv(path) -> list[dict]:
        with open(path, newline="") as fh:
            return list(csv.DictReader(fh))


def _metrics(config: ExperimentConfig, posterior, dataset) -> dict:
    return {k: fn(posterior, dataset) for k, fn in config.metrics.items()}


def run(config: ExperimentConfig, blackbox: BlackBox) -> RunRecord:
    """Initial design, then ``config.iterations`` rounds of select / query / condition / refit."""
    model = config.model()
    family = config.family
    rng = RngStream(config.seed)
    iteration_rngs = rng.spawn(max(config.iterations, 1))
    record = RunRecord(list(config.metrics), config=config.to_dict())
    dataset = Dataset()
    record.dataset = dataset

    def query(fs):
        try:
            return blackbox(fs)
        except Exception as exc:
            raise RunAborted(f"black box {blackbox.name} failed: {exc}", record) from exc

    t0 = time.perf_counter()
    pending = []
    for z in config.initial_design:
        fs = family.functionals(np.asarray(z, dtype=float))
        values = query(fs)
        dataset.extend(fs, values)
        pending.append((z, fs, values))

    posterior = condition(model, dataset)
    if 0 >= config.n0 and len(dataset):
        model = optimize_hyperparameters(model, dataset, 0, config.n0, config.hyper_steps, config.hyper_lr)
        posterior = condition(model, dataset)
    metrics = _metrics(config, posterior, dataset)
    for z, fs, values in pending:
        record.add_row(0, z, fs, values, model, metrics, time.perf_counter() - t0)

    grid = _grid_designs(family.domain, config.iterations) if config.strategy == "grid" else None
    for it in range(1, config.iterations + 1):
        t0 = time.perf_counter()
        if config.strategy == "sed":
            choice = optimize_design(model, dataset, posterior, family, config.loss,
                                     config.acquisition, iteration_rngs[it - 1])
        elif config.strategy == "random":
            choice = _random_design(family, iteration_rngs[it - 1])
        else:
            z = grid[it - 1]
            choice = DesignChoice(z, family.functionals(z), math.nan)
        values = query(choice.functionals)
        dataset.extend(choice.functionals, values)
        posterior = condition(model, dataset)
        if it >= config.n0:
            model = optimize_hyperparameters(model, dataset, it, config.n0, config.hyper_steps, config.hyper_lr)
            posterior = condition(model, dataset)
        record.add_row(it, choice.z, choice.functionals, values, model,
                       _metrics(config, posterior, dataset), time.perf_counter() - t0)
    record.posterior = posterior
    record.model = model
    return record


def _random_design(family, rng: RngStream, tries: int = 1000) -> DesignChoice:
    box = family.domain
    for _ in range(tries):
        z = rng.uniform(box.lower, box.upper, box.d)
        fs = family.functionals(z)
        if fs:
            return DesignChoice(z, fs, math.nan)
    raise AllCandidatesDegenerate(f"{tries} random designs all produced empty batches")


def _grid_designs(box: BoxDomain, count: int) -> np.ndarray:
    """Cell centres of the smallest uniform tensor grid with at least ``count`` cells."""
    k = 1
    while k ** box.d < count:
        k += 1
    u = (np.arange(k) + 0.5) / k
    cells = np.stack(np.meshgrid(*([u] * box.d), indexing="ij"), axis=-1).reshape(-1, box.d)
    return np.asarray(box.lower) + cells * box.lengths


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def fill_distance(points, domain: BoxDomain, grid_per_dim: int = 201) -> float:
    """``max_{x in grid} min_i |x - p_i|`` over a uniform grid of ``domain``."""
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        raise EmptyDesign("fill distance needs at least one design point")
    pts = pts.reshape(-1, domain.d)
    if grid_per_dim < 50:
        raise ValueError("grid_per_dim must be at least 50")
    dist, _ = cKDTree(pts).query(domain.grid(grid_per_dim))
    return float(dist.max())


def design_points(dataset: Dataset) -> np.ndarray:
    """Locations of the point-type functionals in a dataset."""
    return np.array([np.asarray(f.x, dtype=float) for f in dataset.functionals if hasattr(f, "x")])


def reconstruction_error(posterior: PosteriorState, reference: Callable, mesh: Mesh,
                         warp: Callable | None = None) -> float:
    """Mesh-weighted L2 distance between ``warp(posterior mean)`` and ``reference`` on ``mesh``."""
    if not all(posterior.spec.domain.contains(p) for p in mesh.points):
        raise MeshMismatch("mesh extends outside the model domain")
    field_vals = posterior_mean_field(posterior, mesh.points)
    if warp is not None:
        field_vals = warp(field_vals)
    ref = np.asarray(reference(mesh.points), dtype=float)
    if ref.shape != field_vals.shape:
        raise MeshMismatch(f"reference has shape {ref.shape}, mesh field {field_vals.shape}")
    return float(np.sqrt(np.sum(mesh.weights * (field_vals - ref) ** 2)))


def field_distance(a, b, mesh: Mesh) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != (len(mesh),) or b.shape != (len(mesh),):
        raise MeshMismatch("field values do not match the mesh")
    return float(np.sqrt(np.sum(mesh.weights * (a - b) ** 2)))


def qoi_trace(posterior: PosteriorState, mesh: Mesh) -> float:
    """GridMax of the posterior mean over ``mesh``."""
    return GridMax(mesh).locate(mesh.basis(posterior.spec) @ posterior.mean)[0]
