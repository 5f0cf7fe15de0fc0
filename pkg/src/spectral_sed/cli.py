"""Command-line entry point: ``spectral-sed run-pde|run-tomography|run-lv|run-custom``."""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import apps
from .engine import RunRecord, run


class BadConfig(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


BASELINES = ("random", "grid", "gradient-ascent", "lbfgs")
EXPERIMENTS = {
    "pde": (apps.pde_config, apps.poisson_blackbox),
    "tomography": (apps.tomography_config, apps.phantom_blackbox),
    "lv": (apps.lv_config, apps.lv_blackbox),
}
# config-file keys understood by run-custom, forwarded to the experiment's config builder
CUSTOM_KEYS = {"seed", "iterations", "m_per_dim", "n0", "outer_N", "inner_M", "nugget",
               "mc_init_count", "adam_steps", "strategy"}


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spectral-sed", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=None, help="falls back to $SED_ENGINE_SEED, then 0")
        sp.add_argument("--iterations", type=int)
        sp.add_argument("--m-per-dim", type=int)
        sp.add_argument("--n0", type=int)
        sp.add_argument("--outer-N", type=int)
        sp.add_argument("--inner-M", type=int)
        sp.add_argument("--nugget", type=float)
        sp.add_argument("--mc-init-count", type=int)
        sp.add_argument("--adam-steps", type=int)
        sp.add_argument("--out", type=Path, default=Path("runs"))
        sp.add_argument("--baseline", choices=BASELINES)

    for name in ("run-pde", "run-tomography", "run-lv"):
        common(sub.add_parser(name))
    custom = sub.add_parser("run-custom")
    custom.add_argument("config", type=Path)
    common(custom)
    return p


def _resolve_seed(seed):
    if seed is not None:
        return seed
    env = os.environ.get("SED_ENGINE_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise BadConfig("SED_ENGINE_SEED", f"not an integer: {env!r}") from None


def _overrides(args) -> dict:
    keys = {"iterations": "iterations", "m_per_dim": "m_per_dim", "n0": "n0", "outer_N": "outer_N",
            "inner_M": "inner_M", "nugget": "nugget", "mc_init_count": "mc_init_count",
            "adam_steps": "adam_steps"}
    return {dst: getattr(args, src) for src, dst in keys.items() if getattr(args, src) is not None}


def _load_custom(path: Path) -> tuple[str, dict]:
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise BadConfig("config", f"no such file {path}") from None
    except json.JSONDecodeError as exc:
        raise BadConfig("config", f"invalid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise BadConfig("config", "top level must be an object")
    exp = data.get("experiment")
    if exp not in EXPERIMENTS:
        raise BadConfig("config.experiment", f"must be one of {sorted(EXPERIMENTS)}, got {exp!r}")
    params = data.get("params", {})
    if not isinstance(params, dict):
        raise BadConfig("config.params", "must be an object")
    for key, value in params.items():
        if key not in CUSTOM_KEYS:
            raise BadConfig(f"config.params.{key}", "unknown key")
        if key == "nugget":
            ok = isinstance(value, (int, float)) and value >= 0
        elif key == "strategy":
            ok = value in ("sed", "random", "grid")
        else:
            ok = isinstance(value, int) and not isinstance(value, bool) and value >= 0
        if not ok:
            raise BadConfig(f"config.params.{key}", f"invalid value {value!r}")
    return exp, params


def _execute(experiment: str, params: dict, baseline: str | None, out: Path) -> RunRecord:
    build, make_box = EXPERIMENTS[experiment]
    if baseline in ("random", "grid"):
        if experiment == "lv":
            raise BadConfig("baseline", f"{baseline} is offered for the pde and tomography runs")
        params = dict(params, strategy=baseline)
    elif baseline in ("gradient-ascent", "lbfgs") and experiment != "lv":
        raise BadConfig("baseline", f"{baseline} is offered for the lv run only")
    try:
        config = build(**params)
    except (TypeError, ValueError) as exc:
        raise BadConfig("params", str(exc)) from None
    box = make_box()
    if baseline == "gradient-ascent":
        record = apps.lv_gradient_ascent(config, box)
    elif baseline == "lbfgs":
        record = apps.lv_lbfgs(config, box)
    else:
        record = run(config, box)
    out.mkdir(parents=True, exist_ok=True)
    stem = experiment + (f"-{baseline}" if baseline else "")
    record.to_csv(out / f"{stem}.csv")
    # one iteration may evaluate several functionals, so both counters are reported
    record.config = dict(record.config, iterations_completed=max(r["iteration"] for r in record.rows) if record.rows else 0,
                         functional_evaluations=box.calls)
    record.write_sidecar(out / f"{stem}.json")
    return record


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "run-custom":
            experiment, params = _load_custom(args.config)
        else:
            experiment, params = args.command.removeprefix("run-"), {}
        params = {**params, **_overrides(args)}
        if args.seed is not None:
            params["seed"] = args.seed
        elif "seed" not in params:
            params["seed"] = _resolve_seed(None)
        record = _execute(experiment, params, args.baseline, args.out)
    except BadConfig as exc:
        print(json.dumps({"error": "BadConfig", "key": exc.key, "message": str(exc)}), file=sys.stderr)
        return 2
    except Exception as exc:  # surfaced as one machine-readable line
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    print(json.dumps({"status": "ok", "rows": len(record.rows), "out": str(args.out)}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
