"""Desk-scale Poisson runs over several seeds; prints the fill-distance slope and seed spread."""
import argparse

import numpy as np

from spectral_sed import apps
from spectral_sed.engine import run


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3])
    p.add_argument("--iterations", type=int, default=50)
    p.add_argument("--m-per-dim", type=int, default=20)
    p.add_argument("--adam-steps", type=int, default=100)
    args = p.parse_args()

    traces = []
    for seed in args.seeds:
        cfg = apps.pde_config(seed=seed, iterations=args.iterations, m_per_dim=args.m_per_dim,
                              adam_steps=args.adam_steps)
        rec = run(cfg, apps.poisson_blackbox())
        fd = np.array(rec.column("fill_distance"))
        traces.append(fd)
        print(f"seed {seed}: final fill distance {fd[-1]:.4f} ({sum(rec.column('wall_time')):.0f} s)")
    mean = np.mean(traces, axis=0)
    n = np.arange(10, args.iterations + 1)
    if n.size > 1:
        print(f"log-log slope over n in [10, {args.iterations}]: {np.polyfit(np.log(n), np.log(mean[n]), 1)[0]:.3f}")
    final = np.array([t[-1] for t in traces])
    print(f"relative spread of final fill distance: {(final.max() - final.min()) / final.mean():.3f}")


if __name__ == "__main__":
    main()
