"""Paired SED vs random-design tomography runs; prints the final reconstruction errors."""
import argparse

from spectral_sed import apps
from spectral_sed.engine import run


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--iterations", type=int, default=30)
    p.add_argument("--m-per-dim", type=int, default=20)
    p.add_argument("--adam-steps", type=int, default=100)
    args = p.parse_args()

    for seed in args.seeds:
        errs = {}
        for strategy in ("sed", "random"):
            cfg = apps.tomography_config(seed=seed, iterations=args.iterations, m_per_dim=args.m_per_dim,
                                         adam_steps=args.adam_steps, strategy=strategy)
            errs[strategy] = run(cfg, apps.phantom_blackbox()).column("reconstruction_error")[-1]
        print(f"seed {seed}: sed {errs['sed']:.4f}  random {errs['random']:.4f}")


if __name__ == "__main__":
    main()
