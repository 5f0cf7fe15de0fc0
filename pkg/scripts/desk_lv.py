"""LV likelihood maximisation: SED against gradient ascent, L-BFGS and the brute-force grid optimum."""
import argparse

from spectral_sed import apps
from spectral_sed.engine import run


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--iterations", type=int, default=30)
    p.add_argument("--m-per-dim", type=int, default=20)
    p.add_argument("--adam-steps", type=int, default=100)
    p.add_argument("--trace", action="store_true", help="print every SED row")
    args = p.parse_args()

    cfg = apps.lv_config(seed=args.seed, iterations=args.iterations, m_per_dim=args.m_per_dim,
                         adam_steps=args.adam_steps)
    rec = run(cfg, apps.lv_blackbox())
    if args.trace:
        for row in rec.rows:
            print(row["iteration"], [round(v, 4) for v in row["z"]], round(row["values"][0], 1),
                  f"{row['amplitude']:.3g}", f"{row['lengthscale']:.3g}", round(row["qoi"], 2))
    ga = apps.lv_gradient_ascent(cfg, apps.lv_blackbox())
    lb = apps.lv_lbfgs(cfg, apps.lv_blackbox())
    best, where = apps.lv_grid_optimum()
    print(f"grid optimum        {best:.2f} at {where.round(4).tolist()}")
    print(f"SED posterior max   {rec.column('qoi')[-1]:.2f}")
    print(f"best SED query      {max(r['values'][0] for r in rec.rows):.2f}")
    print(f"gradient ascent     {ga.column('qoi')[-1]:.2f} (step {ga.config['gradient_step']:.3g})")
    print(f"L-BFGS              {lb.column('qoi')[-1]:.2f} ({len(lb.rows)} evaluations)")


if __name__ == "__main__":
    main()
