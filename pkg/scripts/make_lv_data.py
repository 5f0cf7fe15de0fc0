"""Regenerate the shipped synthetic LV observations from their seed."""
import argparse
import json
from pathlib import Path

from spectral_sed import apps

DEFAULT = Path(__file__).resolve().parents[1] / "src" / "spectral_sed" / "data" / "lv_data.json"


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seed", type=int, default=apps.LV_DATA_SEED)
    p.add_argument("--out", type=Path, default=DEFAULT)
    args = p.parse_args()
    obs = apps.generate_lv_data(args.seed)
    times = [i * apps.LV_OBS_EVERY for i in range(obs.shape[0])]
    payload = {"seed": args.seed, "truth": list(apps.LV_TRUTH), "initial": list(apps.LV_INITIAL),
               "noise": apps.LV_NOISE, "times": times, "observations": obs.tolist()}
    args.out.write_text(json.dumps(payload))
    print(f"wrote {obs.shape[0]} observations to {args.out}")


if __name__ == "__main__":
    main()
