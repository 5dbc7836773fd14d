#!/usr/bin/env python3
"""Mean NEES/NIS of a scenario as the filter's R is scaled away from the truth.

    python scripts/nees_sweep.py --config configs/default.yaml --scales 0.25 0.5 1 2 4
"""

import argparse
import dataclasses

from kalmanest.config import load_config
from kalmanest.consistency import run_consistency


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="configs/default.yaml")
    ap.add_argument("--scales", type=float, nargs="+", default=[0.25, 0.5, 1.0, 2.0, 4.0])
    ap.add_argument("--runs", type=int, help="override monte_carlo_runs")
    args = ap.parse_args()
    cfg = load_config(args.config)
    runs = args.runs or cfg.monte_carlo_runs
    print(f"{'r_scale':>8} {'NEES':>8} {'NEES bounds':>20} {'NIS':>8} {'NIS bounds':>20}")
    for s in args.scales:
        fm = dataclasses.replace(cfg, r_scale=s).filter_model()
        rep = run_consistency(cfg.model, cfg.x0_mean, cfg.P0, cfg.horizon, runs, cfg.master_seed,
                              filter_model=fm, confidence=cfg.confidence)
        nb = "[%.3f, %.3f]" % rep.nees_bounds
        ib = "[%.3f, %.3f]" % rep.nis_bounds
        flag = "" if rep.nees_ok else "  <- inconsistent"
        print(f"{s:8.3g} {rep.mean_nees:8.3f} {nb:>20} {rep.mean_nis:8.3f} {ib:>20}{flag}")


if __name__ == "__main__":
    main()
