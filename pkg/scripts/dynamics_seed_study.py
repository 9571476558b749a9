"""Repeat the three-branch dynamics fit over many noise seeds.

Reports, per fitted parameter, the fraction of seeds landing inside the
published uncertainty band, the mean pull (fit - truth) / reported sigma,
and the spread of reduced chi-square. Optionally writes one row per seed.

    python scripts/dynamics_seed_study.py [--seeds 200] [--params FILE] [--csv OUT]
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from sbcool.config import experiment_config, load_params, parse_grid
from sbcool.fitkit import DYNAMICS_PARAMS, fit_dynamics
from sbcool.synth import dynamics_datasets
from sbcool.validate import fixture_dir

BANDS = {"n0": 0.06, "gamma_sc": 0.02e6, "eta": 0.0002}


def run(params_path: Path, seeds: int):
    pf = load_params(params_path)
    cfg = experiment_config(pf, "dynamics")
    n0 = float(cfg.block["n0"])
    grids = {b: parse_grid(g) for b, g in cfg.block["grids"].items()}
    excess = float(cfg.block.get("chi2_excess", 1.0))
    truth = {"n0": n0, "gamma_sc": pf.params.gamma_sc, "eta": pf.params.eta}

    rows = []
    for seed in range(seeds):
        data = dynamics_datasets(pf.params, n0, grids, cfg.noise, seed, chi2_excess=excess)
        res = fit_dynamics(data, pf.params)
        row = {"seed": seed, "chi2_red": res.reduced_chi_sq}
        for k in DYNAMICS_PARAMS:
            row[k] = res.parameters[k]
            row[f"sigma_{k}"] = res.uncertainties[k]
        rows.append(row)
    return truth, rows


def summarise(truth, rows) -> str:
    lines = [f"{len(rows)} seeds"]
    for k, v in truth.items():
        vals = np.array([r[k] for r in rows])
        sig = np.array([r[f"sigma_{k}"] for r in rows])
        inside = np.mean(np.abs(vals - v) <= BANDS[k])
        pull = (vals - v) / sig
        lines.append(
            f"  {k:9s} in band {inside:5.2f}   mean {vals.mean():.6g}   "
            f"pull mean {pull.mean():+.2f} sd {pull.std(ddof=1):.2f}"
        )
    joint = np.mean([all(abs(r[k] - v) <= BANDS[k] for k, v in truth.items()) for r in rows])
    chi = np.array([r["chi2_red"] for r in rows])
    lines.append(f"  all three in band {joint:.2f}")
    lines.append(f"  reduced chi2 median {np.median(chi):.2f}  (5%, 95%) = ({np.percentile(chi, 5):.2f}, {np.percentile(chi, 95):.2f})")
    return "\n".join(lines)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=100)
    ap.add_argument("--params", type=Path, default=fixture_dir() / "dynamics.json")
    ap.add_argument("--csv", type=Path, help="write per-seed results here")
    args = ap.parse_args(argv)

    truth, rows = run(args.params, args.seeds)
    print(summarise(truth, rows))
    if args.csv:
        with args.csv.open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
