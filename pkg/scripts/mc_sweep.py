"""Mean GOSPA versus p_D on the small and big Monte Carlo scenarios.

    python3 scripts/mc_sweep.py [--trials 100] [--out results/]
"""
import argparse
from pathlib import Path

import numpy as np

from t2ta.experiments import ExperimentSpec, rows_to_csv, run_mc_experiment, summarize

parser = argparse.ArgumentParser()
parser.add_argument("--trials", type=int, default=100)
parser.add_argument("--sigma", type=float, nargs="+", default=[1.0, 2.0])
parser.add_argument("--scenario", nargs="+", default=["mc_small", "mc_big"])
parser.add_argument("--out", default="results")
args = parser.parse_args()

out = Path(args.out)
out.mkdir(parents=True, exist_ok=True)
grid = tuple(np.round(np.arange(0.1, 1.01, 0.1), 2))
for scenario in args.scenario:
    for sigma in args.sigma:
        spec = ExperimentSpec(scenario=scenario, p_d=grid, sigma=sigma, trials=args.trials)
        rows, failures = run_mc_experiment(spec)
        stem = f"{scenario}_sigma{sigma:g}"
        (out / f"{stem}.csv").write_text(rows_to_csv(rows))
        summary = summarize(rows, ("p_d", "algorithm"))
        (out / f"{stem}_summary.csv").write_text(rows_to_csv(summary))
        for s in summary:
            print(f"{stem} p_D={s['p_d']:.1f} {s['algorithm']:<15} {s['mean']:8.3f} +- {s['stderr']:.3f}")
        for f in failures:
            print("FAILED", f)
