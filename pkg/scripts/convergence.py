"""Relative GOSPA versus number of SO sweeps (big scenario, sigma 2, p_D 0.8).

    python3 scripts/convergence.py [--trials 50] [--out results/]
"""
import argparse
from pathlib import Path

from t2ta.experiments import PAIRWISE, ExperimentSpec, rows_to_csv, run_convergence

parser = argparse.ArgumentParser()
parser.add_argument("--trials", type=int, default=50)
parser.add_argument("--out", default="results")
args = parser.parse_args()

spec = ExperimentSpec(scenario="mc_big", algorithms=("so",) + PAIRWISE, p_d=(0.8,), sigma=2.0,
                      trials=args.trials)
rows = run_convergence(spec, (1, 2, 5, 10, 20, 50, 100, 200, 400))
Path(args.out).mkdir(parents=True, exist_ok=True)
(Path(args.out) / "convergence.csv").write_text(rows_to_csv(rows))
for r in rows:
    print(f"N={r['sweeps']:<4} {r['algorithm']:<15} {r['mean_relative_gospa']:.4f} +- {r['stderr']:.4f}")
