"""SO and greedy (merge) against the exhaustive optimum on small instances.

    python3 scripts/oracle_check.py [--trials 200] [--sweeps 500]
"""
import argparse

from t2ta.experiments import run_oracle_check

parser = argparse.ArgumentParser()
parser.add_argument("--trials", type=int, default=200)
parser.add_argument("--sweeps", type=int, default=500)
parser.add_argument("--seed", type=int, default=0)
args = parser.parse_args()

res = run_oracle_check(args.trials, args.seed, args.sweeps)
print(f"SO optimal:            {res.so_optimal}/{res.trials}")
print(f"greedy(merge) optimal: {res.greedy_optimal}/{res.trials}")
