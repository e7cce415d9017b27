"""Spatial likelihood ablation: proposed, generalized and euclidean (pairwise only).

    python3 scripts/ablation.py [--trials 100] [--scenario mc_small]
"""
import argparse
from pathlib import Path

from t2ta.experiments import ABLATION_DEFAULTS, ExperimentSpec, rows_to_csv, run_likelihood_ablation, summarize

parser = argparse.ArgumentParser()
parser.add_argument("--trials", type=int, default=100)
parser.add_argument("--scenario", default="mc_small")
parser.add_argument("--sigma", type=float, default=1.0)
parser.add_argument("--out", default="results")
args = parser.parse_args()

spec = ExperimentSpec(**{**ABLATION_DEFAULTS, "p_d": (0.5, 0.8, 1.0)}, scenario=args.scenario,
                      sigma=args.sigma, trials=args.trials)
rows, failures = run_likelihood_ablation(spec)
out = Path(args.out)
out.mkdir(parents=True, exist_ok=True)
(out / f"ablation_{args.scenario}.csv").write_text(rows_to_csv(rows))
for s in summarize(rows, ("p_d", "algorithm", "kind")):
    print(f"p_D={s['p_d']} {s['algorithm']:<15} {s['kind'] or '-':<12} {s['mean']:.3f} +- {s['stderr']:.3f}")
for f in failures:
    print("FAILED", f)
