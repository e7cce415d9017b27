"""Command-line entry point: ``t2ta <verb> [flags]``.

Verbs: mc, cp, converge, ablate, oracle-check, simulate. Tables go to
``--output`` as CSV (stdout when omitted); run metadata goes to a JSON
sidecar next to it. The worker count is read from ``T2TA_WORKERS``.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import fields
from pathlib import Path

from . import experiments as ex
from .core import read_frames, write_frames
from .sim.cpm import CommConfig
from .sim.mc import McConfig, gen_mc_frame
from .sim.world import run_cp_scenario

VERB_DEFAULTS = {
    "mc": dict(scenario="mc_small"),
    "cp": dict(scenario="cp", algorithms=("so_c", "so_ds") + ex.PAIRWISE, p_d=(0.9,),
               modes=("etsi", "full"), mprs=(0.5,)),
    "converge": dict(scenario="mc_big", algorithms=("so",) + ex.PAIRWISE, p_d=(0.8,), sigma=2.0,
                     trials=50),
    "ablate": dict(ex.ABLATION_DEFAULTS, scenario="mc_small"),
}

_TUPLE_TYPES = {"algorithms": str, "p_d": float, "kinds": str, "pairwise_kinds": str,
                "modes": str, "mprs": float}


def _csv_list(typ):
    def parse(text: str):
        return tuple(typ(v) for v in text.split(",") if v.strip())
    return parse


def _optional(typ):
    def parse(text: str):
        return None if text.lower() in ("", "none") else typ(text)
    return parse


def _add_spec_flags(p: argparse.ArgumentParser, defaults: dict):
    for f in fields(ex.ExperimentSpec):
        flag = "--" + f.name.replace("_", "-")
        default = defaults.get(f.name, f.default)
        if f.name in _TUPLE_TYPES:
            p.add_argument(flag, type=_csv_list(_TUPLE_TYPES[f.name]), default=default,
                           help=f"comma-separated (default {','.join(map(str, default)) or 'none'})")
        elif f.name in ("sweeps", "top_k"):
            p.add_argument(flag, type=_optional(int), default=default)
        elif f.name in ("gate", "d_t"):
            p.add_argument(flag, type=_optional(float), default=default)
        elif f.name in ("script", "frames", "output"):
            p.add_argument(flag, default=default)
        elif f.name == "scenario":
            p.add_argument(flag, choices=("mc_small", "mc_big", "cp", "custom"), default=default)
        else:
            p.add_argument(flag, type=type(f.default), default=default)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="t2ta", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)

    for verb, help_ in [("mc", "Monte Carlo GOSPA sweep over p_D"),
                        ("cp", "collective perception scenario"),
                        ("converge", "relative GOSPA versus number of sweeps"),
                        ("ablate", "spatial likelihood ablation")]:
        p = sub.add_parser(verb, help=help_)
        _add_spec_flags(p, VERB_DEFAULTS[verb])
        if verb == "converge":
            p.add_argument("--sweep-grid", type=_csv_list(int), default=(1, 2, 5, 10, 20, 50, 100, 200, 400))
        if verb == "cp":
            p.add_argument("--frame-stride", type=int, default=1,
                           help="evaluate every k-th frame")
            p.add_argument("--summary", help="CSV of per-group means")

    p = sub.add_parser("oracle-check", help="SO and greedy against the brute-force optimum")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sweeps", type=int, default=500)
    p.add_argument("--output")

    p = sub.add_parser("simulate", help="write a frame stream (JSON lines)")
    p.add_argument("--scenario", choices=("mc_small", "mc_big", "cp"), default="mc_small")
    p.add_argument("--frames-out", required=True)
    p.add_argument("--trials", type=int, default=10, help="MC frames to write")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--p-d", type=float, default=0.9)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--script")
    p.add_argument("--mode", choices=("full", "etsi"), default="etsi")
    p.add_argument("--mpr", type=float, default=0.5)
    return parser


def _spec(args) -> ex.ExperimentSpec:
    kw = {f.name: getattr(args, f.name) for f in fields(ex.ExperimentSpec)}
    return ex.ExperimentSpec(**kw)


def _emit(text: str, path: str | None):
    if path:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _sidecar(path: str | None, meta: dict):
    if not path:
        return
    Path(path).with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n")


def _report(failures) -> int:
    for scenario, seed, algorithm, err in failures:
        print(f"FAILED scenario={scenario} seed={seed} algorithm={algorithm}: {err}", file=sys.stderr)
    return 1 if failures else 0


def _announce(spec: ex.ExperimentSpec, verb: str):
    print(f"t2ta {verb}: scenario={spec.scenario} sweeps={spec.n_sweeps} d_g={spec.gate_distance:g} "
          f"d_t={spec.threshold('proposed'):g} (euclidean {ex.EUCLIDEAN_D_T:g}) "
          f"gospa c={ex.GOSPA_C:g} p={ex.GOSPA_P:g} top_k={spec.k_best} trials={spec.trials} "
          f"seed={spec.seed} workers={ex.workers()}", file=sys.stderr)


def cmd_table(args, verb: str) -> int:
    started = time.time()
    spec = _spec(args)
    _announce(spec, verb)
    extra = {}
    if verb == "converge":
        rows, failures = ex.run_convergence(spec, args.sweep_grid), []
    elif verb == "ablate":
        rows, failures = ex.run_likelihood_ablation(spec)
    elif spec.scenario == "custom":
        rows, failures = ex.run_frames_experiment(spec, list(read_frames(spec.frames)))
    elif verb == "cp" or spec.scenario == "cp":
        rows, failures, volume = ex.run_cp_experiment(spec, getattr(args, "frame_stride", 1))
        summary = ex.summarize(rows, ("mode", "mpr", "algorithm", "kind"), "gospa_per_object")
        extra = {"summary": summary,
                 "volume": {f"{m}/{r}": v for (m, r), v in volume.items()}}
        if getattr(args, "summary", None):
            _emit(ex.rows_to_csv(summary), args.summary)
    else:
        rows, failures = ex.run_mc_experiment(spec)
    _emit(ex.rows_to_csv(rows), spec.output)
    _sidecar(spec.output, ex.metadata(spec, verb, started, n_rows=len(rows),
                                      failures=failures, **extra))
    return _report(failures)


def cmd_oracle(args) -> int:
    started = time.time()
    res = ex.run_oracle_check(args.trials, args.seed, args.sweeps)
    _emit(ex.rows_to_csv(res.rows), args.output)
    print(f"SO optimal {res.so_optimal}/{res.trials}, greedy(merge) optimal "
          f"{res.greedy_optimal}/{res.trials}", file=sys.stderr)
    _sidecar(args.output, ex.metadata(None, "oracle-check", started, trials=res.trials,
                                      so_optimal=res.so_optimal, greedy_optimal=res.greedy_optimal))
    return 0


def cmd_simulate(args) -> int:
    if args.scenario == "cp":
        spec = ex.ExperimentSpec(scenario="cp", script=args.script, seed=args.seed)
        frames = run_cp_scenario(ex.cp_script(spec), CommConfig(mode=args.mode), args.seed, args.mpr)
    else:
        d = ex.SCENARIOS[args.scenario]
        frames = (gen_mc_frame(McConfig(d["area"], d["n_objects"], d["n_sensors"], args.sigma,
                                        args.p_d, args.seed + i)) for i in range(args.trials))
        frames = (f.__class__(f.tracks, f.sensors, f.truths, f.truth_ids, f.time, i, f.meta)
                  for i, f in enumerate(frames))
    n = write_frames(args.frames_out, frames)
    print(f"wrote {n} frames to {args.frames_out}", file=sys.stderr)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.verb == "oracle-check":
            return cmd_oracle(args)
        if args.verb == "simulate":
            return cmd_simulate(args)
        return cmd_table(args, args.verb)
    except ex.ConfigError as exc:
        parser.error(str(exc))  # exits with status 2
    except (OSError, ValueError) as exc:
        print(f"t2ta: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
