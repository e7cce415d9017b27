"""Experiment drivers behind the command-line verbs.

Every driver returns a list of flat row dicts with a fixed column order, so
the CSV written from them is byte-identical for identical inputs.
"""
from __future__ import annotations

import csv
import io
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .baselines import DEFAULT_BRUTE_FORCE_CAP, brute_force_optimal, greedy, sensorwise
from .core import ScenarioFrame, truth_association
from .evaluation import GOSPA_C, GOSPA_P, evaluate_association
from .likelihood import ClusterLikelihood, DetectionModel, SpatialKind
from .sim.cpm import CommConfig
from .sim.mc import BIG, SMALL, McConfig, gen_mc_frame
from .sim.world import CpStats, intersection_script, load_script, run_cp_scenario
from .so import SoConfig, run as run_so

log = logging.getLogger(__name__)

WORKERS_ENV = "T2TA_WORKERS"
PAIRWISE = ("greedy_merge", "greedy_nomerge", "sensorwise")
JOINT = ("so", "so_c", "so_ds", "oracle")
KNOWN_ALGORITHMS = PAIRWISE + JOINT
EUCLIDEAN_D_T = 10.0

SCENARIOS = {
    "mc_small": dict(SMALL, sweeps=100, top_k=5, d_t=15.0),
    "mc_big": dict(BIG, sweeps=200, top_k=10, d_t=15.0),
    "cp": dict(sweeps=50, top_k=5, d_t=20.0, gate=15.0),
}


class ConfigError(ValueError):
    """An experiment request that cannot be run as specified."""


@dataclass(frozen=True)
class ExperimentSpec:
    scenario: str = "mc_small"  # mc_small | mc_big | cp | custom
    algorithms: tuple = ("so", "greedy_merge", "greedy_nomerge", "sensorwise")
    p_d: tuple = (0.5, 0.8, 0.9, 1.0)
    sigma: float = 1.0
    trials: int = 100
    seed: int = 0
    kinds: tuple = ("proposed",)
    pairwise_kinds: tuple = ()  # extra kinds run only by the pairwise methods
    sweeps: int | None = None
    gate: float | None = None
    d_t: float | None = None
    top_k: int | None = None
    oracle_cap: int = DEFAULT_BRUTE_FORCE_CAP
    script: str | None = None  # cp scenario script
    frames: str | None = None  # custom frame stream (JSON lines)
    modes: tuple = ("full", "etsi")
    mprs: tuple = (0.25, 0.5, 1.0)
    loss: float = 0.0
    latency: float = 0.0
    output: str | None = None

    def __post_init__(self):
        if self.scenario not in ("mc_small", "mc_big", "cp", "custom"):
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if any(not 0.0 < p <= 1.0 for p in self.p_d):
            raise ConfigError("detection probabilities must lie in (0, 1]")
        unknown = set(self.algorithms) - set(KNOWN_ALGORITHMS)
        if unknown:
            raise ConfigError(f"unknown algorithms {sorted(unknown)}")
        for k in self.kinds + self.pairwise_kinds:
            SpatialKind(k)
        if self.scenario == "custom" and not self.frames:
            raise ConfigError("custom scenario needs a frame stream file")

    @property
    def defaults(self) -> dict:
        return SCENARIOS.get(self.scenario, SCENARIOS["cp"])

    @property
    def n_sweeps(self) -> int:
        return self.sweeps or self.defaults["sweeps"]

    @property
    def gate_distance(self) -> float:
        if self.gate is not None:
            return self.gate
        return self.defaults.get("gate", 6.0 * self.sigma)

    def threshold(self, kind: str) -> float:
        if kind == SpatialKind.EUCLIDEAN.value:
            return EUCLIDEAN_D_T
        return self.d_t if self.d_t is not None else self.defaults["d_t"]

    @property
    def k_best(self) -> int:
        return self.top_k or self.defaults["top_k"]


def workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def parallel_map(fn: Callable, items: Sequence, n_workers: int | None = None) -> list:
    """Ordered map; fans out over processes when more than one worker is configured."""
    n_workers = workers() if n_workers is None else n_workers
    if n_workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(n_workers) as pool:
        return list(pool.map(fn, items))


def check_combinations(algorithms: Sequence[str], kinds: Sequence[str]):
    for a in algorithms:
        for k in kinds:
            if k == SpatialKind.EUCLIDEAN.value and a in JOINT:
                raise ConfigError(
                    f"{a} x euclidean: the euclidean distance is a pairwise score without a "
                    "joint likelihood; use it with greedy_merge, greedy_nomerge or sensorwise"
                )


def _params(spec: ExperimentSpec, algorithm: str, kind: str) -> str:
    if algorithm in ("so", "so_c", "so_ds"):
        return f"N={spec.n_sweeps};d_g={spec.gate_distance:g}"
    if algorithm in PAIRWISE:
        return f"d_t={spec.threshold(kind):g}"
    if algorithm == "oracle":
        return f"cap={spec.oracle_cap}"
    return ""


def _detection(algorithm: str, p_d: float | None) -> DetectionModel:
    if algorithm == "so_c":
        return DetectionModel.estimated_constant()
    if algorithm == "so_ds":
        return DetectionModel.distance_based()
    return DetectionModel.fixed(p_d if p_d is not None else 0.9)


def associate(frame: ScenarioFrame, algorithm: str, kind: str, spec: ExperimentSpec,
              p_d: float | None, seed: int):
    """Run one algorithm on one frame: (association, log-lik or None, extra columns)."""
    tracks, sensors = frame.tracks, frame.sensors
    extra = {}
    if algorithm in ("so", "so_c", "so_ds"):
        cfg = SoConfig(spec.n_sweeps, spec.gate_distance, seed, _detection(algorithm, p_d), kind)
        h = run_so(tracks, sensors, cfg)
        if len(h) == 0:
            return (), 0.0, extra
        assoc, ll = h.best()
        top = h.top_k(spec.k_best)
        scores = [evaluate_association(a, tracks, frame.truths).total for a, _ in top]
        extra = {"topk_min": min(scores), "topk_max": max(scores)}
        return assoc, ll, extra
    if algorithm == "oracle":
        assoc, ll = brute_force_optimal(tracks, sensors, _detection("so", p_d), kind,
                                        cap=spec.oracle_cap)
        return assoc, ll, extra
    d_t = spec.threshold(kind)
    if algorithm == "greedy_merge":
        return greedy(tracks, sensors, kind, d_t, merge=True), None, extra
    if algorithm == "greedy_nomerge":
        return greedy(tracks, sensors, kind, d_t, merge=False), None, extra
    if algorithm == "sensorwise":
        return sensorwise(tracks, sensors, kind, d_t), None, extra
    raise ConfigError(f"unknown algorithm {algorithm!r}")


ROW_COLUMNS = (
    "scenario", "mode", "mpr", "p_d", "sigma", "trial", "seed", "frame", "algorithm", "kind",
    "params", "status", "n_tracks", "n_objects", "gospa", "localization", "missed", "false",
    "gospa_per_object", "log_lik", "topk_min", "topk_max",
)


def _row(**kw) -> dict:
    row = dict.fromkeys(ROW_COLUMNS, "")
    row.update(kw)
    return row


def evaluate_frame(frame: ScenarioFrame, spec: ExperimentSpec, algorithms: Sequence[str],
                   kinds: Sequence[str], p_d: float | None, seed: int, base: dict) -> tuple:
    """Rows for every (algorithm, kind) on one frame plus a ground-truth row."""
    rows, failures = [], []
    n_obj = len(frame.truths)

    def scored(assoc, **kw):
        g = evaluate_association(assoc, frame.tracks, frame.truths, GOSPA_C, GOSPA_P)
        per_obj = g.total / n_obj if n_obj else g.total
        return _row(**base, n_tracks=len(frame.tracks), n_objects=n_obj, gospa=g.total,
                    localization=g.localization, missed=g.missed, false=g.false,
                    gospa_per_object=per_obj, status="ok", **kw)

    grid = [(a, k) for k in kinds for a in algorithms]
    grid += [(a, k) for k in spec.pairwise_kinds if k not in kinds
             for a in algorithms if a in PAIRWISE]
    for algorithm, kind in grid:
        params = _params(spec, algorithm, kind)
        if algorithm == "oracle" and len(frame.tracks) > spec.oracle_cap:
            rows.append(_row(**base, algorithm=algorithm, kind=kind, params=params,
                             status="skipped", n_tracks=len(frame.tracks), n_objects=n_obj))
            continue
        try:
            assoc, ll, extra = associate(frame, algorithm, kind, spec, p_d, seed)
        except Exception as exc:  # reported, the rest of the grid still runs
            log.exception("%s failed on seed %s", algorithm, seed)
            failures.append((spec.scenario, seed, algorithm, repr(exc)))
            rows.append(_row(**base, algorithm=algorithm, kind=kind, params=params,
                             status="failed"))
            continue
        rows.append(scored(assoc, algorithm=algorithm, kind=kind, params=params,
                           log_lik="" if ll is None else ll, **extra))
    rows.append(scored(truth_association(frame.tracks), algorithm="ground_truth", kind="",
                       params=""))
    return rows, failures


def _mc_config(spec: ExperimentSpec, p_d: float, seed: int) -> McConfig:
    if spec.scenario not in ("mc_small", "mc_big"):
        raise ConfigError(f"{spec.scenario} is not a Monte Carlo scenario")
    d = spec.defaults
    return McConfig(d["area"], d["n_objects"], d["n_sensors"], spec.sigma, p_d, seed)


def _mc_job(job):
    spec, p_d, trial = job
    seed = spec.seed + trial
    frame = gen_mc_frame(_mc_config(spec, p_d, seed))
    base = dict(scenario=spec.scenario, p_d=p_d, sigma=spec.sigma, trial=trial, seed=seed,
                frame=0)
    return evaluate_frame(frame, spec, spec.algorithms, spec.kinds, p_d, seed, base)


def _collect(results) -> tuple[list, list]:
    rows, failures = [], []
    for r, f in results:
        rows.extend(r)
        failures.extend(f)
    return rows, failures


def run_mc_experiment(spec: ExperimentSpec) -> tuple[list, list]:
    """GOSPA rows for every (p_D, trial, algorithm) of a Monte Carlo grid."""
    check_combinations(spec.algorithms, spec.kinds)
    jobs = [(spec, p, trial) for p in spec.p_d for trial in range(spec.trials)]
    return _collect(parallel_map(_mc_job, jobs))


def _convergence_job(job):
    spec, p_d, trial, grid = job
    seed = spec.seed + trial
    frame = gen_mc_frame(_mc_config(spec, p_d, seed))
    tracks, truths = frame.tracks, frame.truths
    gt = evaluate_association(truth_association(tracks), tracks, truths).total
    out = {"ground_truth": [1.0] * len(grid)}
    for algorithm in spec.algorithms:
        if algorithm in PAIRWISE:
            assoc, _, _ = associate(frame, algorithm, "proposed", spec, p_d, seed)
            rel = evaluate_association(assoc, tracks, truths).total / gt
            out[algorithm] = [rel] * len(grid)
    if "so" in spec.algorithms:
        cfg = SoConfig(max(grid), spec.gate_distance, seed, DetectionModel.fixed(p_d))
        h = run_so(tracks, frame.sensors, cfg)
        rel = []
        for n in grid:
            assoc, _ = h.prefix(n * len(tracks)).best()
            rel.append(evaluate_association(assoc, tracks, truths).total / gt)
        out["so"] = rel
    return out


def run_convergence(spec: ExperimentSpec, sweep_grid: Sequence[int] = (1, 2, 5, 10, 20, 50, 100, 200, 400),
                    p_d: float | None = None) -> list:
    """Mean relative GOSPA (w.r.t. the ground-truth association) per number of sweeps.

    SO runs once with the largest N per trial; smaller N read the best sample
    of the corresponding prefix, which is exactly what a shorter run with the
    same seed would have produced.
    """
    grid = sorted(set(int(n) for n in sweep_grid))
    if grid[0] < 1:
        raise ConfigError("sweep counts must be >= 1")
    p = spec.p_d[0] if p_d is None else p_d
    jobs = [(spec, p, trial, grid) for trial in range(spec.trials)]
    per_trial = parallel_map(_convergence_job, jobs)
    rows = []
    algorithms = ["ground_truth"] + [a for a in spec.algorithms if a in PAIRWISE or a == "so"]
    for i, n in enumerate(grid):
        for a in algorithms:
            vals = np.array([t[a][i] for t in per_trial])
            rows.append({
                "scenario": spec.scenario, "p_d": p, "sigma": spec.sigma, "sweeps": n,
                "algorithm": a, "trials": len(vals), "mean_relative_gospa": float(vals.mean()),
                "stderr": float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0,
            })
    return rows


def cp_script(spec: ExperimentSpec) -> dict:
    if spec.script:
        return load_script(spec.script)
    return intersection_script(seed=spec.seed)


def run_cp_experiment(spec: ExperimentSpec, frame_stride: int = 1) -> tuple[list, list, dict]:
    """Per-frame rows for each (comm mode, MPR) group, plus message statistics."""
    check_combinations(spec.algorithms, spec.kinds)
    script = cp_script(spec)
    rows, failures, volume = [], [], {}
    for mode in spec.modes:
        for mpr in spec.mprs:
            comm = CommConfig(mode=mode, loss=spec.loss, latency=spec.latency)
            stats = CpStats()
            frames = list(run_cp_scenario(script, comm, spec.seed, mpr, stats))[::frame_stride]
            jobs = [(spec, f, mode, mpr) for f in frames]
            r, f = _collect(parallel_map(_cp_job, jobs))
            rows.extend(r)
            failures.extend(f)
            volume[(mode, mpr)] = asdict(stats)
    return rows, failures, volume


def _cp_job(job):
    spec, frame, mode, mpr = job
    base = dict(scenario="cp", mode=mode, mpr=mpr, sigma="", trial=0, seed=spec.seed,
                frame=frame.index)
    return evaluate_frame(frame, spec, spec.algorithms, spec.kinds, None,
                          spec.seed + frame.index, base)


def run_frames_experiment(spec: ExperimentSpec, frames: Sequence[ScenarioFrame]) -> tuple[list, list]:
    """Rows for a user-supplied frame stream (scenario ``custom``)."""
    check_combinations(spec.algorithms, spec.kinds)
    p = spec.p_d[0] if spec.p_d else None
    jobs = [(spec, f, p) for f in frames]
    return _collect(parallel_map(_frames_job, jobs))


def _frames_job(job):
    spec, frame, p = job
    base = dict(scenario="custom", p_d=p, trial=0, seed=spec.seed, frame=frame.index)
    return evaluate_frame(frame, spec, spec.algorithms, spec.kinds, p, spec.seed + frame.index,
                          base)


ABLATION_DEFAULTS = dict(
    algorithms=("so",) + PAIRWISE,
    kinds=("proposed", "generalized"),
    pairwise_kinds=("euclidean",),
    p_d=(0.5, 0.9),
)


def run_likelihood_ablation(spec: ExperimentSpec) -> tuple[list, list]:
    """Grid over spatial likelihood kinds.

    ``spec.kinds`` apply to every algorithm, ``spec.pairwise_kinds`` only to
    greedy and sensorwise (the euclidean distance has no joint likelihood).
    """
    check_combinations(spec.algorithms, spec.kinds)
    if spec.scenario == "cp":
        rows, failures, _ = run_cp_experiment(spec)
        return rows, failures
    if spec.scenario == "custom":
        from .core import read_frames
        return run_frames_experiment(spec, list(read_frames(spec.frames)))
    return run_mc_experiment(spec)


def _fields(spec: ExperimentSpec) -> dict:
    return {f: getattr(spec, f) for f in ExperimentSpec.__dataclass_fields__}


@dataclass(frozen=True)
class OracleCheck:
    trials: int
    so_optimal: int
    greedy_optimal: int
    rows: list = field(default_factory=list)


def small_instance(seed: int, max_tracks: int = 8):
    """Random instance with at most ``max_tracks`` tracks from at most 4 sensors."""
    rng = np.random.default_rng(seed)
    cfg = McConfig(area=15.0, n_objects=int(rng.integers(2, 4)), n_sensors=int(rng.integers(2, 5)),
                   sigma=1.0, p_d_true=float(rng.uniform(0.5, 1.0)), seed=seed)
    frame = gen_mc_frame(cfg)
    frame = ScenarioFrame(frame.tracks[:max_tracks], frame.sensors, frame.truths,
                          frame.truth_ids, meta=frame.meta)
    return frame, cfg.p_d_true


def run_oracle_check(trials: int = 200, seed: int = 0, sweeps: int = 500,
                     tol: float = 1e-9) -> OracleCheck:
    """How often SO and greedy (merge) reach the brute-force optimum."""
    so_hits = greedy_hits = 0
    rows = []
    for trial in range(trials):
        frame, p_d = small_instance(seed + trial)
        model = DetectionModel.fixed(p_d)
        best, best_ll = brute_force_optimal(frame.tracks, frame.sensors, model)
        h = run_so(frame.tracks, frame.sensors, SoConfig(sweeps, math.inf, seed + trial, model))
        so_assoc, so_ll = h.best()
        lik = ClusterLikelihood(frame.tracks, frame.sensors, model)
        g = greedy(frame.tracks, frame.sensors, d_t=15.0, merge=True)
        g_ll = lik.log_joint(g)
        so_ok = so_ll >= best_ll - tol
        g_ok = g_ll >= best_ll - tol
        so_hits += so_ok
        greedy_hits += g_ok
        rows.append({"trial": trial, "seed": seed + trial, "n_tracks": len(frame.tracks),
                     "oracle_log_lik": best_ll, "so_log_lik": so_ll, "greedy_log_lik": g_ll,
                     "so_optimal": int(so_ok), "greedy_optimal": int(g_ok)})
    return OracleCheck(trials, so_hits, greedy_hits, rows)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows: Sequence[dict], columns: Sequence[str] | None = None) -> str:
    if columns is None:
        columns = list(rows[0]) if rows else list(ROW_COLUMNS)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c, "")) for c in columns])
    return buf.getvalue()


def summarize(rows: Sequence[dict], keys: Sequence[str], value: str = "gospa") -> list[dict]:
    """Mean and standard error of ``value`` grouped by ``keys`` (first-seen order)."""
    groups: dict[tuple, list] = {}
    for r in rows:
        if r.get("status", "ok") != "ok":
            continue
        groups.setdefault(tuple(r[k] for k in keys), []).append(float(r[value]))
    out = []
    for key, vals in groups.items():
        v = np.array(vals)
        se = float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0
        out.append({**dict(zip(keys, key)), "n": len(v), "mean": float(v.mean()), "stderr": se})
    return out


def metadata(spec: ExperimentSpec | None, verb: str, started: float, **extra) -> dict:
    return {
        "verb": verb,
        "version": __version__,
        "spec": None if spec is None else {k: v for k, v in _fields(spec).items()},
        "wall_time_s": time.time() - started,
        "defaults": None if spec is None else {
            "sweeps": spec.n_sweeps, "gate": spec.gate_distance, "d_t": spec.threshold("proposed"),
            "gospa_c": GOSPA_C, "gospa_p": GOSPA_P, "top_k": spec.k_best,
        },
        **extra,
    }
