"""Comparison association methods and an exact reference optimizer."""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .assignment import hungarian
from .core import SensorInfo, Track, canonicalize, singletons
from .likelihood import ClusterLikelihood, DetectionModel, FrameContext, SpatialKind

D_MAX = 1e12  # stands in for an infinite distance; larger than any admissible cost
DEFAULT_BRUTE_FORCE_CAP = 10


def pairwise_cost(t_i: Track, t_j: Track, kind: SpatialKind | str = SpatialKind.PROPOSED) -> float:
    """Negative log spatial likelihood of the pair, or their distance for ``euclidean``."""
    kind = SpatialKind(kind)
    if kind is SpatialKind.EUCLIDEAN:
        return float(np.hypot(*(t_i.position - t_j.position)))
    lik = ClusterLikelihood([Track(0, t_i.state, t_i.cov), Track(1, t_j.state, t_j.cov)], kind=kind)
    return -lik.log_lik((0, 1))


def _pairwise_matrix(lik: ClusterLikelihood) -> np.ndarray:
    """Full symmetric cost matrix; same-sensor pairs are not masked here."""
    n = len(lik)
    D = np.zeros((n, n))
    relabeled = ClusterLikelihood(
        [Track(i, t.state, t.cov) for i, t in enumerate(lik.tracks)], kind=lik.kind
    )
    for i in range(n):
        for j in range(i):
            D[i, j] = D[j, i] = -relabeled.log_lik((i, j))
    return D


def greedy_cost_matrix(tracks: Sequence[Track], kind, d_t: float) -> np.ndarray:
    """Lower-triangular pair costs with forbidden entries set to ``D_MAX``."""
    lik = ClusterLikelihood(tracks, kind=kind)
    D = _pairwise_matrix(lik)
    sensors = np.array([t.sensor for t in tracks])
    forbidden = (
        np.triu(np.ones_like(D, dtype=bool))
        | (D > d_t)
        | (sensors[:, None] == sensors[None, :])
    )
    D[forbidden] = D_MAX
    return D


def greedy(tracks: Sequence[Track], sensors: Sequence[SensorInfo] | None = None,
           kind: SpatialKind | str = SpatialKind.PROPOSED, d_t: float = 15.0,
           merge: bool = True, invalidate: str = "printed") -> tuple:
    """Pairwise greedy association in ascending order of pair cost.

    With ``merge`` two existing clusters are joined when their sensor sets are
    disjoint; without it such pairs are skipped.

    ``invalidate="printed"`` blanks row i against all tracks of sensor(j) and
    column j against all tracks of sensor(i) after each pair, as in the
    reference pseudocode. This can retire pairs whose clusters could still be
    merged; ``invalidate="pair"`` blanks only the processed entry.
    """
    if invalidate not in ("printed", "pair"):
        raise ValueError(f"unknown invalidation rule {invalidate!r}")
    n = len(tracks)
    theta = list(singletons(n))
    if n < 2:
        return tuple(theta)
    D = greedy_cost_matrix(tracks, kind, d_t)
    sensor = [t.sensor for t in tracks]
    by_sensor: dict[int, list[int]] = {}
    for t, s in enumerate(sensor):
        by_sensor.setdefault(s, []).append(t)

    def members(c):
        return [t for t in range(n) if theta[t] == c]

    def sensors_of(c):
        return {sensor[t] for t in range(n) if theta[t] == c}

    while D.min() < D_MAX:
        i, j = np.unravel_index(np.argmin(D), D.shape)
        i, j = int(i), int(j)
        ci, cj = theta[i], theta[j]
        size_i, size_j = len(members(ci)), len(members(cj))
        if size_i == 1 and size_j == 1:
            theta[i] = cj
        elif size_i == 1 and sensor[i] not in sensors_of(cj):
            theta[i] = cj
        elif size_j == 1 and sensor[j] not in sensors_of(ci):
            theta[j] = ci
        elif merge and ci != cj and not sensors_of(ci) & sensors_of(cj):
            for t in members(ci):
                theta[t] = cj
        if invalidate == "pair":
            D[i, j] = D_MAX
            continue
        # invalidation as printed: row i against j's sensor, column j against i's sensor
        D[i, by_sensor[sensor[j]]] = D_MAX
        D[by_sensor[sensor[i]], j] = D_MAX
    return canonicalize(theta)


def sensorwise(tracks: Sequence[Track], sensors: Sequence[SensorInfo] | None = None,
               kind: SpatialKind | str = SpatialKind.PROPOSED, d_t: float = 15.0,
               sensor_order: Sequence[int] | None = None) -> tuple:
    """Sequential optimal 2-D assignments, one sensor at a time.

    Each sensor's tracks are matched against the track most recently added to
    every existing cluster; matches costing more than ``d_t`` and unmatched
    tracks open new clusters. Sensors are processed in ascending id unless
    ``sensor_order`` is given.
    """
    n = len(tracks)
    if n == 0:
        return ()
    lik = ClusterLikelihood(tracks, kind=kind)
    D = _pairwise_matrix(lik)
    if sensor_order is None:
        sensor_order = sorted({t.sensor for t in tracks})
    theta = [0] * n
    last: list[int] = []  # cluster c (0-based) -> most recently added track
    for s in sensor_order:
        rows = [t for t in range(n) if tracks[t].sensor == s]
        if not rows:
            continue
        col = hungarian(D[np.ix_(rows, last)]) if last else np.full(len(rows), -1)
        for r, t in enumerate(rows):
            c = int(col[r])
            if c >= 0 and D[t, last[c]] <= d_t:
                theta[t] = c + 1
                last[c] = t
            else:
                last.append(t)
                theta[t] = len(last)
    if 0 in theta:
        raise ValueError("sensor_order does not cover every track's sensor")
    return canonicalize(theta)


def sensor_valid_partitions(tracks: Sequence[Track]):
    """All sensor-valid partitions as restricted growth strings, lexicographic order."""
    n = len(tracks)
    sensor = [t.sensor for t in tracks]
    labels = [0] * n
    cluster_sensors: list[set] = []

    def rec(t):
        if t == n:
            yield tuple(labels)
            return
        for c, used in enumerate(cluster_sensors):
            if sensor[t] not in used:
                used.add(sensor[t])
                labels[t] = c + 1
                yield from rec(t + 1)
                used.discard(sensor[t])
        cluster_sensors.append({sensor[t]})
        labels[t] = len(cluster_sensors)
        yield from rec(t + 1)
        cluster_sensors.pop()

    yield from rec(0)


def brute_force_optimal(tracks: Sequence[Track], sensors: Sequence[SensorInfo],
                        model: DetectionModel, kind: SpatialKind | str = SpatialKind.PROPOSED,
                        cap: int = DEFAULT_BRUTE_FORCE_CAP,
                        context: FrameContext | None = None) -> tuple[tuple, float]:
    """Exact maximizer of the joint log-likelihood by enumeration.

    Ties go to the lexicographically smallest canonical association.
    """
    kind = SpatialKind(kind)
    if kind is SpatialKind.EUCLIDEAN:
        raise ValueError("brute force needs a joint likelihood; euclidean is pairwise-only")
    n = len(tracks)
    if n > cap:
        raise ValueError(f"brute force refused: {n} tracks exceeds the cap of {cap}")
    if n == 0:
        return (), 0.0
    lik = ClusterLikelihood(tracks, sensors, model, kind, context)
    best, best_ll = None, -math.inf
    for labels in sensor_valid_partitions(tracks):
        masks: dict[int, int] = {}
        for t, c in enumerate(labels):
            masks[c] = masks.get(c, 0) | (1 << t)
        ll = math.fsum(lik.stats(m)[0] for m in masks.values())
        if best is None or ll > best_ll:
            best, best_ll = labels, ll
    return best, best_ll
