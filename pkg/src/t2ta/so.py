"""Stochastic optimization (SO) for track-to-track association.

Each step picks an action for one track, remain / split / move-to-cluster /
merge-with-cluster, with probability proportional to the likelihood ratio of
the resulting association to the current one. Only clusters touched by an
action enter its ratio; everything else cancels. Every visited association is
recorded, and the caller picks the most likely one (or the k most likely).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .core import SensorInfo, Track, canonicalize, singletons
from .likelihood import ClusterLikelihood, DetectionModel, FrameContext, SpatialKind

REMAIN, SPLIT, MOVE, MERGE = 0, 1, 2, 3
_KIND_NAMES = ("remain", "split", "move", "merge")
# weights below this fraction of the largest one are dropped
_MIN_REL_WEIGHT = 1e-300
_LOG_MIN_REL_WEIGHT = math.log(_MIN_REL_WEIGHT)


class Action(NamedTuple):
    kind: str
    target: int | None = None  # cluster label for move / merge


@dataclass(frozen=True)
class SoConfig:
    sweeps: int = 100
    gate: float = math.inf
    seed: int = 0
    detection: DetectionModel = field(default_factory=lambda: DetectionModel.fixed(0.9))
    kind: SpatialKind = SpatialKind.PROPOSED
    init: tuple | None = None  # warm start; all singletons when None

    def __post_init__(self):
        if self.sweeps < 1:
            raise ValueError("sweeps must be >= 1")
        if not self.gate > 0:
            raise ValueError("gate must be positive")
        object.__setattr__(self, "kind", SpatialKind(self.kind))
        if self.kind is SpatialKind.EUCLIDEAN:
            raise ValueError(
                "stochastic optimization needs a joint likelihood; the euclidean "
                "score is pairwise-only"
            )


class _Cluster:
    __slots__ = ("cid", "slot", "mask", "smask", "size", "ll", "cx", "cy")


class _SoState:
    """Mutable association state with cached per-cluster statistics."""

    def __init__(self, lik: ClusterLikelihood, labels: Sequence[int], gate: float):
        n = len(lik)
        self.lik = lik
        self.n = n
        self.gate2 = gate * gate
        self.gated = math.isfinite(gate)
        self.bit = [1 << t for t in range(n)]
        self.sbit = [1 << s for s in lik.sidx]
        self.px, self.py = lik.px, lik.py
        self.single = [lik.stats(b)[0] for b in self.bit]

        self.theta = [int(x) for x in labels]
        self.theta_arr = np.array(self.theta, dtype=np.int32)
        self.clusters: dict[int, _Cluster] = {}
        self.centers = np.full((n, 2), np.nan)
        self.slot_cid = [-1] * n
        for t, cid in enumerate(self.theta):
            c = self.clusters.get(cid)
            if c is None:
                c = self.clusters[cid] = _Cluster()
                c.cid = cid
                c.slot = len(self.clusters) - 1
                c.mask = c.smask = c.size = 0
                self.slot_cid[c.slot] = cid
            if c.smask & self.sbit[t]:
                raise ValueError("initial association violates the sensor constraint")
            c.mask |= self.bit[t]
            c.smask |= self.sbit[t]
            c.size += 1
        for c in self.clusters.values():
            self._refresh(c)
        self.free = list(range(n - 1, len(self.clusters) - 1, -1))
        self.next_id = max(self.theta, default=0) + 1
        self.total = math.fsum(c.ll for c in self.clusters.values())

    def _refresh(self, c: _Cluster):
        c.ll, c.cx, c.cy = self.lik.stats(c.mask)
        self.centers[c.slot, 0] = c.cx
        self.centers[c.slot, 1] = c.cy

    def _drop(self, c: _Cluster):
        del self.clusters[c.cid]
        self.centers[c.slot] = np.nan
        self.slot_cid[c.slot] = -1
        self.free.append(c.slot)

    def neighbours(self, t: int, own: int) -> list[int]:
        """Cluster labels within the gate of track t, ascending, excluding ``own``."""
        if not self.gated:
            return sorted(cid for cid in self.clusters if cid != own)
        x, y = self.px[t], self.py[t]
        d2 = (self.centers[:, 0] - x) ** 2 + (self.centers[:, 1] - y) ** 2
        slots = np.flatnonzero(d2 <= self.gate2).tolist()
        slot_cid = self.slot_cid
        return sorted(slot_cid[s] for s in slots if slot_cid[s] != own)

    def candidates(self, t: int):
        """Actions with non-zero weight and their log weights."""
        stats = self.lik.stats
        a = self.theta[t]
        A = self.clusters[a]
        bit = self.bit[t]
        llA = A.ll
        acts = [(REMAIN, None)]
        lws = [0.0]
        if A.size > 1:
            ll_rest = stats(A.mask ^ bit)[0]
            acts.append((SPLIT, None))
            lws.append(self.single[t] + ll_rest - llA)
        else:
            ll_rest = 0.0
        sb = self.sbit[t]
        merges = []
        merge_lws = []
        clusters = self.clusters
        for cid in self.neighbours(t, a):
            C = clusters[cid]
            if not C.smask & sb:
                acts.append((MOVE, cid))
                lws.append(stats(C.mask | bit)[0] + ll_rest - C.ll - llA)
            if not C.smask & A.smask:
                merges.append((MERGE, cid))
                merge_lws.append(stats(C.mask | A.mask)[0] - C.ll - llA)
        acts.extend(merges)
        lws.extend(merge_lws)
        return acts, lws

    def sample(self, t: int, u: float):
        acts, lws = self.candidates(t)
        top = max(lws)
        ws = [math.exp(lw - top) if lw - top > _LOG_MIN_REL_WEIGHT else 0.0 for lw in lws]
        r = u * math.fsum(ws)
        acc = 0.0
        pick = 0
        for i, w in enumerate(ws):
            if w > 0.0:
                pick = i
                acc += w
                if acc > r:
                    break
        return acts[pick], lws[pick]

    def apply(self, t: int, code: int, target: int | None):
        if code == REMAIN:
            return
        A = self.clusters[self.theta[t]]
        bit, sb = self.bit[t], self.sbit[t]
        if code == MERGE:
            C = self.clusters[target]
            members = self.lik.members_of(A.mask)
            C.mask |= A.mask
            C.smask |= A.smask
            C.size += A.size
            self._refresh(C)
            self._drop(A)
            for m in members:
                self.theta[m] = target
                self.theta_arr[m] = target
        else:
            if code == SPLIT:
                C = _Cluster()
                C.cid = target = self.next_id
                self.next_id += 1
                C.slot = self.free.pop()
                C.mask = C.smask = C.size = 0
                self.slot_cid[C.slot] = target
                self.clusters[target] = C
            else:
                C = self.clusters[target]
            C.mask |= bit
            C.smask |= sb
            C.size += 1
            self._refresh(C)
            A.mask ^= bit
            A.smask ^= sb
            A.size -= 1
            if A.size:
                self._refresh(A)
            else:
                self._drop(A)
            self.theta[t] = target
            self.theta_arr[t] = target
        # fsum makes the total a function of the partition alone
        self.total = math.fsum(c.ll for c in self.clusters.values())


def _to_action(code: int, target) -> Action:
    return Action(_KIND_NAMES[code], target)


def action_log_weights(t: int, assoc: Sequence[int], tracks: Sequence[Track],
                       sensors: Sequence[SensorInfo], config: SoConfig,
                       context: FrameContext | None = None):
    """Every action for track t with its log weight (-inf when impossible)."""
    lik = ClusterLikelihood(tracks, sensors, config.detection, config.kind, context)
    state = _SoState(lik, assoc, config.gate)
    acts, lws = state.candidates(t)
    found = {a: lw for a, lw in zip(acts, lws)}
    own = state.theta[t]
    others = sorted(c for c in state.clusters if c != own)
    full = [(REMAIN, None), (SPLIT, None)]
    full += [(MOVE, c) for c in others]
    full += [(MERGE, c) for c in others]
    return [_to_action(*a) for a in full], [found.get(a, -math.inf) for a in full]


def action_weights(t: int, assoc: Sequence[int], tracks: Sequence[Track],
                   sensors: Sequence[SensorInfo], config: SoConfig,
                   context: FrameContext | None = None):
    """Actions for track t and their (unnormalized) likelihood-ratio weights."""
    acts, lws = action_log_weights(t, assoc, tracks, sensors, config, context)
    return acts, [math.exp(lw) for lw in lws]


def apply_action(assoc: Sequence[int], t: int, action: Action) -> tuple:
    """Association after applying ``action`` to track t, canonicalized."""
    labels = [int(x) for x in assoc]
    if action.kind == "split":
        labels[t] = max(labels) + 1
    elif action.kind == "move":
        labels[t] = action.target
    elif action.kind == "merge":
        own = labels[t]
        labels = [action.target if x == own else x for x in labels]
    elif action.kind != "remain":
        raise ValueError(f"unknown action {action.kind!r}")
    return canonicalize(labels)


@dataclass(frozen=True)
class HypothesisStats:
    log_lik: float
    count: int
    first_index: int


class HypothesisSet:
    """All associations visited by one SO run, in sampling order.

    Samples are stored with the run's internal cluster labels and canonicalized
    on access.
    """

    def __init__(self, raw: np.ndarray, log_liks: np.ndarray):
        self._raw = raw
        self._ll = log_liks
        self._unique = None

    def __len__(self):
        return len(self._ll)

    @property
    def log_likelihoods(self) -> np.ndarray:
        return self._ll

    def association(self, i: int) -> tuple:
        return canonicalize(self._raw[i].tolist())

    def __iter__(self):
        for i in range(len(self)):
            yield self.association(i), float(self._ll[i])

    def prefix(self, n_samples: int) -> HypothesisSet:
        return HypothesisSet(self._raw[:n_samples], self._ll[:n_samples])

    def best(self) -> tuple[tuple, float]:
        if len(self) == 0:
            raise ValueError("empty hypothesis set")
        i = int(np.argmax(self._ll))  # first occurrence on ties
        return self.association(i), float(self._ll[i])

    def top_k(self, k: int) -> list[tuple[tuple, float]]:
        if k < 1:
            raise ValueError("k must be >= 1")
        order = np.argsort(-self._ll, kind="stable")
        seen_raw = set()
        seen = set()
        out = []
        for i in order:
            key = self._raw[i].tobytes()
            if key in seen_raw:
                continue
            seen_raw.add(key)
            assoc = self.association(i)
            if assoc in seen:
                continue
            seen.add(assoc)
            out.append((assoc, float(self._ll[i])))
            if len(out) == k:
                break
        return out

    def unique(self) -> dict[tuple, HypothesisStats]:
        """Distinct associations with best log-likelihood, visit count and first index."""
        if self._unique is None:
            by_raw: dict[bytes, list] = {}
            for i in range(len(self)):
                key = self._raw[i].tobytes()
                entry = by_raw.get(key)
                if entry is None:
                    by_raw[key] = [i, 1, float(self._ll[i])]
                else:
                    entry[1] += 1
                    entry[2] = max(entry[2], float(self._ll[i]))
            merged: dict[tuple, list] = {}
            for first, count, ll in by_raw.values():
                assoc = self.association(first)
                m = merged.get(assoc)
                if m is None:
                    merged[assoc] = [ll, count, first]
                else:
                    m[0] = max(m[0], ll)
                    m[1] += count
                    m[2] = min(m[2], first)
            self._unique = {
                a: HypothesisStats(ll, count, first)
                for a, (ll, count, first) in sorted(merged.items(), key=lambda kv: kv[1][2])
            }
        return self._unique

    def to_json(self, all_samples: bool = False) -> str:
        if all_samples:
            rows = [
                {"sample": i, "association": list(a), "log_lik": ll}
                for i, (a, ll) in enumerate(self)
            ]
        else:
            rows = [
                {"sample": s.first_index, "association": list(a), "log_lik": s.log_lik,
                 "count": s.count}
                for a, s in self.unique().items()
            ]
        return json.dumps(rows)


def run(tracks: Sequence[Track], sensors: Sequence[SensorInfo], config: SoConfig,
        context: FrameContext | None = None) -> HypothesisSet:
    """N sweeps over all tracks starting from all singletons (or ``config.init``)."""
    n = len(tracks)
    if n == 0:
        return HypothesisSet(np.zeros((0, 0), dtype=np.int32), np.zeros(0))
    lik = ClusterLikelihood(tracks, sensors, config.detection, config.kind, context)
    init = singletons(n) if config.init is None else canonicalize(config.init)
    if len(init) != n:
        raise ValueError("warm start does not match the number of tracks")
    state = _SoState(lik, init, config.gate)
    rng = np.random.default_rng(config.seed)

    n_samples = config.sweeps * n
    raw = np.empty((n_samples, n), dtype=np.int32)
    lls = np.empty(n_samples)
    i = 0
    for _ in range(config.sweeps):
        for t, u in enumerate(rng.random(n).tolist()):
            (code, target), _lw = state.sample(t, u)
            if code != REMAIN:
                state.apply(t, code, target)
            raw[i] = state.theta_arr
            lls[i] = state.total
            i += 1
    return HypothesisSet(raw, lls)


def best_hypothesis(h: HypothesisSet) -> tuple[tuple, float]:
    return h.best()


def top_k(h: HypothesisSet, k: int) -> list[tuple[tuple, float]]:
    return h.top_k(k)
