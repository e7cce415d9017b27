"""Cluster likelihoods for track-to-track association.

A cluster's likelihood is the product of a cardinality term (which sensors saw
the object) and a spatial term (how well the member states agree with the
fused cluster center). Everything is evaluated in the log domain and only on
the position block (first two state entries) of each track.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import Track, SensorInfo, clusters_of

LOG_2PI = math.log(2.0 * math.pi)
NEG_INF = float("-inf")


class SpatialKind(str, enum.Enum):
    PROPOSED = "proposed"
    GENERALIZED = "generalized"
    EUCLIDEAN = "euclidean"


@dataclass(frozen=True)
class FrameContext:
    """Frame statistics needed by the estimated-constant detection model."""

    n_tracks: int
    n_sensors: int
    max_tracks_per_sensor: int

    @classmethod
    def from_frame(cls, tracks: Sequence[Track], sensors: Sequence[SensorInfo]) -> FrameContext:
        counts: dict[int, int] = {}
        for t in tracks:
            counts[t.sensor] = counts.get(t.sensor, 0) + 1
        return cls(len(tracks), len(sensors), max(counts.values(), default=0))


@dataclass(frozen=True)
class DetectionModel:
    """Detection probability p_D(x, s), capped at ``p_cap``.

    kinds:
      ``fixed``               p for every sensor and state
      ``estimated_constant``  rho * N_T / (N_S * max tracks of one sensor)
      ``distance_based``      p_in within ``radius`` of the sensor, else p_out
    """

    kind: str = "fixed"
    p: float = 0.9
    rho: float = 0.25
    p_in: float = 0.97
    p_out: float = 0.15
    radius: float = 95.0  # 85 m sensor range + 10 m margin
    p_cap: float = 0.97

    def __post_init__(self):
        if self.kind not in ("fixed", "estimated_constant", "distance_based"):
            raise ValueError(f"unknown detection model {self.kind!r}")
        for name in ("p", "p_in", "p_out", "p_cap"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {v}")
        if self.rho <= 0 or self.radius <= 0:
            raise ValueError("rho and radius must be positive")

    @classmethod
    def fixed(cls, p: float, p_cap: float = 0.97) -> DetectionModel:
        return cls("fixed", p=p, p_cap=p_cap)

    @classmethod
    def estimated_constant(cls, rho: float = 0.25, p_cap: float = 0.97) -> DetectionModel:
        return cls("estimated_constant", rho=rho, p_cap=p_cap)

    @classmethod
    def distance_based(cls, p_in=0.97, p_out=0.15, radius=95.0, p_cap=0.97) -> DetectionModel:
        return cls("distance_based", p_in=p_in, p_out=p_out, radius=radius, p_cap=p_cap)

    def constant_value(self, context: FrameContext | None = None) -> float | None:
        """The sensor- and state-independent p_D, or None for distance_based."""
        if self.kind == "fixed":
            return min(self.p, self.p_cap)
        if self.kind == "estimated_constant":
            if context is None:
                raise ValueError("estimated_constant detection model needs a FrameContext")
            if context.n_tracks == 0:
                return self.p_cap
            p = self.rho * context.n_tracks / (context.n_sensors * context.max_tracks_per_sensor)
            return min(p, self.p_cap)
        return None


def detection_prob(model: DetectionModel, fused_mean, sensor: SensorInfo,
                   context: FrameContext | None = None) -> float:
    p = model.constant_value(context)
    if p is not None:
        return p
    d = float(np.hypot(*(np.asarray(fused_mean, dtype=float)[:2] - sensor.position)))
    p = model.p_in if d < model.radius else model.p_out
    return min(p, model.p_cap)


def fuse_cluster(members: Sequence[Track]):
    """Information-form fusion assuming independent track errors.

    Returns (mean, cov) with cov = (sum P_t^-1)^-1, mean = cov sum P_t^-1 x_t.
    """
    if not members:
        raise ValueError("cannot fuse an empty cluster")
    dim = members[0].state.size
    if any(t.state.size != dim for t in members):
        raise ValueError("tracks in a cluster must share the state dimension")
    if len(members) == 1:
        return members[0].state.copy(), members[0].cov.copy()
    info = np.zeros((dim, dim))
    vec = np.zeros(dim)
    for t in members:
        Pinv = np.linalg.inv(t.cov)
        info += Pinv
        vec += Pinv @ t.state
    cov = np.linalg.inv(info)
    cov = 0.5 * (cov + cov.T)
    return cov @ vec, cov


@dataclass(frozen=True)
class ClusterStat:
    fused_mean: np.ndarray
    fused_cov: np.ndarray
    log_lik: float
    members: frozenset


class ClusterLikelihood:
    """Memoized cluster log-likelihoods over one set of tracks.

    Clusters are keyed by a bitmask over track indices; bit t set means track
    t is a member. The cache never invalidates: a changed membership is a
    different key.
    """

    def __init__(self, tracks: Sequence[Track], sensors: Sequence[SensorInfo] | None = None,
                 model: DetectionModel | None = None, kind: SpatialKind | str = SpatialKind.PROPOSED,
                 context: FrameContext | None = None):
        self.tracks = tuple(tracks)
        self.kind = SpatialKind(kind)
        self.model = model
        if sensors is None:
            ids = sorted({t.sensor for t in self.tracks})
            sensors = [SensorInfo(i, (0.0, 0.0)) for i in ids]
        self.sensors = tuple(sensors)
        self.sensor_index = {s.id: i for i, s in enumerate(self.sensors)}
        missing = {t.sensor for t in self.tracks} - set(self.sensor_index)
        if missing:
            raise ValueError(f"tracks reference unknown sensors {sorted(missing)}")

        self.px, self.py = [], []
        self.ca, self.cb, self.cc = [], [], []
        self.ia, self.ib, self.ic = [], [], []
        self.hx, self.hy = [], []
        self.sidx = []
        for t in self.tracks:
            x, y = float(t.state[0]), float(t.state[1])
            a, b, c = float(t.cov[0, 0]), float(t.cov[0, 1]), float(t.cov[1, 1])
            det = a * c - b * b
            ia, ib, ic = c / det, -b / det, a / det
            self.px.append(x)
            self.py.append(y)
            self.ca.append(a)
            self.cb.append(b)
            self.cc.append(c)
            self.ia.append(ia)
            self.ib.append(ib)
            self.ic.append(ic)
            self.hx.append(ia * x + ib * y)
            self.hy.append(ib * x + ic * y)
            self.sidx.append(self.sensor_index[t.sensor])

        self._card_const = None
        self._card_dist = None
        if model is not None and self.kind is not SpatialKind.EUCLIDEAN:
            if context is None and model.kind == "estimated_constant":
                context = FrameContext.from_frame(self.tracks, self.sensors)
            p = model.constant_value(context)
            if p is not None:
                self._card_const = (math.log(p), math.log1p(-p), len(self.sensors))
            else:
                pin = min(model.p_in, model.p_cap)
                pout = min(model.p_out, model.p_cap)
                self._card_dist = (
                    [float(s.position[0]) for s in self.sensors],
                    [float(s.position[1]) for s in self.sensors],
                    model.radius ** 2,
                    math.log(pin), math.log1p(-pin),
                    math.log(pout), math.log1p(-pout),
                )
        self.context = context
        self._cache: dict[int, tuple] = {}

    def __len__(self):
        return len(self.tracks)

    @staticmethod
    def mask_of(members: Iterable[int]) -> int:
        m = 0
        for t in members:
            m |= 1 << t
        return m

    @staticmethod
    def members_of(mask: int) -> list[int]:
        out = []
        while mask:
            low = mask & -mask
            out.append(low.bit_length() - 1)
            mask ^= low
        return out

    def stats(self, mask: int) -> tuple:
        """(log-likelihood, center x, center y) of the cluster ``mask``."""
        hit = self._cache.get(mask)
        if hit is None:
            hit = self._cache[mask] = self._compute(self.members_of(mask))
        return hit

    def log_lik(self, members: Iterable[int]) -> float:
        return self.stats(self.mask_of(members))[0]

    def center(self, members: Iterable[int]) -> tuple[float, float]:
        _, cx, cy = self.stats(self.mask_of(members))
        return cx, cy

    def log_joint(self, assoc: Sequence[int]) -> float:
        return math.fsum(self.log_lik(c) for c in clusters_of(assoc))

    def cluster_stat(self, members: Iterable[int]) -> ClusterStat:
        members = frozenset(members)
        mean, cov = fuse_cluster([self.tracks[t] for t in sorted(members)])
        return ClusterStat(mean, cov, self.log_lik(members), members)

    # kernels

    def _fuse2(self, members):
        a = b = c = hx = hy = 0.0
        for t in members:
            a += self.ia[t]
            b += self.ib[t]
            c += self.ic[t]
            hx += self.hx[t]
            hy += self.hy[t]
        det = a * c - b * b
        pa, pb, pc = c / det, -b / det, a / det
        return pa, pb, pc, pa * hx + pb * hy, pb * hx + pc * hy

    def _compute(self, members: list[int]) -> tuple:
        if not members:
            return 0.0, math.nan, math.nan
        sensors = {self.sidx[t] for t in members}
        if self.kind is SpatialKind.EUCLIDEAN:
            cx = sum(self.px[t] for t in members) / len(members)
            cy = sum(self.py[t] for t in members) / len(members)
            spatial = -sum(math.hypot(self.px[t] - cx, self.py[t] - cy) for t in members)
            if len(sensors) != len(members):
                return NEG_INF, cx, cy
            return spatial, cx, cy

        pa, pb, pc, cx, cy = self._fuse2(members)
        if len(sensors) != len(members):
            return NEG_INF, cx, cy
        spatial = self._spatial(members, pa, pb, pc, cx, cy)
        if self.model is None:
            return spatial, cx, cy
        return spatial + self._cardinality(sensors, cx, cy), cx, cy

    def _spatial(self, members, pa, pb, pc, cx, cy) -> float:
        proposed = self.kind is SpatialKind.PROPOSED
        ll = 0.0
        for t in members:
            sa, sb, sc = self.ca[t], self.cb[t], self.cc[t]
            if proposed:
                sa += pa
                sb += pb
                sc += pc
            det = sa * sc - sb * sb
            if not det > 0.0:
                warnings.warn(f"singular innovation covariance for track {t}", RuntimeWarning)
                return NEG_INF
            dx = self.px[t] - cx
            dy = self.py[t] - cy
            quad = (sc * dx * dx - 2.0 * sb * dx * dy + sa * dy * dy) / det
            ll -= LOG_2PI + 0.5 * math.log(det) + 0.5 * quad
        return ll

    def _cardinality(self, sensors: set, cx: float, cy: float) -> float:
        if self._card_const is not None:
            logp, log1mp, n_sensors = self._card_const
            k = len(sensors)
            return k * logp + (n_sensors - k) * log1mp
        sx, sy, r2, lin, l1in, lout, l1out = self._card_dist
        ll = 0.0
        for i in range(len(sx)):
            dx = cx - sx[i]
            dy = cy - sy[i]
            inside = dx * dx + dy * dy < r2
            if i in sensors:
                ll += lin if inside else lout
            else:
                ll += l1in if inside else l1out
        return ll


def log_cardinality_lik(cluster_sensors, all_sensors: Sequence[SensorInfo], fused_mean,
                        model: DetectionModel, context: FrameContext | None = None) -> float:
    """Log-probability that exactly ``cluster_sensors`` detected the object."""
    cluster_sensors = set(cluster_sensors)
    ll = 0.0
    for s in all_sensors:
        p = detection_prob(model, fused_mean, s, context)
        ll += math.log(p) if s.id in cluster_sensors else math.log1p(-p)
    return ll


def log_spatial_lik(members: Sequence[Track], kind: SpatialKind | str = SpatialKind.PROPOSED) -> float:
    if not members:
        raise ValueError("spatial likelihood of an empty cluster")
    # sensor validity is the caller's business here, so give every member its own sensor
    relabeled = [Track(i, t.state, t.cov) for i, t in enumerate(members)]
    lik = ClusterLikelihood(relabeled, kind=kind)
    return lik.log_lik(range(len(members)))


def log_cluster_lik(members: Sequence[Track], sensors: Sequence[SensorInfo], model: DetectionModel,
                    kind: SpatialKind | str = SpatialKind.PROPOSED,
                    context: FrameContext | None = None) -> float:
    """Cardinality plus spatial log-likelihood; -inf for a sensor-invalid cluster.

    The euclidean kind is a pairwise score and carries no cardinality term.
    """
    if model.kind == "estimated_constant" and context is None:
        raise ValueError("estimated_constant detection model needs a FrameContext")
    lik = ClusterLikelihood(members, sensors, model, kind, context)
    return lik.log_lik(range(len(members)))


def log_joint_lik(assoc: Sequence[int], tracks: Sequence[Track], sensors: Sequence[SensorInfo],
                  model: DetectionModel, kind: SpatialKind | str = SpatialKind.PROPOSED,
                  context: FrameContext | None = None) -> float:
    if len(assoc) != len(tracks):
        raise ValueError("association and track list differ in length")
    return ClusterLikelihood(tracks, sensors, model, kind, context).log_joint(assoc)
