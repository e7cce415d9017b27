"""Domain types for track-to-track association.

Tracks are addressed by their position in the frame's track list (0-based).
A joint association is a tuple of positive cluster labels aligned with that
list; two associations describe the same partition iff their canonical forms
are equal.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

JointAssociation = tuple  # tuple[int, ...], entries >= 1
Cluster = frozenset  # frozenset[int] of track indices


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Track:
    """One sensor-local state estimate.

    ``object_id``, ``is_vru`` and ``local_id`` are carried for evaluation and
    message rules only; the association algorithms never read them.
    """

    sensor: int
    state: np.ndarray
    cov: np.ndarray
    timestamp: float = 0.0
    object_id: int | None = None
    is_vru: bool = False
    local_id: int | None = None

    def __post_init__(self):
        state = _readonly(self.state).reshape(-1)
        cov = _readonly(self.cov)
        if cov.shape != (state.size, state.size):
            raise ValueError(
                f"covariance shape {cov.shape} does not match state dimension {state.size}"
            )
        if not np.allclose(cov, cov.T, rtol=1e-9, atol=1e-12):
            raise ValueError("covariance is not symmetric")
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise ValueError("covariance is not positive definite") from None
        object.__setattr__(self, "state", state)
        object.__setattr__(self, "cov", cov)

    @property
    def position(self) -> np.ndarray:
        return self.state[:2]

    @property
    def position_cov(self) -> np.ndarray:
        return self.cov[:2, :2]

    def to_dict(self) -> dict:
        return {
            "sensor": self.sensor,
            "state": self.state.tolist(),
            "cov": self.cov.tolist(),
            "timestamp": self.timestamp,
            "object_id": self.object_id,
            "is_vru": self.is_vru,
            "local_id": self.local_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> Track:
        return cls(
            sensor=d["sensor"],
            state=d["state"],
            cov=d["cov"],
            timestamp=d.get("timestamp", 0.0),
            object_id=d.get("object_id"),
            is_vru=d.get("is_vru", False),
            local_id=d.get("local_id"),
        )


@dataclass(frozen=True, eq=False)
class SensorInfo:
    id: int
    position: np.ndarray
    range: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "position", _readonly(self.position).reshape(2))
        if self.range is not None and not self.range > 0:
            raise ValueError("sensor range must be positive")

    def to_dict(self) -> dict:
        return {"id": self.id, "position": self.position.tolist(), "range": self.range}

    @classmethod
    def from_dict(cls, d: dict) -> SensorInfo:
        return cls(d["id"], d["position"], d.get("range"))


@dataclass(frozen=True, eq=False)
class ScenarioFrame:
    """Tracks of one association step plus ground truth and sensor poses."""

    tracks: tuple
    sensors: tuple
    truths: np.ndarray  # (n_objects, 2) positions
    truth_ids: tuple = ()
    time: float = 0.0
    index: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "tracks", tuple(self.tracks))
        object.__setattr__(self, "sensors", tuple(self.sensors))
        truths = _readonly(self.truths).reshape(-1, 2)
        object.__setattr__(self, "truths", truths)
        ids = tuple(self.truth_ids) if self.truth_ids else tuple(range(len(truths)))
        if len(ids) != len(truths):
            raise ValueError("truth_ids and truths differ in length")
        object.__setattr__(self, "truth_ids", ids)

    def to_json(self) -> str:
        return json.dumps(
            {
                "index": self.index,
                "time": self.time,
                "tracks": [t.to_dict() for t in self.tracks],
                "sensors": [s.to_dict() for s in self.sensors],
                "truths": self.truths.tolist(),
                "truth_ids": list(self.truth_ids),
                "meta": self.meta,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, line: str) -> ScenarioFrame:
        d = json.loads(line)
        return cls(
            tracks=[Track.from_dict(t) for t in d["tracks"]],
            sensors=[SensorInfo.from_dict(s) for s in d["sensors"]],
            truths=np.array(d["truths"], dtype=float).reshape(-1, 2),
            truth_ids=d.get("truth_ids", ()),
            time=d.get("time", 0.0),
            index=d.get("index", 0),
            meta=d.get("meta", {}),
        )


def write_frames(path, frames: Iterable[ScenarioFrame]) -> int:
    n = 0
    with open(path, "w") as f:
        for frame in frames:
            f.write(frame.to_json())
            f.write("\n")
            n += 1
    return n


def read_frames(path) -> Iterator[ScenarioFrame]:
    with open(path) as f:
        for line in f:
            if line.strip():
                yield ScenarioFrame.from_json(line)


def canonicalize(assignment: Sequence[int]) -> JointAssociation:
    """Renumber cluster labels consecutively in order of first appearance.

    >>> canonicalize([3, 2, 3])
    (1, 2, 1)
    """
    relabel: dict[int, int] = {}
    out = []
    for label in assignment:
        label = int(label)
        if label < 1:
            raise ValueError(f"cluster labels must be >= 1, got {label}")
        new = relabel.get(label)
        if new is None:
            new = relabel[label] = len(relabel) + 1
        out.append(new)
    return tuple(out)


def clusters_of(assoc: Sequence[int]) -> list[Cluster]:
    """Clusters of an association, ordered by cluster label."""
    groups: dict[int, list[int]] = {}
    for t, label in enumerate(assoc):
        groups.setdefault(int(label), []).append(t)
    return [frozenset(groups[k]) for k in sorted(groups)]


def association_from_clusters(clusters: Iterable[Iterable[int]], n_tracks: int) -> JointAssociation:
    labels = [0] * n_tracks
    for c, members in enumerate(clusters, start=1):
        for t in members:
            if labels[t]:
                raise ValueError(f"track {t} appears in more than one cluster")
            labels[t] = c
    if 0 in labels:
        raise ValueError("clusters do not cover every track")
    return canonicalize(labels)


def is_sensor_valid(cluster: Iterable[int], tracks: Sequence[Track]) -> bool:
    members = list(cluster)
    return len({tracks[t].sensor for t in members}) == len(members)


def is_valid_association(assoc: Sequence[int], tracks: Sequence[Track]) -> bool:
    return len(assoc) == len(tracks) and all(
        is_sensor_valid(c, tracks) for c in clusters_of(assoc)
    )


def truth_association(tracks: Sequence[Track]) -> JointAssociation:
    """Association grouping tracks by ground-truth object.

    A sensor that reports the same object twice (a stale and a fresh local
    track) would break the sensor constraint; the later duplicates are put into
    clusters of their own.
    """
    clusters: list[list[int]] = []
    open_clusters: dict[object, list[list[int]]] = {}
    for t, track in enumerate(tracks):
        if track.object_id is None:
            clusters.append([t])
            continue
        placed = False
        for members in open_clusters.setdefault(track.object_id, []):
            if all(tracks[m].sensor != track.sensor for m in members):
                members.append(t)
                placed = True
                break
        if not placed:
            members = [t]
            open_clusters[track.object_id].append(members)
            clusters.append(members)
    return association_from_clusters(clusters, len(tracks))


def singletons(n_tracks: int) -> JointAssociation:
    return tuple(range(1, n_tracks + 1))
