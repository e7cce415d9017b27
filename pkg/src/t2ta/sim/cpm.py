"""Collective perception messages: generation rules, lossy channel and RSU buffer."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from ..core import SensorInfo, Track
from .motion import LocalTrack, ukf_predict

EPS = 1e-6
FULL_FRESHNESS = 0.1
VRU_INTERVAL = 0.5
VEHICLE_INTERVAL = 1.0
POSITION_DELTA = 4.0
SPEED_DELTA = 0.5
HEADING_DELTA = math.radians(4.0)
MIN_HEADING_SPEED = 0.1


@dataclass(frozen=True)
class CommConfig:
    mode: str = "etsi"
    cpm_interval: float = 0.1
    window: float | None = None  # RSU accumulation; 0.1 s full, 1 s etsi by default
    staleness: float = 1.0
    loss: float = 0.0
    latency: float = 0.0

    def __post_init__(self):
        if self.mode not in ("full", "etsi"):
            raise ValueError(f"unknown communication mode {self.mode!r}")
        if self.window is None:
            object.__setattr__(self, "window", 0.1 if self.mode == "full" else 1.0)
        if not 0.0 <= self.loss <= 1.0:
            raise ValueError("loss probability must lie in [0, 1]")
        if self.window <= 0 or self.cpm_interval <= 0 or self.staleness <= 0:
            raise ValueError("intervals must be positive")
        if self.latency < 0:
            raise ValueError("latency must be non-negative")


def _angle_diff(a: float, b: float) -> float:
    return abs((a - b + math.pi) % (2 * math.pi) - math.pi)


def _significant_change(track: LocalTrack) -> bool:
    dx = track.state[0] - track.sent_position[0]
    dy = track.state[1] - track.sent_position[1]
    if math.hypot(dx, dy) > POSITION_DELTA:
        return True
    speed = track.speed
    if abs(speed - track.sent_speed) > SPEED_DELTA:
        return True
    if speed < MIN_HEADING_SPEED or track.sent_speed < MIN_HEADING_SPEED:
        return False  # heading undefined near standstill
    return _angle_diff(track.heading, track.sent_heading) > HEADING_DELTA


def mark_sent(track: LocalTrack, now: float) -> LocalTrack:
    return replace(
        track,
        last_sent=now,
        sent_position=(float(track.state[0]), float(track.state[1])),
        sent_speed=track.speed,
        sent_heading=track.heading,
    )


def cpm_select(tracks: Sequence[LocalTrack], now: float, mode: str) -> list[LocalTrack]:
    """Tracks to put into this CPM, returned with refreshed sent-state snapshots."""
    if mode == "full":
        chosen = [t for t in tracks if now - t.last_update < FULL_FRESHNESS - EPS]
    elif mode == "etsi":
        chosen_ids = set()
        vru_due = False
        for t in tracks:
            if t.last_sent is None:
                chosen_ids.add(t.local_id)
                vru_due |= t.is_vru
            elif t.is_vru:
                if now - t.last_sent > VRU_INTERVAL + EPS:
                    chosen_ids.add(t.local_id)
                    vru_due = True
            elif now - t.last_sent > VEHICLE_INTERVAL + EPS or _significant_change(t):
                chosen_ids.add(t.local_id)
        if vru_due:
            chosen_ids.update(t.local_id for t in tracks if t.is_vru)
        chosen = [t for t in tracks if t.local_id in chosen_ids]
    else:
        raise ValueError(f"unknown communication mode {mode!r}")
    return [mark_sent(t, now) for t in chosen]


@dataclass(frozen=True)
class TrackPayload:
    local_id: int
    timestamp: float
    state: np.ndarray
    cov: np.ndarray
    object_id: int | None = None
    is_vru: bool = False


@dataclass(frozen=True)
class Cpm:
    sender: int
    sender_position: tuple
    time: float
    tracks: tuple = ()

    @classmethod
    def from_local(cls, sender: int, position, time: float, tracks: Sequence[LocalTrack]) -> Cpm:
        payloads = tuple(
            TrackPayload(t.local_id, t.time, t.state, t.cov, t.object_id, t.is_vru)
            for t in tracks
        )
        return cls(sender, (float(position[0]), float(position[1])), time, payloads)


@dataclass
class RsuBuffer:
    """Latest track per (sender, local id), plus channel statistics."""

    config: CommConfig
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))
    entries: dict = field(default_factory=dict)  # (sender, local_id) -> (recv_time, payload)
    sender_positions: dict = field(default_factory=dict)
    pending: list = field(default_factory=list)  # (arrival, seq, cpm)
    sent: int = 0
    lost: int = 0
    malformed: int = 0
    payloads_sent: int = 0
    _seq: int = 0

    def ingest(self, cpm: Cpm, now: float) -> RsuBuffer:
        self.sent += 1
        self.payloads_sent += len(cpm.tracks)
        if self.rng.random() < self.config.loss:
            self.lost += 1
        else:
            self.pending.append((cpm.time + self.config.latency, self._seq, cpm))
            self._seq += 1
        self.deliver(now)
        return self

    def deliver(self, now: float):
        ready = [p for p in self.pending if p[0] <= now + EPS]
        self.pending = [p for p in self.pending if p[0] > now + EPS]
        for arrival, _, cpm in sorted(ready, key=lambda p: (p[0], p[1])):
            if not _well_formed(cpm):
                self.malformed += 1
                continue
            self.sender_positions[cpm.sender] = cpm.sender_position
            for p in cpm.tracks:
                key = (cpm.sender, p.local_id)
                old = self.entries.get(key)
                if old is None or old[1].timestamp <= p.timestamp:
                    self.entries[key] = (arrival, p)

    def frame_tracks(self, now: float) -> tuple[list[Track], list[SensorInfo]]:
        """Tracks propagated to ``now``; stale entries are evicted."""
        self.deliver(now)
        tracks = []
        for key in sorted(self.entries):
            recv, p = self.entries[key]
            age = now - p.timestamp
            if age > self.config.staleness + EPS:
                del self.entries[key]
                continue
            if now - recv > self.config.window + EPS:
                continue
            x, P = (ukf_predict(p.state, p.cov, age) if age > EPS else (p.state, p.cov))
            tracks.append(Track(key[0], x, P, timestamp=now, object_id=p.object_id,
                                is_vru=p.is_vru, local_id=p.local_id))
        senders = sorted({t.sensor for t in tracks})
        sensors = [SensorInfo(s, self.sender_positions[s]) for s in senders]
        return tracks, sensors


def _well_formed(cpm: Cpm) -> bool:
    try:
        for p in cpm.tracks:
            x = np.asarray(p.state, float)
            P = np.asarray(p.cov, float)
            if x.shape != (5,) or P.shape != (5, 5):
                return False
            if not (np.all(np.isfinite(x)) and np.all(np.isfinite(P))):
                return False
            if not math.isfinite(p.timestamp):
                return False
        return len(cpm.sender_position) == 2
    except (TypeError, ValueError):
        return False


def rsu_ingest(buffer: RsuBuffer, cpm: Cpm, now: float) -> RsuBuffer:
    return buffer.ingest(cpm, now)


def rsu_frame(buffer: RsuBuffer, now: float):
    return buffer.frame_tracks(now)
