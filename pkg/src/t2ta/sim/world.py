"""Scripted collective-perception world.

Objects follow scripted segments of constant speed and yaw rate. A share of
the vehicles (the market penetration rate) carries a 360 degree sensor; each
such vehicle runs local trackers, emits CPMs, and an RSU accumulates the
received tracks into one association frame per time step.

Script format (YAML or JSON)::

    dt: 0.1
    sensor_range: 85
    mpr: 0.5
    seed: 0
    eval_start: 15
    eval_duration: 30
    comm: {mode: etsi, loss: 0.0, latency: 0.0}
    objects:
      - id: 0
        kind: vehicle            # or vru
        start: 0.0               # spawn time [s]
        position: [-120, -1.75]
        heading_deg: 0
        speed: 10
        equipped: true           # optional; otherwise drawn from mpr
        segments:
          - {duration: 10}
          - {duration: 2.4, turn_deg: 90}
          - {duration: 10, speed: 8}

An object leaves the scene when its last segment ends; an object without
segments stays where it is for the whole run.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
import yaml

from ..core import ScenarioFrame, SensorInfo
from .cpm import EPS, CommConfig, Cpm, RsuBuffer, cpm_select
from .motion import R_MEAS, LocalTrack, ObjectState, ct_predict, init_track, ukf_step

SENSOR_RANGE = 85.0
INVALIDATE_AFTER = 0.4


def load_script(path) -> dict:
    with open(path) as f:
        return yaml.safe_load(f)


@dataclass
class _Trajectory:
    id: int
    is_vru: bool
    start_step: int
    states: list  # ObjectState per step from start_step on
    equipped: bool | None
    persistent: bool = False

    def state_at(self, step: int) -> ObjectState | None:
        k = step - self.start_step
        if k < 0:
            return None
        if k < len(self.states):
            return self.states[k]
        return self.states[-1] if self.persistent else None


def _trajectory(obj: dict, dt: float) -> _Trajectory:
    heading = math.radians(obj.get("heading_deg", 0.0))
    speed = float(obj.get("speed", 0.0))
    is_vru = obj.get("kind", "vehicle") == "vru"
    x, y = obj["position"]
    state = ObjectState(x, y, speed * math.cos(heading), speed * math.sin(heading), 0.0, is_vru)
    states = [state]
    for seg in obj.get("segments", []):
        n = max(1, int(round(seg["duration"] / dt)))
        if "turn_deg" in seg:
            omega = math.radians(seg["turn_deg"]) / (n * dt)
        else:
            omega = float(seg.get("omega", 0.0))
        if "speed" in seg:
            cur = states[-1]
            h = math.atan2(cur.v1, cur.v0) if cur.speed > 0 else heading
            v = float(seg["speed"])
            state = ObjectState(cur.x0, cur.x1, v * math.cos(h), v * math.sin(h), omega, is_vru)
        else:
            cur = states[-1]
            state = ObjectState(cur.x0, cur.x1, cur.v0, cur.v1, omega, is_vru)
        for _ in range(n):
            state = ct_predict(state, dt)
            states.append(state)
    return _Trajectory(
        int(obj["id"]), is_vru, int(round(float(obj.get("start", 0.0)) / dt)), states,
        obj.get("equipped"), persistent=not obj.get("segments"),
    )


class VehicleTracker:
    """Local tracking on one sensor-equipped vehicle (association known)."""

    def __init__(self, sensor_id: int):
        self.sensor_id = sensor_id
        self.tracks: dict[int, LocalTrack] = {}
        self.first_seen: dict[int, tuple] = {}
        self.next_local_id = 0

    def step(self, now: float, dt: float, detections: list) -> None:
        measured = {oid: (z, vru) for oid, z, vru in detections}
        for oid in list(self.tracks):
            hit = measured.pop(oid, None)
            tr = ukf_step(self.tracks[oid], None if hit is None else hit[0], dt)
            if hit is None and now - tr.last_update >= INVALIDATE_AFTER - EPS:
                del self.tracks[oid]
            else:
                self.tracks[oid] = tr
        for oid, (z, vru) in measured.items():
            prev = self.first_seen.get(oid)
            if prev is not None and abs(now - dt - prev[1]) < EPS:
                self.tracks[oid] = init_track(prev[0], prev[1], z, now, self.next_local_id,
                                              object_id=oid, is_vru=vru)
                self.next_local_id += 1
                del self.first_seen[oid]
            else:
                self.first_seen[oid] = (z, now)
        for oid in [o for o, (_, t) in self.first_seen.items() if now - t > dt + EPS]:
            del self.first_seen[oid]


def sense(objects, sensor: SensorInfo, rng: np.random.Generator, R=R_MEAS,
          exclude: int | None = None) -> list[tuple[int, np.ndarray]]:
    """Noisy positions of all objects within the sensor's range.

    ``objects`` is an iterable of (object id, position); measurement-to-object
    association is known.
    """
    rng_range = SENSOR_RANGE if sensor.range is None else sensor.range
    out = []
    L = np.linalg.cholesky(R) if np.any(R) else None
    for oid, pos in objects:
        if oid == exclude:
            continue
        pos = np.asarray(pos, float)
        if np.hypot(*(pos - sensor.position)) <= rng_range:
            noise = L @ rng.standard_normal(2) if L is not None else np.zeros(2)
            out.append((oid, pos + noise))
    return out


def _equipped_ids(trajs: list[_Trajectory], mpr: float, rng: np.random.Generator) -> set:
    fixed = {t.id for t in trajs if t.equipped is True}
    free = [t.id for t in trajs if not t.is_vru and t.equipped is None]
    n = int(round(mpr * len(free)))
    chosen = rng.permutation(len(free))[:n] if free else []
    return fixed | {free[i] for i in chosen}


@dataclass
class CpStats:
    cpms_sent: int = 0
    cpms_lost: int = 0
    payloads_sent: int = 0
    frames: int = 0
    extra: dict = field(default_factory=dict)


def run_cp_scenario(script: dict, comm: CommConfig | None = None, seed: int | None = None,
                    mpr: float | None = None, stats: CpStats | None = None) -> Iterator[ScenarioFrame]:
    """Step the world and yield one RSU frame per step of the evaluation window."""
    dt = float(script.get("dt", 0.1))
    seed = int(script.get("seed", 0) if seed is None else seed)
    mpr = float(script.get("mpr", 0.5) if mpr is None else mpr)
    if comm is None:
        comm = CommConfig(**script.get("comm", {}))
    sensor_range = float(script.get("sensor_range", SENSOR_RANGE))
    eval_start = int(round(float(script.get("eval_start", 15.0)) / dt))
    eval_steps = int(round(float(script.get("eval_duration", 30.0)) / dt))
    stats = CpStats() if stats is None else stats

    ss = np.random.SeedSequence(seed)
    rng_equip, rng_sense, rng_channel = (np.random.default_rng(s) for s in ss.spawn(3))
    trajs = sorted((_trajectory(o, dt) for o in script.get("objects", [])), key=lambda t: t.id)
    equipped = _equipped_ids(trajs, mpr, rng_equip)
    trackers: dict[int, VehicleTracker] = {}
    rsu = RsuBuffer(comm, rng_channel)
    cpm_every = max(1, int(round(comm.cpm_interval / dt)))

    for step in range(1, eval_start + eval_steps + 1):
        now = step * dt
        alive = []
        for tr in trajs:
            s = tr.state_at(step)
            if s is not None:
                alive.append((tr.id, s))
        positions = [(oid, s.position) for oid, s in alive]
        vru = {oid: s.is_vru for oid, s in alive}
        for oid, s in alive:
            if oid not in equipped:
                continue
            tracker = trackers.setdefault(oid, VehicleTracker(oid))
            sensor = SensorInfo(oid, s.position, sensor_range)
            dets = [(o, z, vru[o]) for o, z in sense(positions, sensor, rng_sense, exclude=oid)]
            tracker.step(now, dt, dets)
            if step % cpm_every:
                continue
            chosen = cpm_select(list(tracker.tracks.values()), now, comm.mode)
            for t in chosen:
                tracker.tracks[t.object_id] = t
            if chosen:
                rsu.ingest(Cpm.from_local(oid, s.position, now, chosen), now)
        alive_ids = {oid for oid, _ in alive}
        for oid in [o for o in trackers if o not in alive_ids]:
            del trackers[oid]

        stats.cpms_sent, stats.cpms_lost = rsu.sent, rsu.lost
        stats.payloads_sent = rsu.payloads_sent
        if step <= eval_start:
            rsu.deliver(now)
            continue
        tracks, sensors = rsu.frame_tracks(now)
        sensors = [SensorInfo(s.id, s.position, sensor_range) for s in sensors]
        stats.frames += 1
        yield ScenarioFrame(
            tracks,
            sensors,
            np.array([s.position for _, s in alive]).reshape(-1, 2),
            tuple(oid for oid, _ in alive),
            time=round(now, 6),
            index=step - eval_start - 1,
            meta={
                "kind": "cp",
                "mode": comm.mode,
                "mpr": mpr,
                "seed": seed,
                "n_equipped_alive": sum(1 for oid, _ in alive if oid in equipped),
                "payloads_sent": rsu.payloads_sent,
                "cpms_sent": rsu.sent,
                "cpms_lost": rsu.lost,
            },
        )


def intersection_script(seed: int = 0, n_vehicles: int = 30, n_vrus: int = 10,
                        arm_length: float = 120.0, horizon: float = 45.0, mpr: float = 0.5,
                        mode: str = "etsi") -> dict:
    """Randomized four-arm intersection centred at the origin."""
    rng = np.random.default_rng(seed)
    objects = []
    lane = 1.75
    # (start position, heading) per approach arm, right-hand traffic
    arms = [
        ((-arm_length, -lane), 0.0),
        ((arm_length, lane), 180.0),
        ((lane, -arm_length), 90.0),
        ((-lane, arm_length), -90.0),
    ]
    for i in range(n_vehicles):
        (x, y), heading = arms[rng.integers(4)]
        speed = float(rng.uniform(8.0, 13.0))
        start = float(np.round(rng.uniform(0.0, horizon - 10.0), 1))
        route = rng.choice(["straight", "left", "right"], p=[0.5, 0.25, 0.25])
        if route == "straight":
            segments = [{"duration": 2 * arm_length / speed}]
        else:
            radius = 6.0 if route == "right" else 12.0
            turn = -90.0 if route == "right" else 90.0
            approach = arm_length - radius
            turn_speed = min(speed, 7.0)
            segments = [
                {"duration": approach / speed},
                {"duration": math.radians(90.0) * radius / turn_speed, "turn_deg": turn,
                 "speed": turn_speed},
                {"duration": approach / speed, "speed": speed},
            ]
        objects.append({"id": i, "kind": "vehicle", "start": start, "position": [x, y],
                        "heading_deg": heading, "speed": speed, "segments": segments})
    for j in range(n_vrus):
        corner = rng.choice([-1.0, 1.0], size=2) * 8.0
        along = float(rng.uniform(-40.0, 40.0))
        if rng.random() < 0.5:
            pos = [along, float(corner[1])]
            heading = 0.0 if along < 0 else 180.0
        else:
            pos = [float(corner[0]), along]
            heading = 90.0 if along < 0 else -90.0
        speed = float(rng.uniform(1.0, 1.8))
        start = float(np.round(rng.uniform(0.0, 15.0), 1))
        walk = float(rng.uniform(20.0, 40.0))
        segments = [{"duration": walk / 2},
                    {"duration": 3.0, "turn_deg": float(rng.choice([-90.0, 90.0]))},
                    {"duration": walk / 2}]
        objects.append({"id": n_vehicles + j, "kind": "vru", "start": start, "position": pos,
                        "heading_deg": heading, "speed": speed, "segments": segments})
    return {
        "dt": 0.1,
        "sensor_range": SENSOR_RANGE,
        "mpr": mpr,
        "seed": seed,
        "eval_start": 15.0,
        "eval_duration": 30.0,
        "comm": {"mode": mode},
        "objects": objects,
    }
