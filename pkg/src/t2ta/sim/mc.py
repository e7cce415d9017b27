"""Static Monte Carlo scenes: uniform objects, Bernoulli detections, white noise."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import ScenarioFrame, SensorInfo, Track


@dataclass(frozen=True)
class McConfig:
    area: float = 30.0
    n_objects: int = 8
    n_sensors: int = 5
    sigma: float = 1.0
    p_d_true: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if not self.area > 0:
            raise ValueError("area side must be positive")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not 0.0 <= self.p_d_true <= 1.0:
            raise ValueError("p_d_true must lie in [0, 1]")


SMALL = dict(area=30.0, n_objects=8, n_sensors=5)
BIG = dict(area=50.0, n_objects=20, n_sensors=12)


def gen_mc_frame(config: McConfig) -> ScenarioFrame:
    """One scene; tracks are ordered sensor by sensor, objects in index order."""
    rng = np.random.default_rng(config.seed)
    truths = rng.uniform(0.0, config.area, size=(config.n_objects, 2))
    sensor_pos = rng.uniform(0.0, config.area, size=(config.n_sensors, 2))
    detected = rng.random((config.n_sensors, config.n_objects)) < config.p_d_true
    noise = rng.normal(0.0, config.sigma, size=(config.n_sensors, config.n_objects, 2))
    cov = config.sigma ** 2 * np.eye(2)
    sensors = [SensorInfo(s + 1, sensor_pos[s]) for s in range(config.n_sensors)]
    tracks = [
        Track(s + 1, truths[o] + noise[s, o], cov, object_id=o)
        for s in range(config.n_sensors)
        for o in range(config.n_objects)
        if detected[s, o]
    ]
    meta = {"kind": "mc", "seed": config.seed, "sigma": config.sigma, "p_d": config.p_d_true}
    return ScenarioFrame(tracks, sensors, truths, tuple(range(config.n_objects)), meta=meta)
