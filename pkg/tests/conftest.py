import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from t2ta.core import SensorInfo, Track

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=500, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def make_track(sensor, pos, var=1.0, **kw):
    pos = np.asarray(pos, float)
    cov = var * np.eye(len(pos)) if np.isscalar(var) else np.asarray(var, float)
    return Track(sensor, pos, cov, **kw)


def random_instance(rng, n_tracks=6, n_sensors=3, area=10.0, hetero=True):
    """Tracks with random positions, random SPD covariances and random sensors."""
    tracks = []
    for _ in range(n_tracks):
        if hetero:
            A = rng.normal(size=(2, 2))
            cov = A @ A.T + 0.3 * np.eye(2)
        else:
            cov = np.eye(2)
        tracks.append(Track(int(rng.integers(1, n_sensors + 1)), rng.uniform(0, area, 2), cov))
    sensors = [SensorInfo(s, rng.uniform(0, area, 2)) for s in range(1, n_sensors + 1)]
    return tracks, sensors


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
