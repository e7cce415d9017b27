"""Coordinated-turn motion and the local unscented Kalman filter.

State layout: [x0, x1, v0, v1, omega] (position, Cartesian velocity, yaw rate).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

OMEGA_EPS = 1e-4  # |omega| below this propagates with constant velocity
ACCEL_STD = 5.0
YAW_ACCEL_STD = 0.08 * math.pi
MEAS_STD = 2.0
R_MEAS = MEAS_STD ** 2 * np.eye(2)
H = np.array([[1.0, 0, 0, 0, 0], [0, 1.0, 0, 0, 0]])
INIT_OMEGA_STD = math.pi / 8

# sigma-point parameters
UKF_ALPHA = 1.0
UKF_BETA = 2.0
UKF_KAPPA = 0.0


@dataclass(frozen=True)
class ObjectState:
    x0: float
    x1: float
    v0: float
    v1: float
    omega: float = 0.0
    is_vru: bool = False

    def as_array(self) -> np.ndarray:
        return np.array([self.x0, self.x1, self.v0, self.v1, self.omega])

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x0, self.x1])

    @property
    def speed(self) -> float:
        return math.hypot(self.v0, self.v1)


def ct_transition(X: np.ndarray, dt: float) -> np.ndarray:
    """Coordinated-turn propagation of one state or a stack of states (rows)."""
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    x0, x1, v0, v1, w = X.T
    straight = np.abs(w) < OMEGA_EPS
    w_safe = np.where(straight, 1.0, w)
    s, c = np.sin(w * dt), np.cos(w * dt)
    a = np.where(straight, dt, s / w_safe)
    b = np.where(straight, 0.0, (1.0 - c) / w_safe)
    c = np.where(straight, 1.0, c)
    s = np.where(straight, 0.0, s)
    out = np.stack(
        [x0 + a * v0 - b * v1, x1 + b * v0 + a * v1, c * v0 - s * v1, s * v0 + c * v1, w], axis=1
    )
    return out[0] if single else out


def ct_predict(state: ObjectState, dt: float) -> ObjectState:
    if dt <= 0:
        raise ValueError("dt must be positive")
    x = ct_transition(state.as_array(), dt)
    return ObjectState(*x.tolist(), is_vru=state.is_vru)


def process_noise(dt: float) -> np.ndarray:
    G = np.array([
        [dt * dt / 2, 0, 0],
        [0, dt * dt / 2, 0],
        [dt, 0, 0],
        [0, dt, 0],
        [0, 0, dt],
    ])
    return G @ np.diag([ACCEL_STD ** 2, ACCEL_STD ** 2, YAW_ACCEL_STD ** 2]) @ G.T


def _sqrt_psd(P: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        pass
    jitter = 1e-9
    for _ in range(3):
        try:
            return np.linalg.cholesky(P + jitter * np.eye(len(P)))
        except np.linalg.LinAlgError:
            jitter *= 10
    raise np.linalg.LinAlgError("covariance is not positive definite, even with jitter")


def _weights(n: int):
    lam = UKF_ALPHA ** 2 * (n + UKF_KAPPA) - n
    wm = np.full(2 * n + 1, 1.0 / (2 * (n + lam)))
    wc = wm.copy()
    wm[0] = lam / (n + lam)
    wc[0] = lam / (n + lam) + (1 - UKF_ALPHA ** 2 + UKF_BETA)
    return n + lam, wm, wc


def _symmetric(P):
    return 0.5 * (P + P.T)


def ukf_predict(x: np.ndarray, P: np.ndarray, dt: float):
    """Unscented prediction through the CT model with additive process noise."""
    n = len(x)
    scale, wm, wc = _weights(n)
    S = _sqrt_psd(P) * math.sqrt(scale)
    sigma = np.vstack([x, x + S.T, x - S.T])
    Y = ct_transition(sigma, dt)
    mean = wm @ Y
    D = Y - mean
    cov = (D.T * wc) @ D + process_noise(dt)
    return mean, _symmetric(cov)


def kf_update(x: np.ndarray, P: np.ndarray, z: np.ndarray, R: np.ndarray = R_MEAS):
    """Linear position update in Joseph form."""
    S = H @ P @ H.T + R
    K = np.linalg.solve(S, H @ P).T
    x = x + K @ (z - H @ x)
    I_KH = np.eye(len(x)) - K @ H
    P = I_KH @ P @ I_KH.T + K @ R @ K.T
    return x, _symmetric(P)


@dataclass(frozen=True)
class LocalTrack:
    """A vehicle's local track of one object, plus its CPM bookkeeping."""

    local_id: int
    state: np.ndarray
    cov: np.ndarray
    time: float
    last_update: float
    object_id: int | None = None  # evaluation label, never read by the filter
    is_vru: bool = False
    last_sent: float | None = None
    sent_position: tuple | None = None
    sent_speed: float | None = None
    sent_heading: float | None = None

    @property
    def speed(self) -> float:
        return math.hypot(self.state[2], self.state[3])

    @property
    def heading(self) -> float:
        return math.atan2(self.state[3], self.state[2])


def init_track(z1, t1: float, z2, t2: float, local_id: int, **labels) -> LocalTrack:
    """Two-point initialization: position z2, velocity (z2 - z1)/dt, zero yaw rate."""
    z1, z2 = np.asarray(z1, float), np.asarray(z2, float)
    dt = t2 - t1
    if dt <= 0:
        raise ValueError("measurements must be time-ordered")
    r = MEAS_STD ** 2
    x = np.concatenate([z2, (z2 - z1) / dt, [0.0]])
    P = np.zeros((5, 5))
    for i in (0, 1):
        P[i, i] = r
        P[i, i + 2] = P[i + 2, i] = r / dt
        P[i + 2, i + 2] = 2 * r / dt ** 2
    P[4, 4] = INIT_OMEGA_STD ** 2
    return LocalTrack(local_id, x, P, t2, t2, **labels)


def ukf_step(track: LocalTrack, measurement, dt: float) -> LocalTrack:
    """Predict by dt (if positive), then update with ``measurement`` if given."""
    x, P = track.state, track.cov
    if dt > 0:
        x, P = ukf_predict(x, P, dt)
    now = track.time + max(dt, 0.0)
    last_update = track.last_update
    if measurement is not None:
        x, P = kf_update(x, P, np.asarray(measurement, float))
        last_update = now
    return replace(track, state=x, cov=P, time=now, last_update=last_update)
