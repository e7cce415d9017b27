import math

import numpy as np
import pytest
from scipy.stats import chi2

from t2ta.core import SensorInfo
from t2ta.sim.cpm import CommConfig, Cpm, RsuBuffer, TrackPayload, cpm_select, mark_sent
from t2ta.sim.mc import McConfig, gen_mc_frame
from t2ta.sim.motion import (LocalTrack, ObjectState, ct_predict, ct_transition, init_track,
                             kf_update, process_noise, ukf_predict, ukf_step)
from t2ta.sim.world import (CpStats, VehicleTracker, intersection_script, load_script,
                            run_cp_scenario, sense)


# Monte Carlo scenes

def test_mc_track_counts():
    assert len(gen_mc_frame(McConfig(p_d_true=1.0)).tracks) == 40
    assert len(gen_mc_frame(McConfig(p_d_true=0.0)).tracks) == 0
    with pytest.raises(ValueError):
        McConfig(sigma=0)
    with pytest.raises(ValueError):
        McConfig(p_d_true=1.5)


def test_mc_mean_track_count_binomial():
    n, p, seeds = 40, 0.6, 1000
    counts = [len(gen_mc_frame(McConfig(p_d_true=p, seed=s)).tracks) for s in range(seeds)]
    sd = math.sqrt(n * p * (1 - p) / seeds)
    assert abs(np.mean(counts) - n * p) < 3 * sd


def test_mc_frame_structure():
    f = gen_mc_frame(McConfig(n_objects=6, n_sensors=4, sigma=2.0, seed=9))
    assert f.truths.shape == (6, 2) and len(f.sensors) == 4
    pairs = [(t.sensor, t.object_id) for t in f.tracks]
    assert len(pairs) == len(set(pairs))
    assert [t.sensor for t in f.tracks] == sorted(t.sensor for t in f.tracks)
    assert all(np.array_equal(t.cov, 4 * np.eye(2)) for t in f.tracks)
    assert f.to_json() == gen_mc_frame(McConfig(n_objects=6, n_sensors=4, sigma=2.0, seed=9)).to_json()


# motion model and filter

def test_ct_examples():
    s = ct_predict(ObjectState(0, 0, 1, 0, 0.0), 1.0)
    assert (s.x0, s.x1, s.v0, s.v1) == pytest.approx((1, 0, 1, 0))
    s = ct_predict(ObjectState(0, 0, 1, 0, math.pi / 2), 1.0)
    assert (s.v0, s.v1) == pytest.approx((0, 1), abs=1e-12)
    assert (s.x0, s.x1) == pytest.approx((2 / math.pi, 2 / math.pi))
    x = ObjectState(3, 4, 2, -1, 0.3)
    s = ct_predict(x, 1e-9)
    assert np.allclose(s.as_array(), x.as_array(), atol=1e-6)
    with pytest.raises(ValueError):
        ct_predict(x, 0)


def test_ct_small_omega_continuous():
    a = ct_transition(np.array([0, 0, 3, 1, 0.99e-4]), 2.0)
    b = ct_transition(np.array([0, 0, 3, 1, 1.01e-4]), 2.0)
    assert np.allclose(a, b, atol=1e-3)


def test_init_track():
    tr = init_track([0, 0], 1.0, [1, 0.5], 1.1, local_id=4, object_id=9)
    assert tr.state == pytest.approx([1, 0.5, 10, 5, 0])
    assert tr.local_id == 4 and tr.object_id == 9 and tr.time == tr.last_update == 1.1
    np.linalg.cholesky(tr.cov)
    with pytest.raises(ValueError):
        init_track([0, 0], 1.0, [1, 1], 1.0, 0)


def test_predict_only_grows_position_uncertainty():
    tr = init_track([0, 0], 0.0, [1, 0], 0.1, 0)
    traces = [np.trace(tr.cov[:2, :2])]
    for _ in range(10):
        tr = ukf_step(tr, None, 0.1)
        traces.append(np.trace(tr.cov[:2, :2]))
    assert all(b >= a for a, b in zip(traces, traces[1:]))
    assert tr.last_update == pytest.approx(0.1) and tr.time == pytest.approx(1.1)


def test_stationary_object_converges_to_floor():
    rng = np.random.default_rng(0)
    tr = init_track(rng.normal(0, 2, 2), 0.0, rng.normal(0, 2, 2), 0.1, 0)
    traces = []
    for _ in range(60):
        tr = ukf_step(tr, rng.normal(0, 2, 2), 0.1)
        traces.append(np.trace(tr.cov[:2, :2]))
    assert all(b <= a + 1e-9 for a, b in zip(traces[:20], traces[1:21]))
    assert traces[-1] == pytest.approx(traces[-2], rel=1e-3)
    assert np.all(np.linalg.eigvalsh(tr.cov) > 0)


def test_kf_update_joseph_matches_standard():
    P = np.diag([4.0, 4, 1, 1, 0.1]) + 0.1
    x = np.zeros(5)
    x1, P1 = kf_update(x, P, np.array([1.0, 2.0]))
    H = np.eye(2, 5)
    S = H @ P @ H.T + 4 * np.eye(2)
    K = P @ H.T @ np.linalg.inv(S)
    assert np.allclose(x1, K @ [1, 2]) and np.allclose(P1, (np.eye(5) - K @ H) @ P)


def test_ukf_jitter_recovers_semidefinite():
    P = np.zeros((5, 5))
    P[0, 0] = 1.0
    x, Q = ukf_predict(np.array([0, 0, 1, 0, 0.0]), P, 0.1)
    assert np.all(np.isfinite(Q))
    with pytest.raises(np.linalg.LinAlgError):
        ukf_predict(np.zeros(5), -np.eye(5), 0.1)


def test_propagation_nees_consistent():
    """Track error after predicting dt ahead is consistent with the inflated covariance."""
    rng = np.random.default_rng(7)
    dt, n = 0.5, 600
    P0 = np.diag([1.0, 1.0, 0.5, 0.5, 0.01])
    Q = process_noise(dt)
    LQ = np.linalg.cholesky(Q + 1e-12 * np.eye(5))
    L0 = np.linalg.cholesky(P0)
    nees = []
    for _ in range(n):
        truth = np.array([0, 0, 8, 2, rng.uniform(-0.3, 0.3)])
        est = truth + L0 @ rng.standard_normal(5)
        truth_next = ct_transition(truth, dt) + LQ @ rng.standard_normal(5)
        x, P = ukf_predict(est, P0, dt)
        e = (x - truth_next)[:2]
        nees.append(e @ np.linalg.solve(P[:2, :2], e))
    lo, hi = chi2.ppf([0.025, 0.975], 2 * n) / n
    assert lo <= np.mean(nees) <= hi


# sensing

def test_sense_range_and_noise():
    s = SensorInfo(0, [0.0, 0.0], 85.0)
    objs = [(1, [84.0, 0.0]), (2, [86.0, 0.0]), (3, [0.0, 10.0])]
    rng = np.random.default_rng(0)
    got = sense(objs, s, rng, R=np.zeros((2, 2)))
    assert [o for o, _ in got] == [1, 3]
    assert np.array_equal(got[0][1], [84.0, 0.0])
    assert [o for o, _ in sense(objs, s, rng, exclude=3)] == [1]
    noisy = sense(objs, s, rng)
    assert not np.array_equal(noisy[0][1], [84.0, 0.0])


# CPM generation rules

def vehicle(local_id=0, now=10.0, last_sent=9.1, moved=5.0, dv=0.0, dh_deg=0.0, vru=False, speed=10.0):
    h = math.radians(dh_deg)
    v = speed + dv
    state = np.array([moved, 0.0, v * math.cos(h), v * math.sin(h), 0.0])
    return LocalTrack(local_id, state, np.eye(5), now, now, is_vru=vru, last_sent=last_sent,
                      sent_position=(0.0, 0.0), sent_speed=speed, sent_heading=0.0)


def ids(tracks):
    return sorted(t.local_id for t in tracks)


def test_etsi_vehicle_rules():
    assert ids(cpm_select([vehicle(moved=5.0, last_sent=9.1)], 10.0, "etsi")) == [0]
    quiet = vehicle(moved=1.0, last_sent=9.5, dv=0.1, dh_deg=1.0)
    assert cpm_select([quiet], 10.0, "etsi") == []
    assert ids(cpm_select([vehicle(moved=1.0, dv=0.6, last_sent=9.5)], 10.0, "etsi")) == [0]
    assert ids(cpm_select([vehicle(moved=1.0, dh_deg=5.0, last_sent=9.5)], 10.0, "etsi")) == [0]
    assert ids(cpm_select([vehicle(moved=1.0, last_sent=8.9)], 10.0, "etsi")) == [0]
    # heading is ignored near standstill
    slow = vehicle(moved=0.0, speed=0.05, dh_deg=90.0, last_sent=9.5)
    assert cpm_select([slow], 10.0, "etsi") == []


def test_etsi_new_tracks_and_vrus():
    new = LocalTrack(7, np.zeros(5), np.eye(5), 10.0, 10.0)
    assert ids(cpm_select([new], 10.0, "etsi")) == [7]
    vrus = [vehicle(1, vru=True, moved=0, last_sent=9.4), vehicle(2, vru=True, moved=0, last_sent=9.8),
            vehicle(3, moved=0, last_sent=9.8)]
    assert ids(cpm_select(vrus, 10.0, "etsi")) == [1, 2]
    vrus[0] = vehicle(1, vru=True, moved=0, last_sent=9.7)
    assert cpm_select(vrus, 10.0, "etsi") == []


def test_full_mode_and_snapshots():
    fresh = vehicle(1, moved=0, last_sent=9.9)
    stale = LocalTrack(2, np.zeros(5), np.eye(5), 10.0, 9.8)
    chosen = cpm_select([fresh, stale], 10.0, "full")
    assert ids(chosen) == [1]
    assert chosen[0].last_sent == 10.0 and chosen[0].sent_position == (0.0, 0.0)
    t = mark_sent(vehicle(moved=5.0), 10.0)
    assert t.sent_position == (5.0, 0.0) and t.sent_speed == pytest.approx(10.0)
    with pytest.raises(ValueError):
        cpm_select([], 1.0, "sometimes")


# RSU

def local(lid, t, x=0.0):
    return LocalTrack(lid, np.array([x, 0.0, 1.0, 0.0, 0.0]), np.eye(5), t, t)


def test_rsu_loss_one_gives_empty_frames():
    rsu = RsuBuffer(CommConfig(mode="full", loss=1.0), np.random.default_rng(0))
    for k in range(5):
        rsu.ingest(Cpm.from_local(1, (0, 0), 0.1 * k, [local(0, 0.1 * k)]), 0.1 * k)
    assert rsu.frame_tracks(0.5) == ([], []) and rsu.lost == 5 and rsu.sent == 5


def test_rsu_staleness_and_union():
    rsu = RsuBuffer(CommConfig(mode="etsi"), np.random.default_rng(0))
    rsu.ingest(Cpm.from_local(1, (0, 0), 1.0, [local(0, 1.0), local(1, 1.0)]), 1.0)
    rsu.ingest(Cpm.from_local(2, (5, 0), 2.0, [local(0, 2.0, x=3.0)]), 2.0)
    tracks, sensors = rsu.frame_tracks(2.2)  # sender 1 data is 1.2 s old
    assert [(t.sensor, t.local_id) for t in tracks] == [(2, 0)]
    assert [s.id for s in sensors] == [2]
    assert tracks[0].state[0] == pytest.approx(3.2, abs=0.01) and tracks[0].timestamp == 2.2


def test_rsu_full_mode_union_of_latest():
    rsu = RsuBuffer(CommConfig(mode="full"), np.random.default_rng(0))
    rsu.ingest(Cpm.from_local(1, (0, 0), 1.0, [local(0, 1.0), local(1, 1.0, x=9)]), 1.0)
    rsu.ingest(Cpm.from_local(2, (0, 0), 1.0, [local(0, 1.0, x=4)]), 1.0)
    rsu.ingest(Cpm.from_local(1, (0, 0), 1.0, [local(0, 1.0, x=2)]), 1.0)
    tracks, _ = rsu.frame_tracks(1.0)
    assert [(t.sensor, t.local_id, t.state[0]) for t in tracks] == [(1, 0, 2), (1, 1, 9), (2, 0, 4)]
    assert rsu.payloads_sent == 4


def test_rsu_latency_and_malformed():
    rsu = RsuBuffer(CommConfig(mode="full", latency=0.3, window=1.0), np.random.default_rng(0))
    rsu.ingest(Cpm.from_local(1, (0, 0), 1.0, [local(0, 1.0)]), 1.0)
    assert rsu.frame_tracks(1.1)[0] == []
    assert len(rsu.frame_tracks(1.3)[0]) == 1
    bad = Cpm(3, (0, 0), 1.3, (TrackPayload(0, 1.3, np.zeros(3), np.eye(3)),))
    rsu.ingest(bad, 1.6)
    rsu.deliver(1.6)
    assert rsu.malformed == 1


def test_comm_config_validation():
    assert CommConfig("full").window == 0.1 and CommConfig("etsi").window == 1.0
    for kw in ({"mode": "x"}, {"loss": 2.0}, {"latency": -1.0}, {"window": 0.0}):
        with pytest.raises(ValueError):
            CommConfig(**kw)


# tracker lifecycle and world

def test_tracker_invalidates_and_recreates():
    vt = VehicleTracker(0)
    dt, now = 0.1, 0.0
    seen = lambda: [(5, np.array([10.0, 0.0]), False)]
    for _ in range(5):
        now += dt
        vt.step(now, dt, seen())
    assert list(vt.tracks) == [5] and vt.tracks[5].local_id == 0
    for _ in range(5):  # 0.5 s out of view
        now += dt
        vt.step(now, dt, [])
    assert vt.tracks == {}
    for _ in range(2):
        now += dt
        vt.step(now, dt, seen())
    assert vt.tracks[5].local_id == 1


def static_script(mpr_equipped=True, mode="full"):
    return {
        "dt": 0.1, "sensor_range": 85, "seed": 0, "eval_start": 1.0, "eval_duration": 2.0,
        "comm": {"mode": mode},
        "objects": [
            {"id": 0, "kind": "vehicle", "position": [0, 0], "speed": 0, "equipped": mpr_equipped},
            {"id": 1, "kind": "vru", "position": [10, 0], "speed": 0, "equipped": False},
        ],
    }


def test_static_pipeline_one_track_per_frame():
    frames = list(run_cp_scenario(static_script(), mpr=0.0))
    assert len(frames) == 20
    for f in frames:
        assert len(f.tracks) == 1 and f.tracks[0].object_id == 1 and f.tracks[0].sensor == 0
        assert f.truths.shape == (2, 2)


def test_mpr_zero_has_no_tracks():
    script = intersection_script(seed=1)
    script.update(eval_start=5.0, eval_duration=1.0)
    frames = list(run_cp_scenario(script, mpr=0.0))
    assert len(frames) == 10 and all(len(f.tracks) == 0 for f in frames)


def test_world_determinism_and_uniqueness():
    script = intersection_script(seed=2, horizon=14)
    script.update(eval_start=3.0, eval_duration=2.0)
    a = [f.to_json() for f in run_cp_scenario(script, CommConfig("etsi"), seed=5)]
    b = [f.to_json() for f in run_cp_scenario(script, CommConfig("etsi"), seed=5)]
    assert a == b
    for f in run_cp_scenario(script, CommConfig("etsi"), seed=5):
        keys = [(t.sensor, t.local_id) for t in f.tracks]
        assert len(keys) == len(set(keys))


def test_etsi_sends_fewer_payloads_than_full():
    script = intersection_script(seed=3, horizon=12)
    script.update(eval_start=0.1, eval_duration=10.0)
    sent = {}
    for mode in ("full", "etsi"):
        stats = CpStats()
        for _ in run_cp_scenario(script, CommConfig(mode), seed=0, mpr=0.5, stats=stats):
            pass
        sent[mode] = stats.payloads_sent
    assert 0 < sent["etsi"] < sent["full"]


def test_load_script_yaml(tmp_path):
    p = tmp_path / "s.yaml"
    p.write_text("dt: 0.1\neval_start: 0.5\neval_duration: 0.5\nobjects:\n"
                 "  - {id: 0, kind: vehicle, position: [0, 0], speed: 5, equipped: true,\n"
                 "     segments: [{duration: 1.0}, {duration: 1.0, turn_deg: 90}]}\n"
                 "  - {id: 1, kind: vru, position: [5, 5], speed: 1}\n")
    script = load_script(p)
    frames = list(run_cp_scenario(script, CommConfig("full")))
    assert len(frames) == 5 and frames[-1].meta["mode"] == "full"
