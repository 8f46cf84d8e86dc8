import csv

import numpy as np
import pytest

from riskmpc import (ControlInput, SimConfig, VehicleState,
                     cold_start_history, init_model, prediction_adapter,
                     prediction_consistency, run_closed_loop,
                     tv_lane_reference)
from riskmpc.simulator import (HISTORY_SIZE, HistoryBuffer, SimLog, SimStep,
                               save_predictions, save_simlog)


class TestColdStartHistory:
    def test_straight_history(self):
        buf = cold_start_history(VehicleState(36.0, 2.625, 0.0, 18.0))
        assert buf.points.shape == (30, 2)
        assert np.allclose(buf.points[-1], [36.0, 2.625])
        assert np.allclose(np.diff(buf.points[:, 0]), 1.8)
        assert np.allclose(buf.points[:, 1], 2.625)

    def test_stationary_vehicle(self):
        buf = cold_start_history(VehicleState(5.0, 1.0, 0.3, 0.0))
        assert np.allclose(buf.points, [5.0, 1.0])

    def test_push_is_fifo(self):
        buf = cold_start_history(VehicleState(0.0, 0.0, 0.0, 10.0))
        oldest_before = buf.points[1].copy()
        buf.push(100.0, 1.0)
        assert np.allclose(buf.points[-1], [100.0, 1.0])
        assert np.allclose(buf.points[0], oldest_before)
        assert buf.points.shape == (30, 2)


class TestPredictionAdapter:
    @pytest.fixture()
    def model(self):
        return init_model(0)

    def test_anchored_at_current_position(self, model):
        tv = VehicleState(36.0, 2.625, 0.0, 18.0)
        buf = cold_start_history(tv)
        pred = prediction_adapter(model, buf, tv, N=10, mpc_T=0.2)
        assert pred.positions.shape == (11, 2)
        assert np.allclose(pred.positions[0], [36.0, 2.625], atol=1e-12)

    def test_rejects_unwarmed_buffer(self, model):
        tv = VehicleState(0.0, 0.0, 0.0, 10.0)
        buf = HistoryBuffer(points=np.zeros((10, 2)))
        with pytest.raises(ValueError):
            prediction_adapter(model, buf, tv, N=10, mpc_T=0.2)

    def test_rejects_horizon_beyond_prediction(self, model):
        tv = VehicleState(0.0, 0.0, 0.0, 10.0)
        buf = cold_start_history(tv)
        with pytest.raises(ValueError):
            prediction_adapter(model, buf, tv, N=15, mpc_T=0.2)


class TestTvLaneReference:
    def test_blend_endpoints(self):
        cfg = SimConfig()
        start = tv_lane_reference(cfg, 0.0)
        assert start[0] == cfg.tv_initial.y
        assert start[-1] == cfg.tv_target_lane_y  # 10 steps of 0.2 s cover 2 s
        done = tv_lane_reference(cfg, cfg.tv_merge_duration)
        assert np.all(done == cfg.tv_target_lane_y)

    def test_monotone_blend(self):
        cfg = SimConfig()
        ys = tv_lane_reference(cfg, 0.3)
        assert np.all(np.diff(ys) >= 0.0)


class TestSimConfig:
    def test_grid_ratio_validated(self):
        with pytest.raises(ValueError):
            SimConfig(data_dt=0.15)

    def test_substeps(self):
        assert SimConfig().substeps == 2


class TestClosedLoopPlumbing:
    def test_no_interaction_run(self):
        # TV far away: pure speed tracking, exercises the whole loop
        cfg = SimConfig(steps=4,
                        tv_initial=VehicleState(10036.0, 2.625, 0.0, 18.0))
        log = run_closed_loop(cfg, init_model(0))
        assert len(log) == 4
        for row in log.rows:
            assert abs(row.ev.v - 20.0) < 0.1
            assert row.prediction.shape == (11, 2)
        assert log.rows[0].ev == cfg.ev_initial

    def test_deterministic(self):
        cfg = SimConfig(steps=3,
                        tv_initial=VehicleState(10036.0, 2.625, 0.0, 18.0))
        model = init_model(0)
        a = run_closed_loop(cfg, model)
        b = run_closed_loop(cfg, model)
        for ra, rb in zip(a.rows, b.rows):
            assert ra.ev == rb.ev and ra.tv == rb.tv
            assert np.array_equal(ra.prediction, rb.prediction)


def synthetic_log():
    rows = []
    for step in range(1, 4):
        tv = VehicleState(10.0 * step, 1.0 * step, 0.0, 10.0)
        pred = np.array([[10.0 * step + 10.0 * k, 1.0 * step + 1.0 * k + 0.5]
                         for k in range(3)])
        rows.append(SimStep(step=step, t=0.2 * (step - 1),
                            ev=VehicleState(0.0, 0.0, 0.0, 20.0),
                            ev_input=ControlInput(0.0, 0.0),
                            tv=tv, tv_input=ControlInput(0.0, 0.0),
                            prediction=pred, margin=1.0,
                            scp_iterations=1, max_slack=0.0))
    return SimLog(rows=rows)


class TestPredictionConsistency:
    def test_partial_overlap_scoring(self):
        # predictions are off by exactly 0.5 m in y at every horizon point
        out = prediction_consistency(synthetic_log())
        assert set(out) == {1, 2}
        assert out[1] == pytest.approx(0.5)
        assert out[2] == pytest.approx(0.5)


class TestLogPersistence:
    def test_simlog_csv(self, tmp_path):
        log = synthetic_log()
        save_simlog(log, tmp_path / "sim.csv")
        with open(tmp_path / "sim.csv", encoding="utf-8", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 3
        assert rows[0]["ev_v"] == "20.0"
        assert rows[2]["tv_x"] == "30.0"

    def test_predictions_csv(self, tmp_path):
        log = synthetic_log()
        save_predictions(log, tmp_path / "pred.csv")
        with open(tmp_path / "pred.csv", encoding="utf-8", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 9
        assert rows[0]["k"] == "0"
