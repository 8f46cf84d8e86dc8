"""Closed-loop two-vehicle scenario: learned TV prediction feeding the EV's MPC.

The truth propagates on the predictor's 0.1 s grid (two RK4 substeps per
0.2 s MPC step); the TV history buffer is filled from those substeps, and the
network's 0.1 s prediction is decimated by two onto the MPC grid.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dynamics import (BicycleParams, ControlInput, VehicleState, linearize,
                       step_truth)
from .lanegen import cubic_lane_change
from .mpc import (OcpConfig, SafetyEllipse, TvPrediction, build_reference,
                  ellipse_margin, solve_ocp, tv_policy)
from .neuralnet import ModelParams, model_forward

HISTORY_SIZE = 30


@dataclass
class HistoryBuffer:
    """Most recent M target-vehicle positions on the data grid, oldest first."""

    points: np.ndarray  # (M, 2)

    def push(self, x: float, y: float) -> None:
        self.points = np.vstack([self.points[1:], [x, y]])


@dataclass
class SimConfig:
    steps: int = 11
    mpc: OcpConfig = field(default_factory=OcpConfig)
    ellipse: SafetyEllipse = field(default_factory=SafetyEllipse)
    ev_initial: VehicleState = VehicleState(28.0, 7.875, 0.0, 20.0)
    tv_initial: VehicleState = VehicleState(36.0, 2.625, 0.0, 18.0)
    ev_v_ref: float = 20.0
    tv_v_ref: float = 20.0
    ev_lane_y: float = 7.875
    tv_target_lane_y: float = 7.875
    # the EV keeps to its own lane (no overtaking); lane center +- the room
    # left once the vehicle footprint is subtracted from the lane width
    ev_y_bounds: tuple = (7.25, 8.5)
    # the TV merges by tracking a cubic lane-change blend of this duration,
    # starting at t = 0
    tv_merge_duration: float = 2.0
    bicycle: BicycleParams = field(default_factory=BicycleParams)
    data_dt: float = 0.1
    seed: int = 0

    def __post_init__(self):
        ratio = self.mpc.T / self.data_dt
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError("mpc.T must be an integer multiple of data_dt")

    @property
    def substeps(self) -> int:
        return int(round(self.mpc.T / self.data_dt))


@dataclass
class SimStep:
    step: int
    t: float
    ev: VehicleState
    ev_input: ControlInput
    tv: VehicleState
    tv_input: ControlInput
    prediction: np.ndarray  # (N+1, 2)
    margin: float
    scp_iterations: int
    max_slack: float


@dataclass
class SimLog:
    rows: list[SimStep]

    def __len__(self) -> int:
        return len(self.rows)


def cold_start_history(tv_state: VehicleState, M: int = HISTORY_SIZE,
                       dt: float = 0.1) -> HistoryBuffer:
    """Backward constant-velocity extrapolation ending at the current position."""
    j = np.arange(M)
    back = (M - 1 - j) * tv_state.v * dt
    pts = np.column_stack([tv_state.x - back * np.cos(tv_state.psi),
                           tv_state.y - back * np.sin(tv_state.psi)])
    return HistoryBuffer(points=pts)


def prediction_adapter(model: ModelParams, buffer: HistoryBuffer,
                       tv_now: VehicleState, N: int, mpc_T: float,
                       data_dt: float = 0.1) -> TvPrediction:
    """Calibrate, predict, de-calibrate, anchor to the TV, decimate to the MPC grid."""
    pts = buffer.points
    if pts.shape[0] != HISTORY_SIZE:
        raise ValueError(f"history buffer must hold {HISTORY_SIZE} points")
    stride = int(round(mpc_T / data_dt))
    if 1 + stride * N >= HISTORY_SIZE:
        raise ValueError("horizon exceeds the predicted window")
    x_last = pts[-1, 0]
    calibrated = pts - np.array([x_last, 0.0])
    pred = model_forward(model, calibrated)
    pred = pred + np.array([x_last, 0.0])
    # anchor: the sample at index 1 plays the role of "now" on the MPC grid
    offset = np.array([tv_now.x, tv_now.y]) - pred[1]
    shifted = pred + offset
    picks = 1 + stride * np.arange(N + 1)
    return TvPrediction(positions=shifted[picks])


def tv_lane_reference(config: SimConfig, t: float) -> np.ndarray:
    """Per-step lateral reference for the TV at simulation time t: a cubic
    blend from the initial lane into the target lane over tv_merge_duration."""
    y0 = config.tv_initial.y
    y1 = config.tv_target_lane_y
    dur = config.tv_merge_duration
    ys = np.empty(config.mpc.N + 1)
    for k in range(config.mpc.N + 1):
        tk = t + k * config.mpc.T
        if tk <= 0.0:
            ys[k] = y0
        elif tk >= dur:
            ys[k] = y1
        else:
            ys[k] = cubic_lane_change(tk, 0.0, dur, y0, y1)
    return ys


def run_closed_loop(config: SimConfig, model: ModelParams) -> SimLog:
    """Run the two-vehicle scenario for config.steps MPC steps."""
    ev = config.ev_initial
    tv = config.tv_initial
    ev_mpc = replace(config.mpc, y_bounds=tuple(config.ev_y_bounds))
    buffer = cold_start_history(tv, HISTORY_SIZE, config.data_dt)
    warm = None
    rows = []
    for step in range(1, config.steps + 1):
        t = (step - 1) * config.mpc.T
        prediction = prediction_adapter(model, buffer, tv, config.mpc.N,
                                        config.mpc.T, config.data_dt)

        ev_model = linearize(ev, config.bicycle, config.mpc.T)
        ref = build_reference(ev_mpc, config.ev_lane_y, config.ev_v_ref, ev.x)
        sol = solve_ocp(ev, ev_model, ref, prediction, config.ellipse,
                        ev_mpc, warm_start=warm)
        ev_u = ControlInput(float(sol.inputs[0, 0]), float(sol.inputs[0, 1]))
        warm = np.vstack([sol.states[1:], sol.states[-1]])

        tv_model = linearize(tv, config.bicycle, config.mpc.T)
        tv_u = tv_policy(tv, tv_model, config.mpc,
                         lane_center_y=config.tv_target_lane_y,
                         v_ref=config.tv_v_ref,
                         y_reference=tv_lane_reference(config, t))

        margin = ellipse_margin(ev.x - tv.x, ev.y - tv.y, config.ellipse)
        rows.append(SimStep(step=step, t=t, ev=ev, ev_input=ev_u, tv=tv,
                            tv_input=tv_u, prediction=prediction.positions,
                            margin=float(margin),
                            scp_iterations=sol.scp_iterations,
                            max_slack=sol.max_slack))

        # propagate on the data grid, feeding every substep into the buffer
        for _ in range(config.substeps):
            ev = step_truth(ev, ev_u, config.bicycle, config.data_dt)
            tv = step_truth(tv, tv_u, config.bicycle, config.data_dt)
            buffer.push(tv.x, tv.y)
    return SimLog(rows=rows)


SIMLOG_COLUMNS = ["step", "t", "ev_x", "ev_y", "ev_psi", "ev_v", "ev_a",
                  "ev_delta", "tv_x", "tv_y", "tv_psi", "tv_v", "tv_a",
                  "tv_delta", "margin", "scp_iters", "max_slack"]


def save_simlog(log: SimLog, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SIMLOG_COLUMNS)
        for r in log.rows:
            writer.writerow([r.step, repr(r.t),
                             repr(r.ev.x), repr(r.ev.y), repr(r.ev.psi), repr(r.ev.v),
                             repr(r.ev_input.accel), repr(r.ev_input.steer),
                             repr(r.tv.x), repr(r.tv.y), repr(r.tv.psi), repr(r.tv.v),
                             repr(r.tv_input.accel), repr(r.tv_input.steer),
                             repr(r.margin), r.scp_iterations, repr(r.max_slack)])


def save_predictions(log: SimLog, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["step", "k", "pred_x", "pred_y"])
        for r in log.rows:
            for k, (px, py) in enumerate(r.prediction):
                writer.writerow([r.step, k, repr(float(px)), repr(float(py))])


def prediction_consistency(log: SimLog) -> dict[int, float]:
    """Distance between each step's prediction and the later-realized TV
    positions, averaged over the part of the horizon the log covers.
    Steps with no logged future are omitted."""
    tv_xy = {r.step: np.array([r.tv.x, r.tv.y]) for r in log.rows}
    last = max(tv_xy)
    out = {}
    for r in log.rows:
        horizon = min(len(r.prediction) - 1, last - r.step)
        if horizon < 1:
            continue
        errs = [float(np.linalg.norm(r.prediction[k] - tv_xy[r.step + k]))
                for k in range(1, horizon + 1)]
        out[r.step] = float(np.mean(errs))
    return out
