"""Finite-horizon optimal control with an elliptical collision constraint.

States are condensed through the affine dynamics, so each subproblem decides
only the stacked inputs plus one slack per safety row. The nonconvex ellipse
exterior is handled by sequential convexification: linearize the margin about
the previous trajectory iterate, solve the convex QP, repeat to a fixed point.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import ControlInput, LinearModel, VehicleState
from .qpsolver import QpSolution, QuadraticProgram, solve_qp


@dataclass
class OcpConfig:
    N: int = 10
    T: float = 0.2
    Q: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.1, 0.001, 1.0]))
    R: np.ndarray = field(default_factory=lambda: np.array([3.0, 0.5]))
    S: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.1, 0.001, 1.0]))
    y_bounds: tuple = (2.0, 13.75)       # [l_veh, 3*w_lane - l_veh]
    psi_bounds: tuple = (-1.2, 1.2)
    v_bounds: tuple = (0.0, 70.0)
    a_bounds: tuple = (-9.0, 6.0)
    delta_bounds: tuple = (-0.52, 0.52)
    slack_weight: float = 1e5
    scp_max_iterations: int = 10
    scp_tolerance: float = 1e-3
    qp_tolerance: float = 1e-7
    qp_max_iterations: int = 40000

    def __post_init__(self):
        self.Q = np.asarray(self.Q, dtype=float)
        self.R = np.asarray(self.R, dtype=float)
        self.S = np.asarray(self.S, dtype=float)
        if self.N < 1 or self.T <= 0:
            raise ValueError("N must be >= 1 and T positive")
        if np.any(self.Q < 0) or np.any(self.R < 0) or np.any(self.S < 0):
            raise ValueError("weights must be nonnegative")
        for lo, hi in (self.y_bounds, self.psi_bounds, self.v_bounds,
                       self.a_bounds, self.delta_bounds):
            if lo > hi:
                raise ValueError("bounds must be ordered")


@dataclass(frozen=True)
class SafetyEllipse:
    semi_axis_x: float = 7.0
    semi_axis_y: float = 2.2

    def __post_init__(self):
        if self.semi_axis_x <= 0 or self.semi_axis_y <= 0:
            raise ValueError("semi-axes must be positive")


@dataclass(frozen=True)
class TvPrediction:
    positions: np.ndarray  # (N+1, 2)


@dataclass(frozen=True)
class ReferenceTrajectory:
    states: np.ndarray  # (N+1, 4)


@dataclass
class OcpSolution:
    inputs: np.ndarray       # (N, 2)
    states: np.ndarray       # (N+1, 4)
    max_slack: float
    scp_iterations: int
    converged: bool


class OcpError(RuntimeError):
    """Raised when a subproblem cannot be solved."""


def ellipse_margin(dx: float, dy: float, ellipse: SafetyEllipse):
    """dx^2/a^2 + dy^2/b^2 - 1; nonnegative means collision-free."""
    return (dx / ellipse.semi_axis_x) ** 2 + (dy / ellipse.semi_axis_y) ** 2 - 1.0


def build_reference(config: OcpConfig, lane_center_y: float, v_ref: float,
                    x_now: float) -> ReferenceTrajectory:
    """Constant target: hold the lane center at v_ref (x is unweighted)."""
    ref = np.tile(np.array([x_now, lane_center_y, 0.0, v_ref]), (config.N + 1, 1))
    return ReferenceTrajectory(states=ref)


def _condense(initial: VehicleState, model: LinearModel, N: int):
    """States stacked as d + Phi @ U for U = (u_0, ..., u_{N-1})."""
    A, B, c = model.A, model.B, model.c
    d = np.zeros(((N + 1), 4))
    Phi = np.zeros((N + 1, 4, 2 * N))
    d[0] = initial.as_array()
    for k in range(N):
        d[k + 1] = A @ d[k] + c
        Phi[k + 1] = A @ Phi[k]
        Phi[k + 1][:, 2 * k:2 * k + 2] = B
    return d, Phi.reshape((N + 1) * 4, 2 * N), Phi


def rollout(model: LinearModel, initial: VehicleState, inputs: np.ndarray) -> np.ndarray:
    """Propagate the affine model through a stacked input sequence."""
    N = inputs.shape[0]
    states = np.zeros((N + 1, 4))
    states[0] = initial.as_array()
    for k in range(N):
        states[k + 1] = model.A @ states[k] + model.B @ inputs[k] + model.c
    return states


def _ellipse_gradient(p, tv, ellipse: SafetyEllipse):
    d = p - tv
    if abs(d[0]) < 1e-12 and abs(d[1]) < 1e-12:
        d = d + np.array([1e-6, 0.0])  # degenerate center; nudge before differentiating
    return np.array([2.0 * d[0] / ellipse.semi_axis_x ** 2,
                     2.0 * d[1] / ellipse.semi_axis_y ** 2]), d


def assemble_qp(initial: VehicleState, model: LinearModel,
                ref: ReferenceTrajectory, tv: TvPrediction | None,
                ellipse: SafetyEllipse, config: OcpConfig,
                iterate: np.ndarray) -> QuadraticProgram:
    """Condensed QP over stacked inputs plus one slack per safety row."""
    N = config.N
    if iterate.shape != (N + 1, 4):
        raise ValueError("iterate must have shape (N+1, 4)")
    d, PhiF, Phi = _condense(initial, model, N)
    n_u = 2 * N
    n_s = N if tv is not None else 0
    n = n_u + n_s

    # stage weights: Q on k=0..N-1, S on k=N; R per input
    Wq = np.concatenate([np.tile(config.Q, N), config.S])
    dev = (d - ref.states).reshape(-1)
    Hu = 2.0 * (PhiF.T * Wq) @ PhiF + 2.0 * np.diag(np.tile(config.R, N))
    fu = 2.0 * PhiF.T @ (Wq * dev)

    H = np.zeros((n, n))
    H[:n_u, :n_u] = Hu
    f = np.zeros(n)
    f[:n_u] = fu
    f[n_u:] = config.slack_weight

    rows, lows, ups = [], [], []

    # input boxes
    for k in range(N):
        for j, (lo, hi) in enumerate((config.a_bounds, config.delta_bounds)):
            row = np.zeros(n)
            row[2 * k + j] = 1.0
            rows.append(row)
            lows.append(lo)
            ups.append(hi)

    # state boxes for y, psi, v at k = 1..N
    state_boxes = ((1, config.y_bounds), (2, config.psi_bounds), (3, config.v_bounds))
    for k in range(1, N + 1):
        for idx, (lo, hi) in state_boxes:
            row = np.zeros(n)
            row[:n_u] = Phi[k][idx]
            rows.append(row)
            lows.append(lo - d[k][idx])
            ups.append(hi - d[k][idx])

    if tv is not None:
        for k in range(1, N + 1):
            pbar = iterate[k, :2]
            g, delta = _ellipse_gradient(pbar, tv.positions[k], ellipse)
            margin = (delta[0] / ellipse.semi_axis_x) ** 2 + \
                     (delta[1] / ellipse.semi_axis_y) ** 2 - 1.0
            # margin(pbar) + g . (p_k - pbar) >= -s_k
            row = np.zeros(n)
            row[:n_u] = g @ Phi[k][:2]
            row[n_u + k - 1] = 1.0
            rows.append(row)
            lows.append(float(g @ pbar - margin - g @ d[k][:2]))
            ups.append(np.inf)
        for k in range(N):
            row = np.zeros(n)
            row[n_u + k] = 1.0
            rows.append(row)
            lows.append(0.0)
            ups.append(np.inf)

    return QuadraticProgram(H=H, f=f, A_ineq=np.array(rows),
                            lower=np.array(lows), upper=np.array(ups))


def solve_ocp(initial: VehicleState, model: LinearModel,
              ref: ReferenceTrajectory, tv: TvPrediction | None,
              ellipse: SafetyEllipse, config: OcpConfig,
              warm_start: np.ndarray | None = None) -> OcpSolution:
    """SCP loop around the condensed QP; returns the converged trajectory."""
    N = config.N
    if warm_start is not None:
        iterate = np.asarray(warm_start, dtype=float).copy()
        iterate[0] = initial.as_array()
    else:
        iterate = rollout(model, initial, np.zeros((N, 2)))

    inputs = np.zeros((N, 2))
    max_slack = 0.0
    converged = False
    it = 0
    for it in range(1, config.scp_max_iterations + 1):
        qp = assemble_qp(initial, model, ref, tv, ellipse, config, iterate)
        sol: QpSolution = solve_qp(qp, tolerance=config.qp_tolerance,
                                   max_iterations=config.qp_max_iterations)
        if sol.status == "infeasible":
            raise OcpError(f"QP infeasible at SCP iteration {it} "
                           f"(kkt residual {sol.kkt_residual:.2e})")
        inputs = sol.z[:2 * N].reshape(N, 2)
        max_slack = float(np.max(sol.z[2 * N:])) if tv is not None else 0.0
        states = rollout(model, initial, inputs)
        delta = float(np.max(np.abs(states - iterate)))
        iterate = states
        if delta < config.scp_tolerance:
            converged = True
            break
    return OcpSolution(inputs=inputs, states=iterate, max_slack=max_slack,
                       scp_iterations=it, converged=converged)


def tv_policy(tv_state: VehicleState, model: LinearModel, config: OcpConfig,
              lane_center_y: float = 7.875, v_ref: float = 20.0,
              y_reference: np.ndarray | None = None) -> ControlInput:
    """Lane-tracking MPC for the target vehicle, without the safety constraint.

    y_reference, when given, is a per-step lateral reference of length N+1
    (for example a lane-change blend); by default the lane center is held
    over the whole horizon.
    """
    ref = build_reference(config, lane_center_y, v_ref, tv_state.x)
    if y_reference is not None:
        y_reference = np.asarray(y_reference, dtype=float)
        if y_reference.shape != (config.N + 1,):
            raise ValueError("y_reference must have length N+1")
        states = ref.states.copy()
        states[:, 1] = y_reference
        ref = ReferenceTrajectory(states=states)
    sol = solve_ocp(tv_state, model, ref, None, SafetyEllipse(), config)
    return ControlInput(accel=float(sol.inputs[0, 0]), steer=float(sol.inputs[0, 1]))
