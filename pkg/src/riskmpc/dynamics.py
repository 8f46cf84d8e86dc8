"""Kinematic bicycle model, its affine discretization, and an RK4 truth integrator.

The planner works with a linearization of the bicycle model about the current
state, producing the affine update

    xi_{t+1} = xi0 + T*f(xi0, 0) + A*(xi_t - xi0) + B*u_t

while the closed-loop simulator propagates the nonlinear model with RK4.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class VehicleState:
    """Planar vehicle state: positions (m), heading (rad), speed (m/s)."""

    x: float
    y: float
    psi: float
    v: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.psi, self.v], dtype=float)

    @staticmethod
    def from_array(arr) -> "VehicleState":
        x, y, psi, v = (float(a) for a in arr)
        return VehicleState(x, y, psi, v)


@dataclass(frozen=True)
class ControlInput:
    """Acceleration (m/s^2) and front steering angle (rad)."""

    accel: float
    steer: float

    def as_array(self) -> np.ndarray:
        return np.array([self.accel, self.steer], dtype=float)


@dataclass(frozen=True)
class BicycleParams:
    """CG-referenced axle distances; both must be positive."""

    lf: float = 1.5
    lr: float = 1.5

    def __post_init__(self):
        if self.lf <= 0 or self.lr <= 0:
            raise ValueError("axle distances must be positive")


@dataclass(frozen=True)
class LinearModel:
    """Affine discrete-time model xi' = A xi + B u + c about xi0."""

    A: np.ndarray
    B: np.ndarray
    c: np.ndarray
    T: float
    xi0: VehicleState


def continuous_dynamics(state: VehicleState, inp: ControlInput,
                        params: BicycleParams) -> np.ndarray:
    """Time derivative of the state under the kinematic bicycle model."""
    beta = math.atan(params.lr / (params.lf + params.lr) * math.tan(inp.steer))
    return np.array([
        state.v * math.cos(state.psi + beta),
        state.v * math.sin(state.psi + beta),
        state.v / params.lr * math.sin(beta),
        inp.accel,
    ])


def linearize(xi0: VehicleState, params: BicycleParams, T: float) -> LinearModel:
    """Affine model about (xi0, u=0) with analytic Jacobians."""
    if T <= 0:
        raise ValueError("sampling time must be positive")
    c_psi, s_psi = math.cos(xi0.psi), math.sin(xi0.psi)
    kr = params.lr / (params.lf + params.lr)  # d beta / d delta at delta=0

    J_xi = np.zeros((4, 4))
    J_xi[0, 2] = -xi0.v * s_psi
    J_xi[0, 3] = c_psi
    J_xi[1, 2] = xi0.v * c_psi
    J_xi[1, 3] = s_psi

    J_u = np.zeros((4, 2))
    J_u[3, 0] = 1.0
    J_u[0, 1] = -xi0.v * s_psi * kr
    J_u[1, 1] = xi0.v * c_psi * kr
    J_u[2, 1] = xi0.v / params.lr * kr

    A = np.eye(4) + T * J_xi
    B = T * J_u
    f0 = continuous_dynamics(xi0, ControlInput(0.0, 0.0), params)
    c = xi0.as_array() + T * f0 - A @ xi0.as_array()
    return LinearModel(A=A, B=B, c=c, T=T, xi0=xi0)


def step_affine(model: LinearModel, state: VehicleState,
                inp: ControlInput) -> VehicleState:
    """One discrete step of the affine model."""
    nxt = model.A @ state.as_array() + model.B @ inp.as_array() + model.c
    return VehicleState.from_array(nxt)


def step_truth(state: VehicleState, inp: ControlInput, params: BicycleParams,
               dt: float, substeps: int = 1) -> VehicleState:
    """RK4 integration of the nonlinear model with zero-order-hold input."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    h = dt / substeps
    xi = state.as_array()
    for _ in range(substeps):
        s = VehicleState.from_array(xi)
        k1 = continuous_dynamics(s, inp, params)
        k2 = continuous_dynamics(VehicleState.from_array(xi + 0.5 * h * k1), inp, params)
        k3 = continuous_dynamics(VehicleState.from_array(xi + 0.5 * h * k2), inp, params)
        k4 = continuous_dynamics(VehicleState.from_array(xi + h * k3), inp, params)
        xi = xi + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return VehicleState.from_array(xi)
