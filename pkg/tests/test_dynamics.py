import math

import numpy as np
import pytest

from riskmpc import (BicycleParams, ControlInput, VehicleState,
                     continuous_dynamics, linearize, step_affine, step_truth)


PARAMS = BicycleParams()


class TestContinuousDynamics:
    def test_straight_line(self):
        d = continuous_dynamics(VehicleState(0, 0, 0, 10), ControlInput(0, 0), PARAMS)
        assert np.allclose(d, [10.0, 0.0, 0.0, 0.0])

    def test_acceleration_channel(self):
        d = continuous_dynamics(VehicleState(0, 0, 0, 10), ControlInput(2.5, 0), PARAMS)
        assert d[3] == 2.5

    def test_steering_matches_slip_formula(self):
        state = VehicleState(1.0, 2.0, 0.3, 12.0)
        inp = ControlInput(0.5, 0.2)
        beta = math.atan(PARAMS.lr / (PARAMS.lf + PARAMS.lr) * math.tan(0.2))
        d = continuous_dynamics(state, inp, PARAMS)
        assert d[0] == pytest.approx(12.0 * math.cos(0.3 + beta))
        assert d[1] == pytest.approx(12.0 * math.sin(0.3 + beta))
        assert d[2] == pytest.approx(12.0 / PARAMS.lr * math.sin(beta))


class TestLinearize:
    def test_jacobians_match_finite_differences(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            xi = VehicleState(*rng.uniform([-50, 0, -1.0, 1.0], [50, 16, 1.0, 40]))
            model = linearize(xi, PARAMS, 0.2)
            h = 1e-7
            x0 = xi.as_array()
            f0 = continuous_dynamics(xi, ControlInput(0, 0), PARAMS)
            for j in range(4):
                xp = x0.copy()
                xp[j] += h
                fp = continuous_dynamics(VehicleState.from_array(xp),
                                         ControlInput(0, 0), PARAMS)
                col = np.eye(4)[:, j] + 0.2 * (fp - f0) / h
                assert np.allclose(model.A[:, j], col, atol=1e-6)
            for j, du in enumerate(([h, 0.0], [0.0, h])):
                fp = continuous_dynamics(xi, ControlInput(*du), PARAMS)
                assert np.allclose(model.B[:, j], 0.2 * (fp - f0) / h, atol=1e-6)

    def test_affine_update_exact_at_linearization_point(self):
        xi = VehicleState(5.0, 7.875, 0.1, 20.0)
        model = linearize(xi, PARAMS, 0.2)
        nxt = step_affine(model, xi, ControlInput(0, 0))
        expect = xi.as_array() + 0.2 * continuous_dynamics(xi, ControlInput(0, 0), PARAMS)
        assert np.allclose(nxt.as_array(), expect, atol=1e-12)

    def test_rejects_nonpositive_sampling_time(self):
        with pytest.raises(ValueError):
            linearize(VehicleState(0, 0, 0, 10), PARAMS, 0.0)


class TestStepTruth:
    def test_constant_acceleration_exact(self):
        # with psi = 0 and no steering the model is polynomial, RK4 is exact
        s = step_truth(VehicleState(0, 0, 0, 10), ControlInput(2.0, 0), PARAMS, 0.1)
        assert s.v == pytest.approx(10.2, abs=1e-12)
        assert s.x == pytest.approx(10 * 0.1 + 0.5 * 2.0 * 0.1 ** 2, abs=1e-12)
        assert s.y == pytest.approx(0.0, abs=1e-12)

    def test_substep_convergence(self):
        s0 = VehicleState(0, 0, 0.2, 15)
        u = ControlInput(1.0, 0.3)
        a = step_truth(s0, u, PARAMS, 0.2, substeps=1)
        b = step_truth(s0, u, PARAMS, 0.2, substeps=64)
        assert np.allclose(a.as_array(), b.as_array(), atol=1e-6)

    def test_affine_model_is_first_order_accurate(self):
        s0 = VehicleState(0, 7.875, 0.05, 20)
        u = ControlInput(-1.0, 0.05)
        model = linearize(s0, PARAMS, 0.2)
        approx = step_affine(model, s0, u)
        exact = step_truth(s0, u, PARAMS, 0.2, substeps=32)
        assert np.allclose(approx.as_array(), exact.as_array(), atol=0.2)

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            step_truth(VehicleState(0, 0, 0, 1), ControlInput(0, 0), PARAMS, 0.0)
        with pytest.raises(ValueError):
            step_truth(VehicleState(0, 0, 0, 1), ControlInput(0, 0), PARAMS, 0.1,
                       substeps=0)


def test_params_validation():
    with pytest.raises(ValueError):
        BicycleParams(lf=0.0)
