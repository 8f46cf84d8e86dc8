"""Three-stage lane-change path generation on a uniform time grid.

A path is straight in the original lane (stage I), follows a cubic spline into
the target lane (stage II), then continues straight (stage III). Sweeping the
longitudinal speed over an arithmetic grid produces the training corpus.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LaneChangeGeometry:
    """Lane centers (m) and per-stage durations (s)."""

    y_origin: float = 2.625
    y_target: float = 7.875
    t_prep: float = 2.0
    t_change: float = 4.0
    t_finish: float = 2.0

    def __post_init__(self):
        if min(self.t_prep, self.t_change, self.t_finish) <= 0:
            raise ValueError("stage durations must be positive")
        if self.y_origin == self.y_target:
            raise ValueError("origin and target lanes must differ")


@dataclass(frozen=True)
class LanePath:
    """Sampled (x, y) path driven at constant speed v with sampling time dt."""

    points: np.ndarray  # (N, 2)
    v: float
    dt: float

    def __len__(self) -> int:
        return self.points.shape[0]


def cubic_lane_change(x: float, x0: float, xT: float, y0: float, yT: float) -> float:
    """Cubic transition y(x) with zero slope at both ends.

    y(x) = y0 + 3*(yT-y0)*s^2 - 2*(yT-y0)*s^3,  s = (x-x0)/(xT-x0)
    """
    if not x0 < xT:
        raise ValueError("require x0 < xT")
    if x < x0 or x > xT:
        raise ValueError(f"x={x} outside the lane-change interval [{x0}, {xT}]")
    s = (x - x0) / (xT - x0)
    dy = yT - y0
    return y0 + 3.0 * dy * s * s - 2.0 * dy * s * s * s


def build_path(v: float, geom: LaneChangeGeometry, dt: float) -> LanePath:
    """Sample one lane-change path on the uniform time grid.

    The grid runs from t=0 through the end of stage III plus one extra sample,
    so the default 2 s + 4 s + 2 s stages at dt=0.1 s give 82 points.
    """
    if v <= 0 or dt <= 0:
        raise ValueError("v and dt must be positive")
    total = geom.t_prep + geom.t_change + geom.t_finish
    n = int(round(total / dt)) + 2
    t = np.arange(n) * dt
    x = v * t
    x0 = v * geom.t_prep
    xT = v * (geom.t_prep + geom.t_change)
    y = np.empty(n)
    for i, (ti, xi) in enumerate(zip(t, x)):
        if ti <= geom.t_prep:
            y[i] = geom.y_origin
        elif ti <= geom.t_prep + geom.t_change:
            y[i] = cubic_lane_change(xi, x0, xT, geom.y_origin, geom.y_target)
        else:
            y[i] = geom.y_target
    return LanePath(points=np.column_stack([x, y]), v=v, dt=dt)


def build_corpus(v_min: float, v_max: float, v_step: float,
                 geom: LaneChangeGeometry, dt: float) -> list[LanePath]:
    """One path per speed on the inclusive arithmetic grid v_min..v_max."""
    if v_min > v_max:
        raise ValueError("v_min must not exceed v_max")
    if v_step <= 0:
        raise ValueError("v_step must be positive")
    count = int(round((v_max - v_min) / v_step)) + 1
    speeds = v_min + v_step * np.arange(count)
    return [build_path(float(v), geom, dt) for v in speeds if v <= v_max + 1e-9]
