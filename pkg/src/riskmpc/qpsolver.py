"""Dense convex QP solver: predictor-corrector interior point + KKT polish.

Solves   min 1/2 z'Hz + f'z   s.t.  lower <= A z <= upper
to a stated KKT tolerance. Two-sided rows are split into one-sided ones, a
Mehrotra-style interior-point iteration drives the barrier parameter down,
and a final active-set polish solves the identified KKT system exactly. The
result is certified through `kkt_residual`, so a "solved" status always means
the residual bound holds. Deterministic for identical inputs; no global state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_REG = 1e-9          # diagonal lift for semidefinite cost blocks
_FRACTION = 0.995    # fraction-to-boundary step scaling
_STALL_ITERS = 15    # no-progress window before giving up


@dataclass
class QuadraticProgram:
    H: np.ndarray
    f: np.ndarray
    A_ineq: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=float)
        self.f = np.asarray(self.f, dtype=float)
        self.A_ineq = np.atleast_2d(np.asarray(self.A_ineq, dtype=float))
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        n = self.f.shape[0]
        if self.H.shape != (n, n):
            raise ValueError("H/f dimensions disagree")
        if not np.allclose(self.H, self.H.T, atol=1e-12):
            raise ValueError("H must be symmetric")
        m = self.A_ineq.shape[0]
        if self.A_ineq.size and self.A_ineq.shape[1] != n:
            raise ValueError("A_ineq column count must match f")
        if self.lower.shape != (m,) or self.upper.shape != (m,):
            raise ValueError("bound dimensions must match A_ineq rows")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")

    @property
    def n(self) -> int:
        return self.f.shape[0]

    @property
    def m(self) -> int:
        return self.A_ineq.shape[0]

    def objective(self, z: np.ndarray) -> float:
        return float(0.5 * z @ self.H @ z + self.f @ z)


@dataclass
class QpSolution:
    z: np.ndarray
    objective: float
    kkt_residual: float
    status: str  # "solved" | "max_iterations" | "infeasible"
    duals: np.ndarray = field(default=None, repr=False)
    iterations: int = 0


def kkt_residual(qp: QuadraticProgram, z: np.ndarray, duals: np.ndarray) -> float:
    """Max-norm of stationarity, primal violation, and complementarity.

    Dual sign convention: duals > 0 push against the upper bound, duals < 0
    against the lower; a wrong-signed or unbounded-side multiplier is charged
    at its own magnitude, so small residual certifies optimality.
    """
    z = np.asarray(z, dtype=float)
    duals = np.asarray(duals, dtype=float)
    stat = qp.H @ z + qp.f
    if qp.m:
        stat = stat + qp.A_ineq.T @ duals
    r = float(np.max(np.abs(stat))) if stat.size else 0.0
    if qp.m:
        Az = qp.A_ineq @ z
        prim = np.maximum(np.maximum(qp.lower - Az, Az - qp.upper), 0.0)
        r = max(r, float(np.max(prim)))
        up_gap = np.where(np.isfinite(qp.upper), qp.upper - Az, np.inf)
        lo_gap = np.where(np.isfinite(qp.lower), Az - qp.lower, np.inf)
        comp = np.zeros(qp.m)
        pos, neg = duals > 0, duals < 0
        comp[pos] = duals[pos] * up_gap[pos]
        comp[neg] = -duals[neg] * lo_gap[neg]
        comp = np.where(np.isfinite(comp), np.abs(comp), np.abs(duals))
        r = max(r, float(np.max(comp)))
    return r


def _polish(qp: QuadraticProgram, z, y, tolerance):
    """Solve the KKT system of the guessed active set exactly."""
    Az = qp.A_ineq @ z if qp.m else np.zeros(0)
    gap_scale = 1e-6 * (1.0 + np.abs(Az))
    dual_tol = max(tolerance, 1e-6 * (1.0 + float(np.max(np.abs(y), initial=0.0))))
    act_lo = (y < -dual_tol) | (np.abs(Az - qp.lower) < gap_scale)
    act_up = (y > dual_tol) | (np.abs(Az - qp.upper) < gap_scale)
    act_lo &= np.isfinite(qp.lower)
    act_up &= np.isfinite(qp.upper) & ~act_lo
    idx = np.flatnonzero(act_lo | act_up)
    b = np.where(act_lo, qp.lower, qp.upper)[idx]
    G = qp.A_ineq[idx]
    n, k = qp.n, idx.size
    K = np.zeros((n + k, n + k))
    K[:n, :n] = qp.H
    K[:n, n:] = G.T
    K[n:, :n] = G
    rhs = np.concatenate([-qp.f, b])
    sol = None
    for reg in (0.0, _REG, 1e-6):
        Kr = K + reg * np.eye(n + k) if reg else K
        try:
            cand = np.linalg.solve(Kr, rhs)
            for _ in range(2):  # iterative refinement against roundoff
                cand = cand + np.linalg.solve(Kr, rhs - Kr @ cand)
        except np.linalg.LinAlgError:
            continue
        if np.all(np.isfinite(cand)):
            sol = cand
            break
    if sol is None:
        sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
    zp = sol[:n]
    yp = np.zeros(qp.m)
    yp[idx] = sol[n:]
    return zp, yp


def _one_sided(qp: QuadraticProgram):
    """Split l <= Az <= u into G z <= h with a sign map back to A rows."""
    rows, rhs, signs, srcs = [], [], [], []
    for i in range(qp.m):
        if np.isfinite(qp.upper[i]):
            rows.append(qp.A_ineq[i])
            rhs.append(qp.upper[i])
            signs.append(1.0)
            srcs.append(i)
        if np.isfinite(qp.lower[i]):
            rows.append(-qp.A_ineq[i])
            rhs.append(-qp.lower[i])
            signs.append(-1.0)
            srcs.append(i)
    if not rows:
        return (np.zeros((0, qp.n)), np.zeros(0), np.zeros(0),
                np.zeros(0, dtype=int))
    return (np.array(rows), np.array(rhs), np.array(signs),
            np.array(srcs, dtype=int))


def _fold_duals(qp: QuadraticProgram, lam, signs, srcs):
    y = np.zeros(qp.m)
    np.add.at(y, srcs, signs * lam)
    return y


def _equilibrate(qp: QuadraticProgram, iters: int = 10):
    """Modified Ruiz row/column scaling plus a cost scale; returns (D, E, c)."""
    n, m = qp.n, qp.m
    D = np.ones(n)
    E = np.ones(m)
    H, A, f = qp.H.copy(), qp.A_ineq.copy(), qp.f.copy()
    for _ in range(iters):
        col = np.abs(H).max(axis=0)
        if m:
            col = np.maximum(col, np.abs(A).max(axis=0))
        row = np.abs(A).max(axis=1) if m else np.zeros(0)
        d = np.clip(1.0 / np.sqrt(np.maximum(col, 1e-8)), 1e-4, 1e4)
        e = np.clip(1.0 / np.sqrt(np.maximum(row, 1e-8)), 1e-4, 1e4)
        H = d[:, None] * H * d[None, :]
        f = d * f
        if m:
            A = e[:, None] * A * d[None, :]
        D *= d
        E *= e
    scale = max(np.abs(H).max(axis=0).mean() if n else 1.0,
                np.abs(f).max() if f.size else 0.0)
    c = float(np.clip(1.0 / max(scale, 1e-8), 1e-8, 1e8))
    return D, E, c


def solve_qp(qp: QuadraticProgram, tolerance: float = 1e-8,
             max_iterations: int = 100,
             initial: np.ndarray | None = None) -> QpSolution:
    """First-order optimal point of the QP, or an infeasibility diagnosis."""
    n = qp.n
    if qp.m == 0 or not (np.isfinite(qp.lower).any() or np.isfinite(qp.upper).any()):
        Hreg = qp.H + _REG * np.eye(n)
        z = np.linalg.solve(Hreg, -qp.f)
        res = kkt_residual(qp, z, np.zeros(qp.m))
        return QpSolution(z=z, objective=qp.objective(z), kkt_residual=res,
                          status="solved" if res <= tolerance else "max_iterations",
                          duals=np.zeros(qp.m), iterations=0)

    # interior point on the equilibrated problem; certify on the original
    D, E, c = _equilibrate(qp)
    sqp = QuadraticProgram(H=c * D[:, None] * qp.H * D[None, :],
                           f=c * D * qp.f,
                           A_ineq=E[:, None] * qp.A_ineq * D[None, :],
                           lower=E * qp.lower, upper=E * qp.upper)
    Hreg = sqp.H + _REG * np.eye(n)
    G, h, signs, srcs = _one_sided(sqp)
    p = G.shape[0]

    z = np.zeros(n) if initial is None else np.asarray(initial, dtype=float) / D
    w = np.maximum(h - G @ z, 1.0)
    lam = np.ones(p)

    best = None  # (merit, original-space z, original-space y, iteration)
    stall = 0
    it = 0
    max_iterations = min(max_iterations, 200)
    while it < max_iterations:
        it += 1
        r_d = sqp.H @ z + sqp.f + G.T @ lam
        r_p = G @ z + w - h
        mu = float(w @ lam) / p

        y = E * _fold_duals(sqp, lam, signs, srcs) / c
        merit = max(kkt_residual(qp, D * z, y), 0.0)
        if best is None or merit < best[0] * (1 - 1e-3):
            best = (merit, D * z, y, it)
            stall = 0
        else:
            stall += 1
        if merit <= tolerance or (mu < 1e-12 and merit < 1e-6):
            break
        if stall >= _STALL_ITERS or not np.isfinite(merit):
            break
        # diverging multipliers with stuck primal residual: Farkas-type
        # certificate of primal infeasibility, no point iterating further
        if np.max(lam) > 1e12:
            break

        d = lam / w
        M = Hreg + (G.T * d) @ G
        Mf = None
        reg = 1e-10
        while Mf is None:
            try:
                Mf = np.linalg.cholesky(M)
            except np.linalg.LinAlgError:
                M = M + reg * (1.0 + np.abs(M.diagonal())) * np.eye(n)
                reg *= 100.0
                if reg > 1.0:
                    break
        if Mf is None:
            break

        def solve_newton(r_c):
            rhs = -r_d - G.T @ (d * r_p - r_c / w)
            dz = np.linalg.solve(Mf.T, np.linalg.solve(Mf, rhs))
            dlam = d * (G @ dz + r_p) - r_c / w
            dw = (-r_c - w * dlam) / lam
            return dz, dlam, dw

        # affine (predictor) direction
        dz_a, dlam_a, dw_a = solve_newton(w * lam)

        def step_len(v, dv):
            neg = dv < 0
            return float(min(1.0, np.min(-v[neg] / dv[neg]) if np.any(neg) else 1.0))

        a_p = step_len(w, dw_a)
        a_d = step_len(lam, dlam_a)
        mu_aff = float((w + a_p * dw_a) @ (lam + a_d * dlam_a)) / p
        sigma = (max(mu_aff, 0.0) / mu) ** 3 if mu > 0 else 0.0

        # corrector
        r_c = w * lam + dw_a * dlam_a - sigma * mu
        dz, dlam, dw = solve_newton(r_c)
        a_p = _FRACTION * step_len(w, dw)
        a_d = _FRACTION * step_len(lam, dlam)
        alpha = min(a_p, a_d)
        z = z + alpha * dz
        w = w + alpha * dw
        lam = lam + alpha * dlam

    merit, z_best, y_best, _ = best
    zp, yp = _polish(qp, z_best, y_best, tolerance)
    res_p = kkt_residual(qp, zp, yp)
    if res_p < merit:
        z_best, y_best, merit = zp, yp, res_p

    if merit <= tolerance:
        status = "solved"
    else:
        Az = qp.A_ineq @ z_best
        viol = float(np.max(np.maximum(np.maximum(qp.lower - Az,
                                                  Az - qp.upper), 0.0)))
        bnd = np.abs(np.concatenate([qp.lower[np.isfinite(qp.lower)],
                                     qp.upper[np.isfinite(qp.upper)]]))
        b_scale = 1.0 + (float(bnd.max()) if bnd.size else 0.0)
        status = "infeasible" if viol > 1e-6 * b_scale else "max_iterations"
    return QpSolution(z=z_best, objective=qp.objective(z_best),
                      kkt_residual=merit, status=status, duals=y_best,
                      iterations=it)
