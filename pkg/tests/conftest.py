"""Shared test helpers: random QP generation and a brute-force oracle."""

from __future__ import annotations

import itertools

import numpy as np

from riskmpc import QuadraticProgram


def random_qp(rng: np.random.Generator, n_max: int = 8, m_max: int = 8) -> QuadraticProgram:
    """A strictly convex QP with two-sided rows, some bounds infinite."""
    n = int(rng.integers(1, n_max + 1))
    m = int(rng.integers(1, m_max + 1))
    M = rng.normal(size=(n, n))
    H = M.T @ M + np.eye(n)
    f = rng.normal(scale=2.0, size=n)
    A = rng.normal(size=(m, n))
    centers = rng.normal(scale=1.5, size=m)
    half = rng.uniform(0.1, 2.0, size=m)
    lower = centers - half
    upper = centers + half
    drop_lo = rng.random(m) < 0.25
    drop_up = rng.random(m) < 0.25
    lower[drop_lo] = -np.inf
    upper[drop_up] = np.inf
    return QuadraticProgram(H=H, f=f, A_ineq=A, lower=lower, upper=upper)


def enumeration_oracle(qp: QuadraticProgram, feas_tol: float = 1e-9):
    """Global optimum of a strictly convex QP by active-set enumeration.

    Every row is tried inactive, active at its lower bound, or active at its
    upper bound. For a strictly convex objective the optimum satisfies the
    KKT equalities of *some* active set, so the best feasible candidate is
    the optimum, and no feasible candidate at all certifies infeasibility.
    Returns (z, objective) or (None, None) when infeasible.
    """
    n, m = qp.n, qp.m
    best_z, best_obj = None, None
    for combo in itertools.product((0, -1, 1), repeat=m):
        rows = [i for i, s in enumerate(combo) if s != 0]
        b = []
        ok = True
        for i in rows:
            bound = qp.lower[i] if combo[i] < 0 else qp.upper[i]
            if not np.isfinite(bound):
                ok = False
                break
            b.append(bound)
        if not ok:
            continue
        k = len(rows)
        kkt = np.zeros((n + k, n + k))
        kkt[:n, :n] = qp.H
        if k:
            Aact = qp.A_ineq[rows]
            kkt[:n, n:] = Aact.T
            kkt[n:, :n] = Aact
        rhs = np.concatenate([-qp.f, np.array(b)])
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            continue
        z = sol[:n]
        Az = qp.A_ineq @ z
        if np.any(Az < qp.lower - feas_tol) or np.any(Az > qp.upper + feas_tol):
            continue
        obj = qp.objective(z)
        if best_obj is None or obj < best_obj:
            best_z, best_obj = z, obj
    return best_z, best_obj
