"""Dense bounded-variable revised simplex method.

Solves ::

    min  c @ x   s.t.  A_eq @ x == b_eq,  A_ub @ x <= b_ub,  lo <= x <= hi

for problems with few rows and many bounded columns, which is the shape of
the projection LP (one row per fairness constraint, one column per sample).
Nonbasic variables sit at either bound, so the box constraints never enter
the basis.  The basis matrix is re-solved from scratch every iteration; with
``m`` rows this costs ``O(m^3 + m n)`` per pivot.

Pricing is Dantzig's rule; after a run of degenerate pivots the solver
switches to Bland's smallest-index rule, which cannot cycle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalFailureError

FEAS_TOL = 1e-8
COST_TOL = 1e-9
PIVOT_TOL = 1e-11


@dataclass
class LPResult:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray
    fun: float
    basis: np.ndarray
    duals: np.ndarray
    iterations: int
    bland: bool


class _Solver:
    def __init__(self, A, b, c, lo, hi, max_iter, degenerate_switch):
        self.A = A
        self.b = b
        self.c = c
        self.lo = lo
        self.hi = hi
        self.m, self.n = A.shape
        self.max_iter = max_iter
        self.degenerate_switch = degenerate_switch
        self.iterations = 0
        self.bland = False

    def run(self, c, basis, at_upper, phase_cols):
        """Iterate from a feasible basis; ``phase_cols`` masks eligible entering columns."""
        A, lo, hi = self.A, self.lo, self.hi
        m = self.m
        degenerate_run = 0
        while True:
            if self.iterations >= self.max_iter:
                raise NumericalFailureError(f"simplex did not converge in {self.max_iter} iterations")
            self.iterations += 1
            B = A[:, basis]
            nonbasic = np.ones(self.n, dtype=bool)
            nonbasic[basis] = False
            xN = np.where(at_upper, hi, lo)
            xN[~nonbasic] = 0.0
            rhs = self.b - A @ np.where(nonbasic, xN, 0.0)
            xB = np.linalg.solve(B, rhs)
            y = np.linalg.solve(B.T, c[basis])
            red = c - A.T @ y

            can_up = nonbasic & ~at_upper & (red < -COST_TOL) & (hi > lo) & phase_cols
            can_down = nonbasic & at_upper & (red > COST_TOL) & (hi > lo) & phase_cols
            cand = np.flatnonzero(can_up | can_down)
            if cand.size == 0:
                x = np.where(nonbasic, xN, 0.0)
                x[basis] = xB
                return x, y, basis, at_upper
            if self.bland:
                j = int(cand[0])
            else:
                j = int(cand[np.argmax(np.abs(red[cand]))])
            direction = 1.0 if can_up[j] else -1.0

            col = np.linalg.solve(B, A[:, j])
            # x_B(t) = x_B - direction * t * col
            delta = direction * col
            step = hi[j] - lo[j]
            leave = -1
            leave_to_upper = False
            for r in range(m):
                k = basis[r]
                if delta[r] > PIVOT_TOL:
                    lim = (xB[r] - lo[k]) / delta[r]
                    to_upper = False
                elif delta[r] < -PIVOT_TOL:
                    if math.isinf(hi[k]):
                        continue
                    lim = (hi[k] - xB[r]) / (-delta[r])
                    to_upper = True
                else:
                    continue
                lim = max(lim, 0.0)
                if lim < step - 1e-15 or (
                    self.bland and leave >= 0 and abs(lim - step) <= 1e-15 and k < basis[leave]
                ):
                    step = lim
                    leave = r
                    leave_to_upper = to_upper
            if math.isinf(step):
                return None  # unbounded
            if step <= 1e-14:
                degenerate_run += 1
                if degenerate_run >= self.degenerate_switch:
                    self.bland = True
            else:
                degenerate_run = 0
            if leave < 0:
                at_upper[j] = not at_upper[j]
                continue
            k = basis[leave]
            basis = basis.copy()
            basis[leave] = j
            at_upper[j] = False
            at_upper[k] = leave_to_upper


def solve_bounded_lp(
    c,
    A_eq=None,
    b_eq=None,
    A_ub=None,
    b_ub=None,
    lo=None,
    hi=None,
    *,
    max_iter: int | None = None,
    degenerate_switch: int = 50,
) -> LPResult:
    """Minimise ``c @ x`` subject to equality, inequality and box constraints.

    Inequality rows receive nonnegative slack columns.  Phase I minimises the
    sum of artificial variables; if that sum cannot be driven below
    ``FEAS_TOL * (1 + max|b|)`` the problem is reported infeasible.

    Returns
    -------
    LPResult
        ``x`` holds the values of the original variables only; ``duals`` are
        the row multipliers of the final basis.
    """
    c = np.asarray(c, dtype=float).ravel()
    n = c.size
    rows, rhs, slack = [], [], []
    if A_eq is not None:
        A_eq = np.atleast_2d(np.asarray(A_eq, float))
        rows.append(A_eq)
        rhs.append(np.asarray(b_eq, float).ravel())
        slack += [False] * A_eq.shape[0]
    if A_ub is not None:
        A_ub = np.atleast_2d(np.asarray(A_ub, float))
        rows.append(A_ub)
        rhs.append(np.asarray(b_ub, float).ravel())
        slack += [True] * A_ub.shape[0]
    lo = np.zeros(n) if lo is None else np.asarray(lo, float).copy()
    hi = np.full(n, np.inf) if hi is None else np.asarray(hi, float).copy()
    if not rows:
        x = np.where(c >= 0, lo, hi)
        if np.any(~np.isfinite(x)):
            return LPResult("unbounded", x, -math.inf, np.array([], int), np.array([]), 0, False)
        return LPResult("optimal", x, float(c @ x), np.array([], int), np.array([]), 0, False)
    if np.any(~np.isfinite(lo)):
        raise ValueError("lower bounds must be finite")

    A = np.vstack(rows)
    b = np.concatenate(rhs)
    m = A.shape[0]
    n_slack = sum(slack)
    S = np.zeros((m, n_slack))
    for k, r in enumerate(np.flatnonzero(slack)):
        S[r, k] = 1.0
    A_full = np.hstack([A, S])
    lo_full = np.concatenate([lo, np.zeros(n_slack)])
    hi_full = np.concatenate([hi, np.full(n_slack, np.inf)])

    # all structural and slack columns start at their lower bounds
    resid = b - A_full @ lo_full
    sign = np.where(resid >= 0, 1.0, -1.0)
    art = np.diag(sign)
    A_ph = np.hstack([A_full, art])
    n_tot = A_ph.shape[1]
    lo_ph = np.concatenate([lo_full, np.zeros(m)])
    hi_ph = np.concatenate([hi_full, np.full(m, np.inf)])
    c1 = np.concatenate([np.zeros(n + n_slack), np.ones(m)])
    basis = np.arange(n + n_slack, n_tot)
    at_upper = np.zeros(n_tot, dtype=bool)
    if max_iter is None:
        max_iter = 50 * (n_tot + m) + 1000

    solver = _Solver(A_ph, b, c1, lo_ph, hi_ph, max_iter, degenerate_switch)
    eligible = np.ones(n_tot, dtype=bool)
    x_ph, _, basis, at_upper = solver.run(c1, basis, at_upper, eligible)
    infeas = float(x_ph[n + n_slack:].sum())
    if infeas > FEAS_TOL * (1.0 + float(np.abs(b).max())):
        return LPResult("infeasible", x_ph[:n], math.inf, basis, np.zeros(m), solver.iterations, solver.bland)

    # phase II: artificials frozen at zero
    hi_ph[n + n_slack:] = 0.0
    eligible[n + n_slack:] = False
    c2 = np.concatenate([c, np.zeros(n_slack + m)])
    solver.hi = hi_ph
    res = solver.run(c2, basis, at_upper, eligible)
    if res is None:
        return LPResult("unbounded", x_ph[:n], -math.inf, basis, np.zeros(m), solver.iterations, solver.bland)
    x, y, basis, _ = res
    x = np.clip(x, lo_ph, hi_ph)
    xs = x[:n]
    return LPResult("optimal", xs, float(c @ xs), basis, y, solver.iterations, solver.bland)
