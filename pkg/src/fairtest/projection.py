"""Optimal-transport projection of the empirical measure onto the fair set.

Because transporting ``A`` or ``Y`` costs infinity and only the classifier
label of a point matters, the projection reduces to the linear program ::

    min_p  N^-1 sum_i p_i d_i
    s.t.   p in [0, 1]^N,
           sum_i (1 - 2 C_i) phi_i p_i  = - sum_i C_i phi_i          (simple)
           sum_i (1 - 2 C_i) phi_i p_i <=  N eps - sum_i C_i phi_i   (composite)

where ``p_i`` is the fraction of atom ``i`` moved across the decision
boundary.  With one constraint (``m = 1``) the LP is a fractional knapsack
and is solved by sorting; otherwise the bounded simplex in
:mod:`fairtest.simplex` is used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalFailureError, UnboundedDualError
from .simplex import FEAS_TOL, solve_bounded_lp

#: Entries of ``p`` above this are reported as moved.
MASS_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ProjectionProblem:
    """LP data: distances ``d``, labels ``c`` and the (n, m) matrix ``phi``."""

    d: np.ndarray
    c: np.ndarray
    phi: np.ndarray
    epsilon: np.ndarray | None = None

    def __post_init__(self):
        d = np.asarray(self.d, float).ravel()
        c = np.asarray(self.c, np.int64).ravel()
        phi = np.asarray(self.phi, float)
        if phi.ndim == 1:
            phi = phi[:, None]
        if not (d.size == c.size == phi.shape[0]):
            raise ValueError("d, c and phi must have one entry per sample")
        if np.isnan(d).any() or (d < 0).any():
            raise ValueError("distances must be nonnegative")
        if not np.isin(c, (0, 1)).all():
            raise ValueError("labels must be binary")
        eps = None
        if self.epsilon is not None:
            eps = np.broadcast_to(np.asarray(self.epsilon, float), (phi.shape[1],)).copy()
            if (eps < 0).any():
                raise ValueError("epsilon must be nonnegative")
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "epsilon", eps)

    @classmethod
    def from_enriched(cls, enr, epsilon=None) -> "ProjectionProblem":
        return cls(enr.dist, enr.c, enr.phi, epsilon)

    @property
    def n(self) -> int:
        return self.d.size

    @property
    def m(self) -> int:
        return self.phi.shape[1]

    @property
    def composite(self) -> bool:
        return self.epsilon is not None

    def coefficients(self) -> np.ndarray:
        """Constraint matrix rows: ``(1 - 2 C_i) phi_i``, shape (n, m)."""
        return (1 - 2 * self.c)[:, None] * self.phi

    def imbalance(self) -> np.ndarray:
        """``sum_i C_i phi_i``: the unnormalised fairness violation."""
        return self.c @ self.phi

    def objective(self, p: np.ndarray) -> float:
        mask = p > 0
        return float(p[mask] @ self.d[mask]) / self.n


@dataclass
class ProjectionResult:
    """Projection value ``P`` (or ``P_eps``) and an optimal mass vector."""

    value: float
    p_star: np.ndarray
    method: str
    dual_gamma: np.ndarray | None = None
    iterations: int = 0

    @property
    def feasible(self) -> bool:
        return math.isfinite(self.value)

    @property
    def statistic(self) -> float:
        """The test statistic ``N * P``."""
        return self.value * self.p_star.size

    def moved_rows(self) -> np.ndarray:
        return np.flatnonzero(self.p_star > MASS_TOL)

    def n_fractional(self, tol: float = 1e-9) -> int:
        p = self.p_star
        return int(np.count_nonzero((p > tol) & (p < 1 - tol)))


def _greedy(prob: ProjectionProblem, gain: np.ndarray, budget: float, method: str) -> ProjectionResult:
    """Fill ``budget`` with the cheapest gain per unit distance.

    ``gain[i]`` is the reduction of the violation obtained by moving atom
    ``i`` completely.  Atoms with positive gain and zero distance come first,
    then descending ``gain/d`` with ties broken by row index.
    """
    n = prob.n
    p = np.zeros(n)
    if budget <= 0:
        return ProjectionResult(0.0, p, method)
    usable = np.flatnonzero((gain > 0) & np.isfinite(prob.d))
    d = prob.d[usable]
    with np.errstate(divide="ignore"):
        t = np.where(d > 0, gain[usable] / np.where(d > 0, d, 1.0), np.inf)
    order = usable[np.argsort(-t, kind="stable")]

    remaining = budget
    total = 0.0
    tol = 1e-12 * max(1.0, budget)
    for i in order:
        g = gain[i]
        if g < remaining:
            p[i] = 1.0
            remaining -= g
            total += prob.d[i]
        else:
            p[i] = remaining / g
            total += prob.d[i] * p[i]
            remaining = 0.0
            break
    if remaining > tol:
        return ProjectionResult(math.inf, p, method)
    return ProjectionResult(total / n, p, method)


def project_sort_1d(prob: ProjectionProblem) -> ProjectionResult:
    """Sorting algorithm for the simple null with a scalar criterion."""
    if prob.m != 1:
        raise ValueError("project_sort_1d requires m = 1")
    phi = prob.phi[:, 0]
    s = -float(prob.c @ phi)
    sgn = float(np.sign(s))
    gain = (1 - 2 * prob.c) * phi * sgn
    return _greedy(prob, gain, abs(s), "sort")


def project_sort_composite_1d(prob: ProjectionProblem, epsilon: float | None = None) -> ProjectionResult:
    """Sorting algorithm for the one-sided tolerance null ``E[C phi] <= eps``.

    The budget is ``(sum_i C_i phi_i - N eps)^+``; a zero budget gives value 0.
    """
    if prob.m != 1:
        raise ValueError("project_sort_composite_1d requires m = 1")
    if epsilon is None:
        epsilon = 0.0 if prob.epsilon is None else float(prob.epsilon[0])
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    phi = prob.phi[:, 0]
    excess = max(float(prob.c @ phi) - prob.n * epsilon, 0.0)
    gain = -(1 - 2 * prob.c) * phi
    return _greedy(prob, gain, excess, "sort-composite")


def project_lp(prob: ProjectionProblem) -> ProjectionResult:
    """Solve the projection LP with the bounded-variable simplex.

    Rows with infinite distance are fixed at ``p_i = 0``.  An infeasible LP
    yields ``value = inf``.
    """
    n = prob.n
    finite = np.isfinite(prob.d)
    idx = np.flatnonzero(finite)
    coef = prob.coefficients()[idx].T  # (m, n_finite)
    rhs = -prob.imbalance()
    cost = prob.d[idx] / n
    p = np.zeros(n)
    if prob.composite:
        res = solve_bounded_lp(cost, A_ub=coef, b_ub=n * prob.epsilon + rhs, lo=np.zeros(idx.size), hi=np.ones(idx.size))
        method = "lp-composite"
    else:
        res = solve_bounded_lp(cost, A_eq=coef, b_eq=rhs, lo=np.zeros(idx.size), hi=np.ones(idx.size))
        method = "lp"
    if res.status == "unbounded":
        raise NumericalFailureError("projection LP reported unbounded; costs must be nonnegative")
    if res.status == "infeasible":
        return ProjectionResult(math.inf, p, method, iterations=res.iterations)
    p[idx] = res.x
    # the LP row multipliers y map to the dual-function variable as gamma = -N y
    gamma = -res.duals * n
    return ProjectionResult(prob.objective(p), p, method, dual_gamma=gamma, iterations=res.iterations)


def project(prob: ProjectionProblem) -> ProjectionResult:
    """Dispatch to the sorting algorithm when ``m = 1``, otherwise the LP."""
    if prob.m == 1:
        if prob.composite:
            return project_sort_composite_1d(prob)
        return project_sort_1d(prob)
    return project_lp(prob)


def constraint_residual(prob: ProjectionProblem, p: np.ndarray) -> np.ndarray:
    """Left minus right side of the projection constraint at ``p``."""
    lhs = prob.coefficients().T @ p + prob.imbalance()
    if prob.composite:
        return lhs - prob.n * prob.epsilon
    return lhs


# ---------------------------------------------------------------------------
# dual


def dual_objective(prob: ProjectionProblem, gamma: float, epsilon: float | None = None) -> float:
    """Dual function at scalar ``gamma`` (minus ``gamma * eps`` when composite)."""
    phi = prob.phi[:, 0]
    g = gamma * phi
    finite = np.isfinite(prob.d)
    val = float(g @ prob.c)
    val += float(np.minimum(prob.d[finite] + (1 - 2 * prob.c[finite]) * g[finite], 0.0).sum())
    val /= prob.n
    if epsilon is not None:
        val -= gamma * epsilon
    return val


def dual_value(prob: ProjectionProblem, *, max_doublings: int = 60, iters: int = 200) -> float:
    """Maximise the concave piecewise-linear dual over ``gamma`` (``m = 1``).

    An expanding bracket locates the maximiser, then golden-section search
    narrows it.  For composite problems ``gamma`` is restricted to be
    nonnegative and the ``-gamma * eps`` term is included.

    Raises
    ------
    UnboundedDualError
        If the bracket keeps growing for ``max_doublings`` doublings, which
        happens exactly when the primal is infeasible.
    """
    if prob.m != 1:
        raise ValueError("dual_value requires m = 1")
    eps = None if prob.epsilon is None else float(prob.epsilon[0])

    def f(g):
        return dual_objective(prob, g, eps)

    absphi = np.abs(prob.phi[:, 0])
    fin = np.isfinite(prob.d) & (absphi > 0)
    scale = float(np.median(prob.d[fin] / absphi[fin])) if fin.any() else 1.0
    scale = scale if scale > 0 else 1.0

    def bracket(sign):
        step = scale
        prev, fprev = 0.0, f(0.0)
        for _ in range(max_doublings):
            cur = sign * step
            fcur = f(cur)
            if fcur <= fprev:
                return cur
            prev, fprev = cur, fcur
            step *= 2
        raise UnboundedDualError("dual objective is unbounded (primal infeasible)")

    hi = bracket(1.0)
    lo = 0.0 if eps is not None else bracket(-1.0)
    invphi = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    x1 = b - invphi * (b - a)
    x2 = a + invphi * (b - a)
    f1, f2 = f(x1), f(x2)
    best = max(f(0.0), f1, f2)
    for _ in range(iters):
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + invphi * (b - a)
            f2 = f(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - invphi * (b - a)
            f1 = f(x1)
        best = max(best, f1, f2)
        if b - a <= 1e-15 * max(1.0, abs(a), abs(b)):
            break
    return best


# ---------------------------------------------------------------------------
# witness


@dataclass(frozen=True)
class MovedAtom:
    row: int
    mass: float
    source: np.ndarray
    target: np.ndarray | None
    cost: float
    realized_cost: float | None


@dataclass
class TransportPlan:
    """Atoms moved by an (eps-)optimal projected measure."""

    value: float
    moves: list[MovedAtom] = field(default_factory=list)

    @property
    def total_mass(self) -> float:
        return float(sum(mv.mass for mv in self.moves))

    @property
    def total_cost(self) -> float:
        return float(sum(mv.mass * mv.cost for mv in self.moves))

    @property
    def rows_moved(self) -> int:
        return len(self.moves)


def witness(prob: ProjectionProblem, result: ProjectionResult, clf=None, X=None, eps: float = 1e-6) -> TransportPlan:
    """Transport plan of the eps-optimal projected measure.

    For each atom with ``p_i > 0`` the row index, mass ``p_i / N``, source
    features, a flip target with cost at most ``d_i + eps`` and ``d_i`` are
    listed.  Targets are omitted when the classifier offers no geometry
    (precomputed columns, kernel models) or ``X`` is not given.
    """
    plan = TransportPlan(result.value)
    if not result.feasible:
        return plan
    n = prob.n
    for i in result.moved_rows():
        src = None if X is None else np.asarray(X[i], float)
        tgt = None
        realized = None
        if clf is not None and src is not None:
            tgt = clf.flip_target(src, eps)
            if tgt is not None:
                realized = clf.cost(src, tgt)
        plan.moves.append(MovedAtom(int(i), float(result.p_star[i]) / n, src, tgt, float(prob.d[i]), realized))
    return plan


def feasibility_tolerance(prob: ProjectionProblem) -> float:
    return FEAS_TOL * (1.0 + float(np.abs(prob.imbalance()).max()))
