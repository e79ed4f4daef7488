"""End-to-end fairness hypothesis tests and the Welch baseline."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from . import asymptotics as asy
from .data import AuditDataset, enrich
from .errors import FairTestError, InsufficientDataError
from .projection import ProjectionProblem, TransportPlan, project, witness

REJECT = "reject"
FAIL_TO_REJECT = "fail-to-reject"


def _num(x):
    """JSON-safe float: non-finite values become strings."""
    if x is None:
        return None
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def _nums(a):
    return [_num(v) for v in np.ravel(a)] if np.ndim(a) <= 1 else [[_num(v) for v in row] for row in np.asarray(a)]


@dataclass
class TestReport:
    """Outcome of one audit.

    ``thresholds`` and ``decisions`` are aligned with ``alphas``; the scalar
    ``alpha``/``threshold``/``decision`` properties refer to the first level.
    All levels share a single Monte Carlo draw set.
    """

    __test__ = False  # not a pytest class

    criterion: str
    mode: str
    n: int
    statistic: float
    alphas: tuple[float, ...]
    thresholds: tuple[float, ...]
    p_value: float
    epsilon: tuple[float, ...] | None = None
    projection_value: float | None = None
    infeasible: bool = False
    law: asy.LimitLawEstimate | None = None
    closed_form_thresholds: tuple[float, ...] | None = None
    plan: TransportPlan | None = None
    draws: int | None = None
    seed: int | None = None
    extra: dict = field(default_factory=dict)

    @property
    def alpha(self) -> float:
        return self.alphas[0]

    @property
    def threshold(self) -> float:
        return self.thresholds[0]

    @property
    def decisions(self) -> tuple[str, ...]:
        return tuple(REJECT if self.infeasible or self.statistic > t else FAIL_TO_REJECT for t in self.thresholds)

    @property
    def decision(self) -> str:
        return self.decisions[0]

    @property
    def rejected(self) -> bool:
        return self.decision == REJECT

    def to_dict(self, include_rows: bool = True) -> dict:
        out = {
            "criterion": self.criterion,
            "mode": self.mode,
            "epsilon": None if self.epsilon is None else _nums(self.epsilon),
            "n": self.n,
            "statistic": _num(self.statistic),
            "projection_value": _num(self.projection_value),
            "infeasible": self.infeasible,
            "alpha": self.alpha,
            "threshold": _num(self.threshold),
            "p_value": _num(self.p_value),
            "decision": self.decision,
            "decisions": [
                {"alpha": a, "threshold": _num(t), "decision": d}
                for a, t, d in zip(self.alphas, self.thresholds, self.decisions)
            ],
        }
        if self.law is not None:
            law = self.law
            out["law"] = {
                "f0": _num(law.f0),
                "bandwidth": _num(law.bandwidth),
                "mu": _nums(law.mu),
                "S": _nums(law.S),
                "S_eigs": _nums(law.S_eigs()),
                "Sigma": _nums(law.Sigma),
                "Sigma_eigs": _nums(law.Sigma_eigs()),
                "Sigma1": _nums(law.Sigma1),
                "boundary_u_mean": _nums(law.boundary_u_mean),
            }
        if self.closed_form_thresholds is not None:
            out["cross_check"] = {"closed_form_thresholds": _nums(self.closed_form_thresholds)}
        if self.plan is not None:
            w = {
                "rows_moved": self.plan.rows_moved,
                "total_mass": _num(self.plan.total_mass),
                "total_cost": _num(self.plan.total_cost),
            }
            if include_rows:
                w["rows"] = [
                    {
                        "row": mv.row,
                        "mass": _num(mv.mass),
                        "cost": _num(mv.cost),
                        "source": None if mv.source is None else _nums(mv.source),
                        "target": None if mv.target is None else _nums(mv.target),
                    }
                    for mv in self.plan.moves
                ]
            out["witness"] = w
        if self.draws is not None:
            out["mc"] = {"draws": self.draws, "seed": self.seed}
        out.update(self.extra)
        return out

    def to_json(self, include_rows: bool = True) -> str:
        return json.dumps(self.to_dict(include_rows), indent=2) + "\n"


def _alphas(alpha) -> tuple[float, ...]:
    alphas = (float(alpha),) if np.isscalar(alpha) else tuple(float(a) for a in alpha)
    if not alphas or any(not 0 < a < 1 for a in alphas):
        raise ValueError("significance levels must lie in (0, 1)")
    return alphas


def run_test(
    dataset: AuditDataset,
    clf,
    criterion,
    alpha: float | Sequence[float] = 0.05,
    epsilon=None,
    *,
    draws: int = asy.DEFAULT_DRAWS,
    seed: int = 0,
    bandwidth: float | None = None,
    witness_eps: float = 1e-6,
    cross_check: bool = True,
    with_witness: bool = True,
) -> TestReport:
    """Test whether ``clf`` is fair for ``criterion`` on ``dataset``.

    With ``epsilon`` given, the one-sided composite null
    ``E[C(X) phi] <= epsilon`` is tested against its conservative bound.
    An infeasible projection (fairness unreachable by moving features) is
    reported as a rejection with ``p_value = 0`` and ``infeasible = True``.
    When the limit law cannot be estimated (no kernel mass at the boundary)
    but the statistic is zero or infinite, the decision is still determined;
    thresholds are then reported as NaN.
    """
    alphas = _alphas(alpha)
    enr = enrich(dataset, clf, criterion)
    prob = ProjectionProblem.from_enriched(enr, epsilon)
    res = project(prob)
    stat = res.statistic
    mode = asy.COMPOSITE if prob.composite else asy.SIMPLE

    law = None
    try:
        law = asy.estimate_law(enr, bandwidth)
        mc = asy.draw_law(law, mode, draws, seed)
    except FairTestError:
        # a zero statistic never exceeds a nonnegative threshold, and an
        # infeasible one always does; otherwise the law is required
        if res.feasible and stat > 0:
            raise
        law = mc = None
    if mc is None:
        thresholds = tuple(math.nan for _ in alphas)
        pval = 1.0 if res.feasible else 0.0
    elif res.feasible:
        thresholds = tuple(mc.quantile(a) for a in alphas)
        pval = mc.p_value(stat)
    else:
        thresholds = tuple(mc.quantile(a) for a in alphas)
        pval = 0.0

    closed = None
    if cross_check and law is not None and mode == asy.SIMPLE and criterion.name in asy.CLOSED_FORM_CRITERIA:
        try:
            closed = tuple(asy.quantile_closed_form(enr, law, criterion, a, draws, seed) for a in alphas)
        except FairTestError:
            closed = None

    plan = None
    if with_witness:
        X = dataset.X if getattr(clf, "kind", None) != "precomputed" else None
        plan = witness(prob, res, clf, X, witness_eps)

    return TestReport(
        criterion=criterion.name,
        mode=mode,
        n=enr.n,
        statistic=stat,
        alphas=alphas,
        thresholds=thresholds,
        p_value=pval,
        epsilon=None if prob.epsilon is None else tuple(prob.epsilon),
        projection_value=res.value,
        infeasible=not res.feasible,
        law=law,
        closed_form_thresholds=closed,
        plan=plan,
        draws=draws,
        seed=seed,
    )


@dataclass(frozen=True)
class WelchResult:
    statistic: float
    df: float
    p_value: float
    means: tuple[float, float]
    sizes: tuple[int, int]


def welch_statistic(x1: np.ndarray, x2: np.ndarray) -> WelchResult:
    """Two-sided Welch test of equal means with Satterthwaite degrees of freedom."""
    n1, n2 = x1.size, x2.size
    if n1 < 2 or n2 < 2:
        raise InsufficientDataError(f"Welch test needs at least 2 samples per cell, got {n1} and {n2}")
    m1, m2 = float(x1.mean()), float(x2.mean())
    v1, v2 = float(x1.var(ddof=1)) / n1, float(x2.var(ddof=1)) / n2
    se2 = v1 + v2
    if se2 == 0:
        if m1 == m2:
            return WelchResult(0.0, float(n1 + n2 - 2), 1.0, (m1, m2), (n1, n2))
        return WelchResult(math.copysign(math.inf, m1 - m2), float(n1 + n2 - 2), 0.0, (m1, m2), (n1, n2))
    t = (m1 - m2) / math.sqrt(se2)
    df = se2**2 / (v1**2 / (n1 - 1) + v2**2 / (n2 - 1))
    p = float(2 * stats.t.sf(abs(t), df))
    return WelchResult(t, df, min(p, 1.0), (m1, m2), (n1, n2))


def welch_test(dataset: AuditDataset, clf, criterion, alpha: float | Sequence[float] = 0.05) -> TestReport:
    """Baseline: Welch t-test comparing ``C(X)`` across the two cells of a single contrast."""
    if criterion.m != 1:
        raise ValueError("Welch's test applies to one-dimensional criteria only")
    alphas = _alphas(alpha)
    enr = enrich(dataset, clf, criterion)
    i, j = criterion.contrasts[0]
    x1 = enr.c[enr.u[:, i] > 0].astype(float)
    x2 = enr.c[enr.u[:, j] > 0].astype(float)
    res = welch_statistic(x1, x2)
    if math.isfinite(res.df) and res.df > 0:
        thresholds = tuple(float(stats.t.ppf(1 - a / 2, res.df)) for a in alphas)
    else:
        thresholds = tuple(float(stats.norm.ppf(1 - a / 2)) for a in alphas)
    return TestReport(
        criterion=criterion.name,
        mode="welch",
        n=enr.n,
        statistic=abs(res.statistic),
        alphas=alphas,
        thresholds=thresholds,
        p_value=res.p_value,
        extra={"welch": {"t": _num(res.statistic), "df": _num(res.df), "means": list(res.means), "sizes": list(res.sizes)}},
    )
