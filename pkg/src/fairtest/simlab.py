"""Synthetic validation study with a Gaussian-mixture population.

The default design draws ``(A, Y)`` from four cells and ``X | (A, Y)`` from a
bivariate Gaussian.  Every cell has the same distribution of the second
feature, so the logistic classifier with ``theta = (0, 1)`` and ``tau = 0.5``
is exactly fair for equal opportunity and the rejection frequency of the
test estimates its size.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from . import asymptotics as asy
from .boundary import LinearClassifier
from .criteria import FairnessCriterion, equal_opportunity
from .data import AuditDataset
from .errors import DegenerateBoundaryError, DegenerateGroupError, DegenerateLawError, EmptyDatasetError
from .projection import ProjectionProblem, project
from .testkit import run_test

CELLS = ((1, 1), (0, 1), (1, 0), (0, 0))
MAX_ATTEMPTS = 1000


def _default_means():
    return {(1, 1): (6.0, 0.0), (0, 1): (-2.0, 0.0), (1, 0): (6.0, 0.0), (0, 0): (-4.0, 0.0)}


def _default_vars():
    return {(1, 1): (3.5, 5.0), (0, 1): (5.0, 5.0), (1, 0): (3.5, 5.0), (0, 0): (5.0, 5.0)}


@dataclass(frozen=True)
class GaussianMixtureDesign:
    """Cell probabilities ``p[(a, y)]``, per-cell means and diagonal variances."""

    probs: dict = field(default_factory=lambda: {(1, 1): 0.4, (0, 1): 0.1, (1, 0): 0.4, (0, 0): 0.1})
    means: dict = field(default_factory=_default_means)
    variances: dict = field(default_factory=_default_vars)
    theta: tuple[float, ...] = (0.0, 1.0)
    tau: float = 0.5

    def __post_init__(self):
        if set(self.probs) != set(CELLS):
            raise ValueError("probabilities are required for all four (a, y) cells")
        p = np.array([self.probs[c] for c in CELLS], float)
        if (p < 0).any() or abs(p.sum() - 1) > 1e-9:
            raise ValueError("cell probabilities must be nonnegative and sum to 1")
        for c in CELLS:
            if len(self.means[c]) != len(self.theta) or len(self.variances[c]) != len(self.theta):
                raise ValueError(f"cell {c}: mean/variance length does not match theta")
            if min(self.variances[c]) <= 0:
                raise ValueError(f"cell {c}: variances must be positive")
        if not 0 < self.tau < 1:
            raise ValueError("tau must lie in (0, 1)")

    @property
    def w(self) -> float:
        return -math.log(1.0 / self.tau - 1.0)

    def classifier(self) -> LinearClassifier:
        return LinearClassifier.from_link(self.theta, self.tau, "logistic")

    def _proj(self, cell):
        """Mean and variance of ``theta^T X`` within ``cell``."""
        th = np.asarray(self.theta, float)
        return float(th @ np.asarray(self.means[cell], float)), float(th**2 @ np.asarray(self.variances[cell], float))


DEFAULT_DESIGN = GaussianMixtureDesign()
SCENARIOS = {"appendix-gaussian": DEFAULT_DESIGN}


def sample_design(design: GaussianMixtureDesign, n: int, seed) -> AuditDataset:
    """Draw ``n`` i.i.d. samples; identical seeds give identical datasets."""
    if n < 1:
        raise EmptyDatasetError("sample size must be at least 1")
    rng = np.random.default_rng(seed)
    p = np.array([design.probs[c] for c in CELLS])
    cell = rng.choice(len(CELLS), size=n, p=p)
    mean = np.array([design.means[c] for c in CELLS], float)[cell]
    sd = np.sqrt(np.array([design.variances[c] for c in CELLS], float))[cell]
    X = mean + sd * rng.standard_normal(mean.shape)
    ay = np.array(CELLS)[cell]
    return AuditDataset(X, ay[:, :1], ay[:, 1], code_sets=((0, 1),))


def analytic_density_phi(design: GaussianMixtureDesign, z) -> np.ndarray | float:
    """Density of the signed boundary distance ``Phi(X) = (2C - 1) d(X)`` (Euclidean cost)."""
    z = np.asarray(z, float)
    tnorm = float(np.linalg.norm(design.theta))
    out = np.zeros_like(z)
    for c in CELLS:
        m, v = design._proj(c)
        s = math.sqrt(v)
        out = out + tnorm * design.probs[c] / s * stats.norm.pdf((z * tnorm + design.w - m) / s)
    return float(out) if out.ndim == 0 else out


def analytic_boundary_cells(design: GaussianMixtureDesign) -> dict:
    """``P((A, Y) = cell | d(X) = 0)`` by Bayes' rule."""
    f0 = analytic_density_phi(design, 0.0)
    if not f0 > 0:
        raise ValueError("density at the boundary is zero")
    tnorm = float(np.linalg.norm(design.theta))
    out = {}
    for c in CELLS:
        m, v = design._proj(c)
        s = math.sqrt(v)
        out[c] = tnorm * design.probs[c] / s * stats.norm.pdf((design.w - m) / s) / f0
    return out


def cell_positive_rates(design: GaussianMixtureDesign) -> dict:
    """``P(C(X) = 1 | cell)``, exact for a linear classifier under Gaussian cells."""
    out = {}
    for c in CELLS:
        m, v = design._proj(c)
        out[c] = float(stats.norm.sf((design.w - m) / math.sqrt(v)))
    return out


def cell_positive_rates_quadrature(design: GaussianMixtureDesign, nodes: int = 64) -> dict:
    """``P(C(X) = 1 | cell)`` by tensor Gauss-Hermite quadrature of the classifier labels.

    Works for any classifier exposing ``labels``; the integrand is a step
    function, so accuracy is limited to roughly the node spacing.
    """
    t, wt = np.polynomial.hermite_e.hermegauss(nodes)
    wt = wt / wt.sum()
    grid = np.stack(np.meshgrid(t, t, indexing="ij"), -1).reshape(-1, 2)
    weights = np.outer(wt, wt).ravel()
    clf = design.classifier()
    out = {}
    for c in CELLS:
        X = np.asarray(design.means[c], float) + np.sqrt(np.asarray(design.variances[c], float)) * grid
        out[c] = float(weights @ clf.labels(X))
    return out


def exact_law(
    design: GaussianMixtureDesign, crit: FairnessCriterion | None = None, method: str = "closed-form"
) -> asy.LimitLawEstimate:
    """Population ``S``, ``Sigma`` and ``f(0)`` of the design (no estimation noise).

    ``(U, C)`` takes finitely many values, so the covariance of the influence
    function is an exact finite sum over cells and labels once the per-cell
    positive rates are known.  ``method`` selects how those rates are
    obtained: the Gaussian tail formula or Gauss-Hermite quadrature.
    """
    crit = crit or equal_opportunity()
    cells = list(CELLS)
    A = np.array([[a] for a, _ in cells])
    Y = np.array([y for _, y in cells])
    U = crit.u_matrix(A, Y)
    p = np.array([design.probs[c] for c in cells])
    if method == "closed-form":
        rates = cell_positive_rates(design)
    elif method == "gauss-hermite":
        rates = cell_positive_rates_quadrature(design)
    else:
        raise ValueError(f"unknown method {method!r}")
    q = np.array([rates[c] for c in cells])
    mu = p @ U
    phi = crit.phi(U, mu)
    jac = np.einsum("c,cjk->jk", p * q, crit.phi_z(U, mu))
    # atoms (cell, C=1) and (cell, C=0)
    w1 = phi + U @ jac.T
    w0 = U @ jac.T
    W = np.vstack([w1, w0])
    pw = np.concatenate([p * q, p * (1 - q)])
    mean = pw @ W
    Sigma = (W - mean).T @ (pw[:, None] * (W - mean))
    bc = analytic_boundary_cells(design)
    pb = np.array([bc[c] for c in cells])
    Sigma1 = phi.T @ (pb[:, None] * phi)
    f0 = analytic_density_phi(design, 0.0)
    return asy.LimitLawEstimate(f0 * Sigma1, Sigma, f0, Sigma1, math.nan, mu, jac, pb @ U)


def limit_law_sample(design: GaussianMixtureDesign, n: int, seed, crit: FairnessCriterion | None = None) -> np.ndarray:
    return asy.draw_law(exact_law(design, crit), asy.SIMPLE, n, seed).values


def _rep_seeds(seed: int, rep: int, attempt: int):
    data_seq, mc_seq = np.random.SeedSequence(seed, spawn_key=(rep, attempt)).spawn(2)
    return data_seq, int(mc_seq.generate_state(1)[0])


def _valid_sample(design, n, seed, rep, crit):
    """First attempt whose sample contains every group the criterion divides by."""
    for attempt in range(MAX_ATTEMPTS):
        data_seq, mc_seed = _rep_seeds(seed, rep, attempt)
        ds = sample_design(design, n, data_seq)
        mu = crit.u_matrix(ds.A, ds.Y).mean(axis=0)
        if all(mu[i] > 0 for i in crit.denominators):
            return ds, mc_seed, attempt
    raise DegenerateGroupError(f"no valid sample of size {n} after {MAX_ATTEMPTS} attempts")


def _one_replication(args):
    design, n, seed, rep, alphas, crit, epsilon, draws, bandwidth = args
    crit = crit or equal_opportunity()
    ds, mc_seed, attempt = _valid_sample(design, n, seed, rep, crit)
    clf = design.classifier()
    try:
        rep_out = run_test(ds, clf, crit, alphas, epsilon, draws=draws, seed=mc_seed,
                           bandwidth=None if bandwidth is None else bandwidth * n ** (-0.2),
                           cross_check=False, with_witness=False)
    except (DegenerateBoundaryError, DegenerateLawError):
        return rep, attempt, math.nan, None
    return rep, attempt, rep_out.statistic, tuple(d == "reject" for d in rep_out.decisions)


def _map(fn, jobs, workers):
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    return [fn(j) for j in jobs]


def _workers(workers):
    if workers is not None:
        return max(1, int(workers))
    cap = os.environ.get("FAIRTEST_THREADS")
    return max(1, int(cap)) if cap and cap.isdigit() else 1


@dataclass
class RejectionStudy:
    n: int
    reps: int
    seed: int
    alphas: tuple[float, ...]
    rejections: np.ndarray  # (reps, n_alpha) bool; failed law estimates count as non-rejections
    statistics: np.ndarray
    redraws: int
    failed: int

    @property
    def frequencies(self) -> np.ndarray:
        return self.rejections.mean(axis=0)

    def rows(self) -> list[dict]:
        return [
            {"N": self.n, "alpha": a, "frequency": float(f), "reps": self.reps, "seed": self.seed,
             "redraws": self.redraws, "failed": self.failed}
            for a, f in zip(self.alphas, self.frequencies)
        ]


def replicate_null_rejection(
    design: GaussianMixtureDesign,
    n: int,
    reps: int,
    alphas: Sequence[float] = (0.1, 0.05, 0.01),
    seed: int = 0,
    *,
    criterion: FairnessCriterion | None = None,
    epsilon=None,
    draws: int = asy.DEFAULT_DRAWS,
    bandwidth: float | None = None,
    workers: int | None = None,
) -> RejectionStudy:
    """Rejection frequency of the test over ``reps`` independent samples.

    Samples lacking a group that the criterion divides by are redrawn with
    the next counter-derived seed; ``redraws`` counts them.  ``bandwidth``,
    when given, is the constant ``c`` in ``h = c N^(-1/5)``.
    """
    if reps < 1:
        raise ValueError("reps must be at least 1")
    alphas = tuple(float(a) for a in alphas)
    jobs = [(design, n, seed, r, alphas, criterion, epsilon, draws, bandwidth) for r in range(reps)]
    results = sorted(_map(_one_replication, jobs, _workers(workers)), key=lambda r: r[0])
    rej = np.zeros((reps, len(alphas)), dtype=bool)
    stat = np.empty(reps)
    failed = 0
    for rep, _, s, dec in results:
        stat[rep] = s
        if dec is None:
            failed += 1
        else:
            rej[rep] = dec
    redraws = sum(r[1] for r in results)
    return RejectionStudy(n, reps, seed, alphas, rej, stat, redraws, failed)


def _one_statistic(args):
    design, n, seed, rep, crit = args
    crit = crit or equal_opportunity()
    ds, _, _ = _valid_sample(design, n, seed, rep, crit)
    from .data import enrich

    enr = enrich(ds, design.classifier(), crit)
    return rep, project(ProjectionProblem.from_enriched(enr)).statistic


def statistic_histogram(
    design: GaussianMixtureDesign,
    n: int,
    reps: int,
    seed: int = 0,
    *,
    criterion: FairnessCriterion | None = None,
    reference_draws: int | None = None,
    workers: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Replicated statistics ``N * P`` and a sample of the exact limit law.

    The reference sample (``reference_draws``, default 100000) uses the
    population ``f(0)``, boundary-conditional cell probabilities and
    ``Sigma`` of the design.
    """
    if reps < 1:
        raise ValueError("reps must be at least 1")
    jobs = [(design, n, seed, r, criterion) for r in range(reps)]
    res = sorted(_map(_one_statistic, jobs, _workers(workers)), key=lambda r: r[0])
    empirical = np.array([s for _, s in res])
    ref_seed = int(np.random.SeedSequence(seed, spawn_key=(2**31,)).generate_state(1)[0])
    reference = limit_law_sample(design, reference_draws or asy.DEFAULT_DRAWS, ref_seed, criterion)
    return empirical, reference


def ks_critical_value(n1: int, n2: int, alpha: float = 0.01) -> float:
    """Asymptotic two-sample Kolmogorov-Smirnov critical value."""
    c = math.sqrt(-0.5 * math.log(alpha / 2))
    return c * math.sqrt((n1 + n2) / (n1 * n2))


def format_table(rows: list[dict], delimiter: str = ",") -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), delimiter=delimiter, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()
