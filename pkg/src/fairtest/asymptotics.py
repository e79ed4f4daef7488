"""Estimation of the null limit law of the scaled projection ``N * P``.

Under the simple null the statistic converges to ``1/2 V^T S^-1 V`` with
``V ~ N(0, Sigma)`` and ``S = f(0) Sigma_1``; under the one-sided composite
null it is stochastically bounded by ``max_{g >= 0} g^T V - 1/2 g^T S g``.
``f(0)`` is the density of the signed boundary distance at zero and
``Sigma_1`` the boundary-conditional second moment of ``phi``; both are
kernel estimates.  Quantiles and p-values come from Monte Carlo draws that
are generated in fixed-size seeded chunks, so results do not depend on how
many workers produce them.
"""

from __future__ import annotations

import itertools
import logging
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import DegenerateBoundaryError, DegenerateLawError, UnsupportedDimensionError

logger = logging.getLogger(__name__)

DEFAULT_DRAWS = 100_000
CHUNK = 25_000
EIG_TOL = 1e-10
MAX_COMPOSITE_DIM = 12

SIMPLE = "simple"
COMPOSITE = "composite"


def gaussian_kernel(t: np.ndarray) -> np.ndarray:
    return np.exp(-0.5 * np.square(t)) / math.sqrt(2 * math.pi)


def default_bandwidth(signed_dist: np.ndarray) -> float:
    """``std(Phi) * N^(-1/5)`` over the finite signed distances."""
    fin = signed_dist[np.isfinite(signed_dist)]
    n = signed_dist.size
    scale = float(np.std(fin, ddof=1)) if fin.size > 1 else 0.0
    if not scale > 0:
        scale = 1.0
    return scale * n ** (-0.2)


@dataclass(frozen=True, eq=False)
class LimitLawEstimate:
    """Plug-in estimates defining the limit law.

    ``boundary_u_mean`` holds the kernel-weighted boundary-conditional means
    ``E[U | d(X) = 0]``.
    """

    S: np.ndarray
    Sigma: np.ndarray
    f0: float
    Sigma1: np.ndarray
    bandwidth: float
    mu: np.ndarray
    phi_z_mean: np.ndarray
    boundary_u_mean: np.ndarray

    @property
    def m(self) -> int:
        return self.S.shape[0]

    def S_eigs(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.S)

    def Sigma_eigs(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.Sigma)


def kernel_weights(enr, h: float) -> np.ndarray:
    return gaussian_kernel(enr.signed_distance() / h)


def estimate_S(enr, h: float | None = None):
    """Kernel estimates ``(f0_hat, Sigma1_hat, S_hat, h)``.

    ``f0_hat = (N h)^-1 sum K(Phi_i / h)`` and ``Sigma1_hat`` is the
    Nadaraya-Watson average of ``phi_i phi_i^T`` with the same weights.
    """
    n = enr.n
    if n < 2:
        raise DegenerateBoundaryError("at least two samples are needed to estimate the limit law")
    if h is None:
        h = default_bandwidth(enr.signed_distance())
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    k = kernel_weights(enr, h)
    if not (k >= 1e-300).any():
        raise DegenerateBoundaryError("no kernel mass near the decision boundary; S is undefined")
    f0 = float(k.sum()) / (n * h)
    outer = enr.phi.T @ (k[:, None] * enr.phi)
    Sigma1 = outer / k.sum()
    S = outer / (n * h)
    return f0, Sigma1, S, h


def _clip_psd(M: np.ndarray, what: str) -> np.ndarray:
    M = 0.5 * (M + M.T)
    vals, vecs = np.linalg.eigh(M)
    if vals.min() < -EIG_TOL * max(1.0, abs(vals).max()):
        warnings.warn(f"{what} has eigenvalue {vals.min():.3g} < 0; clipping", RuntimeWarning, stacklevel=3)
    if (vals < 0).any():
        vals = np.maximum(vals, 0.0)
        M = (vecs * vals) @ vecs.T
    return M


def influence_rows(enr) -> np.ndarray:
    """Per-row ``phi_i C_i + E_N[phi_z(U, mu) C] u_i``, shape (N, m)."""
    jac_mean = np.einsum("i,ijk->jk", enr.c.astype(float), enr.phi_z) / enr.n
    return enr.phi * enr.c[:, None] + enr.u @ jac_mean.T


def estimate_Sigma(enr) -> np.ndarray:
    """Sample covariance of the influence rows, clipped to PSD."""
    w = influence_rows(enr)
    if enr.n < 2:
        raise DegenerateBoundaryError("at least two samples are needed to estimate Sigma")
    cov = np.atleast_2d(np.cov(w, rowvar=False, ddof=1))
    return _clip_psd(cov, "Sigma_hat")


def estimate_law(enr, h: float | None = None) -> LimitLawEstimate:
    f0, Sigma1, S, h = estimate_S(enr, h)
    Sigma = estimate_Sigma(enr)
    k = kernel_weights(enr, h)
    bu = (k @ enr.u) / k.sum()
    jac_mean = np.einsum("i,ijk->jk", enr.c.astype(float), enr.phi_z) / enr.n
    return LimitLawEstimate(0.5 * (S + S.T), Sigma, f0, Sigma1, h, enr.mu.copy(), jac_mean, bu)


# ---------------------------------------------------------------------------
# Monte Carlo engine


def _workers() -> int:
    cap = os.environ.get("FAIRTEST_THREADS")
    try:
        return max(1, int(cap)) if cap else 1
    except ValueError:
        return 1


def _chunked(seed, draws: int, fn) -> np.ndarray:
    """Evaluate ``fn(rng, size)`` on seeded chunks and concatenate in order."""
    sizes = [CHUNK] * (draws // CHUNK) + ([draws % CHUNK] if draws % CHUNK else [])
    seqs = np.random.SeedSequence(seed).spawn(len(sizes))
    jobs = list(zip(seqs, sizes))

    def run(job):
        seq, size = job
        return fn(np.random.default_rng(seq), size)

    workers = min(_workers(), len(jobs))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(run, jobs))
    else:
        parts = [run(j) for j in jobs]
    return np.concatenate(parts) if parts else np.empty(0)


def gaussian_draws(Sigma: np.ndarray, draws: int, seed) -> np.ndarray:
    """``draws`` rows of ``N(0, Sigma)`` via the symmetric square root."""
    vals, vecs = np.linalg.eigh(0.5 * (Sigma + Sigma.T))
    root = vecs * np.sqrt(np.maximum(vals, 0.0))
    m = Sigma.shape[0]
    return _chunked(seed, draws, lambda rng, size: rng.standard_normal((size, m)) @ root.T).reshape(-1, m)


def _pinv_psd(S: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(0.5 * (S + S.T))
    top = float(vals.max()) if vals.size else 0.0
    if not top > EIG_TOL:
        raise DegenerateLawError("S_hat is singular; try a larger bandwidth or more data")
    keep = vals > EIG_TOL * max(1.0, top)
    if not keep.all():
        warnings.warn("S_hat is near-singular; using a pseudo-inverse", RuntimeWarning, stacklevel=3)
    inv = np.where(keep, 1.0 / np.where(keep, vals, 1.0), 0.0)
    return (vecs * inv) @ vecs.T


def simple_law_values(V: np.ndarray, S: np.ndarray) -> np.ndarray:
    """``1/2 V^T S^-1 V`` row by row."""
    Sinv = _pinv_psd(S)
    return 0.5 * np.einsum("ij,jk,ik->i", V, Sinv, V)


def composite_law_values(V: np.ndarray, S: np.ndarray) -> np.ndarray:
    """``max_{g >= 0} g^T V - 1/2 g^T S g`` row by row.

    The optimum is attained at the unconstrained optimum over its own
    support, so the maximum over all supports ``T`` with
    ``S_TT^-1 V_T >= 0`` of ``1/2 V_T^T S_TT^-1 V_T`` is exact.
    """
    m = S.shape[0]
    if m > MAX_COMPOSITE_DIM:
        raise UnsupportedDimensionError(f"composite law supports m <= {MAX_COMPOSITE_DIM}, got {m}")
    _pinv_psd(S)  # singularity check
    best = np.zeros(V.shape[0])
    for size in range(1, m + 1):
        for T in itertools.combinations(range(m), size):
            T = list(T)
            STT = S[np.ix_(T, T)]
            try:
                inv = np.linalg.inv(STT)
            except np.linalg.LinAlgError:
                inv = np.linalg.pinv(STT)
            g = V[:, T] @ inv.T
            ok = (g >= 0).all(axis=1)
            val = 0.5 * np.einsum("ij,ij->i", g, V[:, T])
            best = np.where(ok & (val > best), val, best)
    return best


class MonteCarloLaw:
    """Sorted Monte Carlo sample of a limit law with quantile and tail queries."""

    def __init__(self, values: np.ndarray, mode: str = SIMPLE, seed=None):
        self.values = np.sort(np.asarray(values, float))
        self.mode = mode
        self.seed = seed

    @property
    def draws(self) -> int:
        return self.values.size

    def quantile(self, alpha: float) -> float:
        """Nearest-rank ``(1 - alpha)`` quantile."""
        if not 0 < alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        n = self.values.size
        k = n - math.floor(alpha * n * (1 + 1e-12))
        return float(self.values[max(k, 1) - 1])

    def p_value(self, statistic: float) -> float:
        """Fraction of draws at or above ``statistic``."""
        if math.isnan(statistic):
            raise ValueError("statistic is NaN")
        n = self.values.size
        return float(n - np.searchsorted(self.values, statistic, side="left")) / n

    def standard_error(self, alpha: float) -> float:
        """Asymptotic MC standard error of the quantile via a local density estimate."""
        n = self.values.size
        q = self.quantile(alpha)
        k = n - math.floor(alpha * n)
        j = max(int(3 * math.sqrt(n)), 10)
        lo = self.values[max(k - 1 - j, 0)]
        hi = self.values[min(k - 1 + j, n - 1)]
        dens = (min(k - 1 + j, n - 1) - max(k - 1 - j, 0)) / n / max(hi - lo, 1e-300)
        if not dens > 0 or q == 0:
            return 0.0
        return math.sqrt(alpha * (1 - alpha) / n) / dens


def draw_law(law: LimitLawEstimate, mode: str = SIMPLE, draws: int = DEFAULT_DRAWS, seed=0) -> MonteCarloLaw:
    """Monte Carlo sample of the simple or composite limit law."""
    if draws < 1:
        raise ValueError("draws must be positive")
    if mode not in (SIMPLE, COMPOSITE):
        raise ValueError(f"unknown mode {mode!r}")
    if not np.any(law.Sigma != 0):
        _pinv_psd(law.S)
        return MonteCarloLaw(np.zeros(draws), mode, seed)
    V = gaussian_draws(law.Sigma, draws, seed)
    if mode == SIMPLE:
        vals = simple_law_values(V, law.S)
    elif law.m == 1:
        vals = 0.5 * np.square(np.maximum(V[:, 0], 0.0)) / float(law.S[0, 0])
        _pinv_psd(law.S)
    else:
        vals = composite_law_values(V, law.S)
    return MonteCarloLaw(vals, mode, seed)


def quantile_simple(law: LimitLawEstimate, alpha: float, draws: int = DEFAULT_DRAWS, seed=0):
    """``(eta, sampler)``: MC ``(1 - alpha)`` quantile of ``1/2 V^T S^-1 V``."""
    mc = draw_law(law, SIMPLE, draws, seed)
    return mc.quantile(alpha), mc


def quantile_composite(law: LimitLawEstimate, alpha: float, draws: int = DEFAULT_DRAWS, seed=0) -> float:
    """Conservative threshold from the stochastic upper bound of the composite null."""
    return draw_law(law, COMPOSITE, draws, seed).quantile(alpha)


def p_value(statistic: float, law: LimitLawEstimate, mode: str = SIMPLE, draws: int = DEFAULT_DRAWS, seed=0) -> float:
    if math.isinf(statistic):
        return 0.0
    return draw_law(law, mode, draws, seed).p_value(statistic)


# ---------------------------------------------------------------------------
# closed forms for single ratio contrasts


CLOSED_FORM_CRITERIA = ("equal-opportunity", "predictive-equality", "statistical-parity", "equalized-odds")


def contrast_scales(enr, law: LimitLawEstimate, crit) -> np.ndarray:
    """Scale ``a_k`` of each contrast so that the limit law is ``sum_k a_k chi2_k(1)``.

    For a contrast ``u_i/mu_i - u_j/mu_j`` with disjoint indicators,
    ``a = sigma^2 / (2 f0 (mu_j^2 E[U_i|d=0] + mu_i^2 E[U_j|d=0]))`` where
    ``sigma^2 = var{C (mu_j U_i - mu_i U_j) + U_j E[U_i C] - U_i E[U_j C]}``.
    """
    if crit.name not in CLOSED_FORM_CRITERIA:
        raise ValueError(f"closed form applies to {', '.join(CLOSED_FORM_CRITERIA)} only")
    c = enr.c.astype(float)
    scales = []
    for i, j in crit.contrasts:
        ui, uj = enr.u[:, i], enr.u[:, j]
        mi, mj = law.mu[i], law.mu[j]
        term = c * (mj * ui - mi * uj) + uj * np.mean(ui * c) - ui * np.mean(uj * c)
        sigma2 = float(np.var(term, ddof=1))
        denom = 2 * law.f0 * (mj**2 * law.boundary_u_mean[i] + mi**2 * law.boundary_u_mean[j])
        if not denom > 0:
            raise DegenerateLawError("boundary-conditional group mass is zero")
        scales.append(sigma2 / denom)
    return np.array(scales)


def quantile_closed_form(enr, law: LimitLawEstimate, crit, alpha: float, draws: int = DEFAULT_DRAWS, seed=0) -> float:
    """Quantile of the scaled chi-squared limit for single or paired contrasts.

    One contrast uses the exact chi-squared(1) quantile; two contrasts
    (equalized odds) sum two independent scaled chi-squared(1) draws.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    a = contrast_scales(enr, law, crit)
    if a.size == 1:
        return float(a[0] * stats.chi2.ppf(1 - alpha, 1))
    if not np.any(a > 0):
        return 0.0
    vals = _chunked(seed, draws, lambda rng, size: rng.chisquare(1, (size, a.size)) @ a)
    return MonteCarloLaw(vals).quantile(alpha)
