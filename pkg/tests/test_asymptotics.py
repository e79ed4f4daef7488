import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize, stats

from fairtest import asymptotics as asy
from fairtest.boundary import PrecomputedClassifier
from fairtest.criteria import equal_opportunity, equalized_odds
from fairtest.data import AuditDataset, enrich
from fairtest.errors import DegenerateBoundaryError, DegenerateLawError, UnsupportedDimensionError
from fairtest.simlab import DEFAULT_DESIGN, analytic_density_phi, sample_design

Q95 = stats.chi2.ppf(0.95, 1)


def make_law(S, Sigma):
    S = np.atleast_2d(np.asarray(S, float))
    Sigma = np.atleast_2d(np.asarray(Sigma, float))
    m = S.shape[0]
    return asy.LimitLawEstimate(S, Sigma, 1.0, S, 1.0, np.ones(2 * m), np.zeros((m, 2 * m)), np.ones(2 * m))


def mixture_sample(n, seed, crit=None):
    ds = sample_design(DEFAULT_DESIGN, n, seed)
    return enrich(ds, DEFAULT_DESIGN.classifier(), crit or equal_opportunity())


def precomputed(A, Y, C, D, X=None):
    n = len(Y)
    ds = AuditDataset(np.zeros((n, 1)) if X is None else X, np.asarray(A)[:, None], Y, C=C, D=D)
    return enrich(ds, PrecomputedClassifier(), equal_opportunity())


def test_kernel_collapses_on_boundary():
    rng = np.random.default_rng(0)
    n = 40
    A, Y, C = rng.integers(0, 2, n), rng.integers(0, 2, n), rng.integers(0, 2, n)
    Y[:4] = 1
    A[:2] = 1
    A[2:4] = 0
    enr = precomputed(A, Y, C, np.zeros(n))
    f0, Sigma1, S, h = asy.estimate_S(enr, 0.3)
    assert f0 == pytest.approx(asy.gaussian_kernel(0.0) / 0.3)
    np.testing.assert_allclose(Sigma1, enr.phi.T @ enr.phi / n)
    np.testing.assert_allclose(S, f0 * Sigma1, atol=1e-12)


def test_f0_close_to_analytic_density():
    enr = mixture_sample(2000, 3)
    f0, _, _, _ = asy.estimate_S(enr)
    assert abs(f0 / analytic_density_phi(DEFAULT_DESIGN, 0.0) - 1) < 0.15


def test_f0_continuous_in_bandwidth():
    enr = mixture_sample(500, 1)
    hs = np.linspace(0.2, 1.2, 41)
    f = np.array([asy.estimate_S(enr, h)[0] for h in hs])
    assert np.abs(np.diff(f)).max() < 0.02
    assert asy.estimate_S(enr, 1.0)[0] == pytest.approx(asy.estimate_S(enr, 1.0 + 1e-9)[0], rel=1e-6)


def test_no_boundary_mass():
    rng = np.random.default_rng(1)
    n = 20
    A = np.array([1, 0] * 10)
    enr = precomputed(A, np.ones(n, int), rng.integers(0, 2, n), np.full(n, 1e6))
    with pytest.raises(DegenerateBoundaryError):
        asy.estimate_S(enr, 1.0)


def test_s_is_f0_times_sigma1():
    law = asy.estimate_law(mixture_sample(800, 2, equalized_odds()))
    np.testing.assert_allclose(law.S, law.f0 * law.Sigma1, atol=1e-12)
    assert law.Sigma_eigs().min() >= 0


def test_sigma_zero_without_positives():
    rng = np.random.default_rng(2)
    n = 30
    A = np.array([1, 0] * 15)
    enr = precomputed(A, np.ones(n, int), np.zeros(n, int), rng.uniform(0, 1, n))
    np.testing.assert_allclose(asy.estimate_Sigma(enr), 0.0, atol=1e-15)


def test_sigma_matches_scalar_expansion_under_balanced_rates():
    # group (1,1): 4 rows, half positive; group (0,1): 6 rows, half positive
    A = np.array([1] * 4 + [0] * 6 + [1] * 5 + [0] * 5)
    Y = np.array([1] * 10 + [0] * 10)
    C = np.array([1, 1, 0, 0] + [1, 1, 1, 0, 0, 0] + [1, 0, 1, 0, 1] + [0, 1, 1, 0, 0])
    enr = precomputed(A, Y, C, np.linspace(0.1, 1, 20))
    u1, u2 = enr.u[:, 0], enr.u[:, 1]
    m1, m2 = enr.mu
    c = C.astype(float)
    sigma2 = np.var(c * (m2 * u1 - m1 * u2) + u2 * np.mean(u1 * c) - u1 * np.mean(u2 * c), ddof=1)
    assert asy.estimate_Sigma(enr)[0, 0] * (m1 * m2) ** 2 == pytest.approx(sigma2, rel=1e-12)


def test_sigma_permutation_invariant():
    ds = sample_design(DEFAULT_DESIGN, 300, 9)
    perm = np.random.default_rng(0).permutation(300)
    clf = DEFAULT_DESIGN.classifier()
    a = asy.estimate_law(enrich(ds, clf, equalized_odds()))
    b = asy.estimate_law(enrich(ds.take(perm), clf, equalized_odds()))
    np.testing.assert_allclose(a.Sigma, b.Sigma, rtol=1e-10, atol=1e-14)
    np.testing.assert_allclose(a.S, b.S, rtol=1e-10, atol=1e-14)


def test_clipping_is_tiny():
    M = np.array([[1.0, 1.0], [1.0, 1.0]]) - 1e-13 * np.eye(2)
    out = asy._clip_psd(M, "test")
    assert np.abs(np.linalg.eigvalsh(out) - np.clip(np.linalg.eigvalsh(M), 0, None)).max() <= 1e-10


def test_simple_quantile_scaled_chi2():
    law = make_law([[0.8]], [[2.0]])
    eta, _ = asy.quantile_simple(law, 0.05, 100_000, seed=3)
    assert eta == pytest.approx(2.0 / (2 * 0.8) * Q95, rel=0.02)


def test_sigma_zero_gives_zero_threshold():
    law = make_law([[1.0, 0.0], [0.0, 2.0]], np.zeros((2, 2)))
    for a in (0.1, 0.05, 0.01):
        assert asy.quantile_simple(law, a, 2000)[0] == 0
        assert asy.quantile_composite(law, a, 2000) == 0


def test_equalized_odds_block_diagonal_against_two_term_sum():
    S = np.diag([0.5, 1.5])
    Sig = np.diag([1.0, 3.0])
    eta, _ = asy.quantile_simple(make_law(S, Sig), 0.05, 100_000, seed=1)
    a = np.diag(Sig) / (2 * np.diag(S))
    ref = stats.chi2.rvs(1, size=(400_000, 2), random_state=np.random.default_rng(9)) @ a
    assert eta == pytest.approx(np.quantile(ref, 0.95), rel=0.02)


def test_closed_form_quantile_on_mixture_data():
    enr = mixture_sample(2000, 5)
    law = asy.estimate_law(enr)
    generic, _ = asy.quantile_simple(law, 0.05, 200_000, seed=5)
    closed = asy.quantile_closed_form(enr, law, equal_opportunity(), 0.05)
    assert abs(closed / generic - 1) < 0.025


def test_closed_form_equalized_odds_cross_check():
    crit = equalized_odds()
    enr = mixture_sample(2000, 6, crit)
    law = asy.estimate_law(enr)
    generic, _ = asy.quantile_simple(law, 0.05, 200_000, seed=6)
    closed = asy.quantile_closed_form(enr, law, crit, 0.05, 200_000, seed=7)
    assert abs(closed / generic - 1) < 0.05


def test_closed_form_zero_variance():
    rng = np.random.default_rng(4)
    n = 30
    A = np.array([1, 0] * 15)
    enr = precomputed(A, np.ones(n, int), np.zeros(n, int), rng.uniform(0, 1, n))
    law = asy.estimate_law(enr, 0.5)
    assert asy.quantile_closed_form(enr, law, equal_opportunity(), 0.05) == 0


def test_composite_one_dim_half_mass_at_zero():
    law = make_law([[1.0]], [[1.0]])
    eta = asy.quantile_composite(law, 0.05, 100_000, seed=2)
    assert eta == pytest.approx(0.5 * stats.chi2.ppf(0.90, 1), rel=0.02)


def test_composite_separable_when_diagonal():
    rng = np.random.default_rng(0)
    V = rng.normal(size=(500, 2))
    s = np.array([0.7, 2.0])
    got = asy.composite_law_values(V, np.diag(s))
    np.testing.assert_allclose(got, (np.maximum(V, 0) ** 2 / (2 * s)).sum(axis=1), atol=1e-12)


def test_composite_matches_qp_solver():
    rng = np.random.default_rng(1)
    B = rng.normal(size=(3, 3))
    S = B @ B.T + 0.3 * np.eye(3)
    V = rng.normal(size=(40, 3)) * 2
    got = asy.composite_law_values(V, S)
    for v, g in zip(V, got):
        res = optimize.minimize(lambda x: -(x @ v - 0.5 * x @ S @ x), np.zeros(3), bounds=[(0, None)] * 3,
                                jac=lambda x: -(v - S @ x), method="L-BFGS-B", options={"gtol": 1e-12})
        assert g == pytest.approx(-res.fun, abs=1e-7)


def test_composite_dimension_cap():
    with pytest.raises(UnsupportedDimensionError):
        asy.composite_law_values(np.zeros((2, 13)), np.eye(13))


def test_singular_s():
    with pytest.raises(DegenerateLawError):
        asy.quantile_simple(make_law([[0.0]], [[1.0]]), 0.05, 1000)
    with pytest.warns(RuntimeWarning):
        asy.quantile_simple(make_law(np.diag([1.0, 0.0]), np.eye(2)), 0.05, 1000)


def test_p_value_edges():
    law = make_law([[1.0]], [[1.0]])
    assert asy.p_value(0.0, law) == 1.0
    assert asy.p_value(math.inf, law) == 0.0
    mc = asy.draw_law(law, asy.SIMPLE, 100_000, seed=0)
    assert mc.p_value(mc.quantile(0.05)) == pytest.approx(0.05, abs=0.003)


@settings(max_examples=60, deadline=None)
@given(stat=st.floats(0, 10), alpha=st.floats(0.001, 0.5), seed=st.integers(0, 1000))
def test_reject_iff_p_at_most_alpha(stat, alpha, seed):
    mc = asy.draw_law(make_law([[1.3]], [[0.7]]), asy.SIMPLE, 2000, seed)
    assert (stat > mc.quantile(alpha)) == (mc.p_value(stat) <= alpha)


def test_deterministic_and_thread_independent(monkeypatch):
    law = make_law([[1.0, 0.2], [0.2, 0.5]], [[1.0, 0.3], [0.3, 2.0]])
    monkeypatch.setenv("FAIRTEST_THREADS", "1")
    a = asy.draw_law(law, asy.COMPOSITE, 60_000, seed=11).values
    monkeypatch.setenv("FAIRTEST_THREADS", "4")
    b = asy.draw_law(law, asy.COMPOSITE, 60_000, seed=11).values
    np.testing.assert_array_equal(a, b)


def test_mc_convergence_when_doubling_draws():
    law = make_law([[0.9]], [[1.4]])
    small = asy.draw_law(law, asy.SIMPLE, 100_000, seed=1)
    big = asy.draw_law(law, asy.SIMPLE, 200_000, seed=2)
    se = small.standard_error(0.05)
    assert se > 0
    assert abs(small.quantile(0.05) - big.quantile(0.05)) < 3 * se * math.sqrt(2)


def test_default_bandwidth_rule():
    phi = np.array([-2.0, -1.0, 0.5, 1.0, 3.0])
    assert asy.default_bandwidth(phi) == pytest.approx(np.std(phi, ddof=1) * 5 ** -0.2)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert asy.default_bandwidth(np.zeros(4)) == pytest.approx(4 ** -0.2)
