import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairtest.criteria import (
    REGISTRY,
    code_space,
    equal_opportunity,
    equal_opportunity_multiattr,
    equal_opportunity_multiclass,
    equalized_odds,
    from_config,
    get_criterion,
    predictive_equality,
    statistical_parity,
)
from fairtest.errors import DegenerateGroupError


def builtins():
    return [
        equal_opportunity(),
        predictive_equality(),
        equalized_odds(),
        statistical_parity(),
        equal_opportunity_multiclass(3),
        equal_opportunity_multiattr(2),
    ]


def cells_of(crit):
    n_codes = 4 if crit.name == "equal-opportunity-multiclass" else 2
    return list(code_space(crit, n_codes))


def finite_difference(crit, u, z, h=1e-6):
    out = np.zeros((crit.m, crit.s))
    for k in range(crit.s):
        e = np.zeros(crit.s)
        e[k] = h
        out[:, k] = (crit.phi(u, z + e) - crit.phi(u, z - e)) / (2 * h)
    return out


def test_equal_opportunity_values():
    eo = equal_opportunity()
    np.testing.assert_array_equal(eo.u_of((1,), 1), [1, 0])
    assert eo.phi(eo.u_of((1,), 1), np.array([0.4, 0.1]))[0] == pytest.approx(2.5)
    assert eo.phi(eo.u_of((0,), 0), np.array([0.3, 0.7]))[0] == 0
    np.testing.assert_allclose(eo.phi_z(np.array([1.0, 0.0]), np.array([0.5, 0.5])), [[-4.0, 0.0]])


def test_predictive_equality_indicators():
    pe = predictive_equality()
    np.testing.assert_array_equal(pe.u_of((1,), 0), [1, 0])
    np.testing.assert_array_equal(pe.u_of((1,), 1), [0, 0])


def test_equalized_odds_values():
    eq = equalized_odds()
    np.testing.assert_array_equal(eq.u_of((0,), 1), [0, 1, 0, 0])
    np.testing.assert_allclose(eq.phi(np.array([0, 0, 1.0, 0]), np.array([0.4, 0.1, 0.4, 0.1])), [0, 2.5])
    for a, y in itertools.product((0, 1), repeat=2):
        assert eq.u_of((a,), y).sum() == 1


def test_equalized_odds_jacobian_block_diagonal():
    eq = equalized_odds()
    J = eq.phi_z(np.array([1.0, 0, 0, 1.0]), np.array([0.4, 0.1, 0.4, 0.1]))
    assert J[0, 2] == J[0, 3] == J[1, 0] == J[1, 1] == 0


def test_statistical_parity_partition():
    sp = statistical_parity()
    for y in (0, 1):
        np.testing.assert_array_equal(sp.u_of((1,), y), [1, 0])
        np.testing.assert_array_equal(sp.u_of((0,), y), [0, 1])


def test_multiclass():
    with pytest.raises(ValueError):
        equal_opportunity_multiclass(1)
    k2 = equal_opportunity_multiclass(2)
    assert k2.s == 3 and k2.m == 2 and k2.contrasts == ((1, 0), (2, 0))
    k3 = equal_opportunity_multiclass(3)
    assert k3.u_of((2,), 1).sum() == 1 and k3.u_of((2,), 1)[2] == 1
    # group t rate minus reference group rate
    z = np.array([0.2, 0.25, 0.5, 0.05])
    np.testing.assert_allclose(k3.phi(k3.u_of((0,), 1), z), [-5.0, -5.0, -5.0])
    np.testing.assert_allclose(k3.phi(k3.u_of((1,), 1), z), [4.0, 0.0, 0.0])


def test_multiattr():
    k1 = equal_opportunity_multiattr(1)
    eo = equal_opportunity()
    for a, y in itertools.product((0, 1), repeat=2):
        np.testing.assert_array_equal(k1.u_of((a,), y), eo.u_of((a,), y))
    k2 = equal_opportunity_multiattr(2)
    np.testing.assert_array_equal(k2.u_of((1, 0), 1), [1, 0, 0, 1])
    with pytest.raises(ValueError):
        equal_opportunity_multiattr(0)


@pytest.mark.parametrize("crit", builtins(), ids=lambda c: c.name)
def test_u_entries_binary(crit):
    for a, y in cells_of(crit):
        assert set(np.unique(crit.u_of(a, y))) <= {0.0, 1.0}


@pytest.mark.parametrize("crit", [equal_opportunity(), predictive_equality(), statistical_parity()], ids=lambda c: c.name)
def test_product_zero(crit):
    for a, y in cells_of(crit):
        u = crit.u_of(a, y)
        assert u[0] * u[1] == 0


def test_denominator_guard():
    with pytest.raises(DegenerateGroupError):
        equal_opportunity().phi(np.array([1.0, 0.0]), np.array([0.5, 0.0]))


def test_registry_names():
    assert set(REGISTRY) == {
        "equal-opportunity", "predictive-equality", "equalized-odds", "statistical-parity",
        "equal-opportunity-multiclass", "equal-opportunity-multiattr",
    }
    assert get_criterion("equalized-odds").m == 2
    with pytest.raises(ValueError):
        get_criterion("individual")


def test_user_defined_matches_builtin():
    cfg = {"name": "eo", "s": 2, "contrasts": [[0, 1]],
           "u_table": [{"a": [1], "y": 1, "u": [1, 0]}, {"a": [0], "y": 1, "u": [0, 1]}]}
    custom = from_config(cfg)
    eo = equal_opportunity()
    A = np.array([[1], [0], [1], [0]])
    Y = np.array([1, 1, 0, 0])
    np.testing.assert_array_equal(custom.u_matrix(A, Y), eo.u_matrix(A, Y))


@st.composite
def cell_distribution(draw, n_cells):
    w = draw(st.lists(st.floats(0.05, 1.0), min_size=n_cells, max_size=n_cells))
    return np.array(w) / sum(w)


@pytest.mark.parametrize("crit", builtins(), ids=lambda c: c.name)
@settings(max_examples=40, deadline=None)
@given(data=st.data())
def test_phi_centered_at_true_mean(crit, data):
    cells = cells_of(crit)
    probs = data.draw(cell_distribution(len(cells)))
    U = np.array([crit.u_of(a, y) for a, y in cells])
    mu = probs @ U
    np.testing.assert_allclose(probs @ crit.phi(U, mu), 0.0, atol=1e-12)


@pytest.mark.parametrize("crit", builtins(), ids=lambda c: c.name)
@settings(max_examples=50, deadline=None)
@given(data=st.data())
def test_jacobian_matches_finite_difference(crit, data):
    u = np.array(data.draw(st.lists(st.sampled_from([0.0, 1.0]), min_size=crit.s, max_size=crit.s)))
    z = np.array(data.draw(st.lists(st.floats(0.05, 1.0), min_size=crit.s, max_size=crit.s)))
    J = crit.phi_z(u, z)
    fd = finite_difference(crit, u, z)
    assert np.abs(J - fd).max() <= 1e-6 * (1 + np.abs(J).max())
