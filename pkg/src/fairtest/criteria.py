"""Group-fairness criteria as discerning tuples ``(U, phi)``.

Every built-in criterion belongs to the ratio-contrast family: ``U`` is a
vector of group indicators and each component of ``phi`` contrasts two of
them,

    phi_k(u, z) = u_i / z_i - u_j / z_j,

so that ``E[C(X) phi(U, E[U])] = 0`` states equality of the two groups'
positive-prediction rates.  The Jacobian in ``z`` is then available in
closed form.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import DegenerateGroupError, SchemaError

#: Denominator components below this value are treated as absent groups.
DENOMINATOR_FLOOR = 1e-12


@dataclass(frozen=True)
class FairnessCriterion:
    """A ratio-contrast discerning tuple.

    Parameters
    ----------
    name : str
        Registry name.
    s : int
        Dimension of ``U``.
    contrasts : tuple of (int, int)
        ``contrasts[k] = (i, j)`` defines ``phi_k = u_i/z_i - u_j/z_j``.
    indicator : callable
        Vectorised map ``(A, Y) -> U`` with ``A`` of shape (N, K) and ``Y``
        of shape (N,), returning an (N, s) array.
    n_attributes : int
        Number of sensitive attribute columns the criterion reads.
    """

    name: str
    s: int
    contrasts: tuple[tuple[int, int], ...]
    indicator: Callable[[np.ndarray, np.ndarray], np.ndarray]
    n_attributes: int = 1

    @property
    def m(self) -> int:
        return len(self.contrasts)

    @property
    def denominators(self) -> tuple[int, ...]:
        return tuple(sorted({i for pair in self.contrasts for i in pair}))

    def u_of(self, a, y: int) -> np.ndarray:
        a = np.atleast_1d(np.asarray(a, dtype=np.int64))
        return self.u_matrix(a[None, :], np.array([y]))[0]

    def u_matrix(self, A: np.ndarray, Y: np.ndarray) -> np.ndarray:
        A = np.asarray(A, dtype=np.int64)
        if A.ndim == 1:
            A = A[:, None]
        if A.shape[1] < self.n_attributes:
            raise SchemaError(f"criterion {self.name!r} needs {self.n_attributes} sensitive attribute(s)")
        return np.asarray(self.indicator(A, np.asarray(Y, dtype=np.int64)), dtype=float)

    def check_denominators(self, z: np.ndarray) -> None:
        z = np.asarray(z, dtype=float)
        bad = [i for i in self.denominators if not z[..., i].min() >= DENOMINATOR_FLOOR]
        if bad:
            raise DegenerateGroupError(f"criterion {self.name!r}: mean of U component(s) {bad} is zero")

    def phi(self, u: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Evaluate ``phi`` for one ``u`` (shape (s,)) or many (shape (N, s))."""
        u = np.asarray(u, dtype=float)
        z = np.asarray(z, dtype=float)
        self.check_denominators(z)
        i, j = (np.array(ix, dtype=int) for ix in zip(*self.contrasts))
        return u[..., i] / z[..., i] - u[..., j] / z[..., j]

    def phi_z(self, u: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Jacobian of ``phi`` in ``z``: shape (m, s), or (N, m, s) for stacked ``u``."""
        u = np.asarray(u, dtype=float)
        z = np.asarray(z, dtype=float)
        self.check_denominators(z)
        shape = np.broadcast_shapes(u.shape, z.shape)[:-1]
        jac = np.zeros(shape + (self.m, self.s))
        for k, (i, j) in enumerate(self.contrasts):
            jac[..., k, i] -= u[..., i] / z[..., i] ** 2
            jac[..., k, j] += u[..., j] / z[..., j] ** 2
        return jac


def _cell(A, Y, attr: int, a: int | None, y: int | None) -> np.ndarray:
    hit = np.ones(len(Y), dtype=bool)
    if a is not None:
        hit &= A[:, attr] == a
    if y is not None:
        hit &= Y == y
    return hit


def _indicators(cells: Sequence[tuple[int, int | None, int | None]]):
    def indicator(A, Y):
        return np.column_stack([_cell(A, Y, attr, a, y) for attr, a, y in cells]).astype(float)

    return indicator


def equal_opportunity() -> FairnessCriterion:
    """Equal true-positive rates: ``U = (I{A=1,Y=1}, I{A=0,Y=1})``."""
    return FairnessCriterion("equal-opportunity", 2, ((0, 1),), _indicators([(0, 1, 1), (0, 0, 1)]))


def predictive_equality() -> FairnessCriterion:
    """Equal false-positive rates: ``U = (I{A=1,Y=0}, I{A=0,Y=0})``."""
    return FairnessCriterion("predictive-equality", 2, ((0, 1),), _indicators([(0, 1, 0), (0, 0, 0)]))


def equalized_odds() -> FairnessCriterion:
    """Equal opportunity and predictive equality jointly (``m = 2``)."""
    cells = [(0, 1, 1), (0, 0, 1), (0, 1, 0), (0, 0, 0)]
    return FairnessCriterion("equalized-odds", 4, ((0, 1), (2, 3)), _indicators(cells))


def statistical_parity() -> FairnessCriterion:
    """Equal positive-prediction rates: ``U = (I{A=1}, I{A=0})``."""
    return FairnessCriterion("statistical-parity", 2, ((0, 1),), _indicators([(0, 1, None), (0, 0, None)]))


def equal_opportunity_multiclass(k: int) -> FairnessCriterion:
    """Equal opportunity for a sensitive attribute coded ``0, 1, ..., k``.

    ``U_j = I{A=j, Y=1}`` for ``j = 0..k`` and component ``t`` of ``phi``
    is the rate of group ``t`` minus the rate of reference group 0.
    """
    if int(k) != k or k < 2:
        raise ValueError(f"equal-opportunity-multiclass needs k >= 2, got {k}")
    k = int(k)
    cells = [(0, j, 1) for j in range(k + 1)]
    contrasts = tuple((t, 0) for t in range(1, k + 1))
    return FairnessCriterion("equal-opportunity-multiclass", k + 1, contrasts, _indicators(cells))


def equal_opportunity_multiattr(K: int) -> FairnessCriterion:
    """Equal opportunity across ``K`` binary sensitive attributes.

    ``U_t = I{A_t=1, Y=1}`` and ``U_{t+K} = I{A_t=0, Y=1}``.
    """
    if int(K) != K or K < 1:
        raise ValueError(f"equal-opportunity-multiattr needs K >= 1, got {K}")
    K = int(K)
    cells = [(t, 1, 1) for t in range(K)] + [(t, 0, 1) for t in range(K)]
    contrasts = tuple((t, t + K) for t in range(K))
    return FairnessCriterion("equal-opportunity-multiattr", 2 * K, contrasts, _indicators(cells), n_attributes=K)


def from_config(cfg: Mapping) -> FairnessCriterion:
    """Build a user-defined ratio-contrast criterion.

    ``cfg`` holds ``name``, ``s``, ``contrasts`` (list of index pairs) and
    ``u_table``: a list of ``{a: [...], y: 0|1, u: [...]}`` entries.  Pairs
    ``(a, y)`` absent from the table map to the zero vector.
    """
    s = int(cfg["s"])
    contrasts = tuple((int(i), int(j)) for i, j in cfg["contrasts"])
    if any(not (0 <= i < s and 0 <= j < s) or i == j for i, j in contrasts):
        raise SchemaError("contrast indices must be distinct and within [0, s)")
    table = {}
    for entry in cfg["u_table"]:
        a = tuple(int(v) for v in np.atleast_1d(entry["a"]))
        u = np.asarray(entry["u"], dtype=float)
        if u.shape != (s,):
            raise SchemaError(f"u_table entry for a={a} has length {u.size}, expected {s}")
        table[(a, int(entry["y"]))] = u
    n_attr = {len(a) for a, _ in table}
    if len(n_attr) != 1:
        raise SchemaError("u_table entries disagree on the number of sensitive attributes")

    def indicator(A, Y):
        out = np.zeros((len(Y), s))
        for (a, y), u in table.items():
            hit = (A[:, : len(a)] == np.array(a)).all(axis=1) & (Y == y)
            out[hit] = u
        return out

    return FairnessCriterion(str(cfg.get("name", "custom")), s, contrasts, indicator, n_attributes=n_attr.pop())


REGISTRY: dict[str, Callable[..., FairnessCriterion]] = {
    "equal-opportunity": equal_opportunity,
    "predictive-equality": predictive_equality,
    "equalized-odds": equalized_odds,
    "statistical-parity": statistical_parity,
    "equal-opportunity-multiclass": equal_opportunity_multiclass,
    "equal-opportunity-multiattr": equal_opportunity_multiattr,
}


def get_criterion(name: str, **params) -> FairnessCriterion:
    """Look a criterion up by its registry name."""
    try:
        factory = REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown criterion {name!r}; choose from {', '.join(REGISTRY)}") from None
    return factory(**params)


def code_space(crit: FairnessCriterion, n_codes: int = 2):
    """All ``(a, y)`` combinations over codes ``0..n_codes-1`` for each attribute."""
    for a in itertools.product(range(n_codes), repeat=crit.n_attributes):
        for y in (0, 1):
            yield a, y
