"""Observation types, the dataset container and tabular ingestion.

An :class:`AuditDataset` is the empirical measure of the audit sample: every
row is an atom of mass ``1/N`` (duplicated rows are distinct atoms).  Rows keep
their file order so that downstream witness output can cite row indices.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import DegenerateGroupError, DomainError, EmptyDatasetError, SchemaError

logger = logging.getLogger(__name__)

MISSING_TOKENS = frozenset({"", "na", "nan", "null", "none", "?"})


@dataclass(frozen=True)
class AuditSample:
    """One observation ``(x, a, y)``."""

    x: np.ndarray
    a: tuple[int, ...]
    y: int


@dataclass(frozen=True)
class ColumnSchema:
    """Mapping from file columns to the roles of an audit sample.

    ``code_sets`` optionally declares the admissible integer codes of each
    sensitive column; when omitted the codes observed in the file are used.
    ``c_column``/``d_column`` name precomputed classifier outputs for
    black-box models.
    """

    features: tuple[str, ...]
    sensitive: tuple[str, ...]
    label: str
    c_column: str | None = None
    d_column: str | None = None
    code_sets: Mapping[str, tuple[int, ...]] | None = None

    @classmethod
    def from_mapping(cls, cfg: Mapping) -> "ColumnSchema":
        try:
            features = cfg["features"]
            sensitive = cfg["sensitive"]
            label = cfg["label"]
        except KeyError as exc:
            raise SchemaError(f"schema config lacks required key {exc.args[0]!r}") from None
        if isinstance(features, str):
            features = [f.strip() for f in features.split(",") if f.strip()]
        if isinstance(sensitive, str):
            sensitive = [s.strip() for s in sensitive.split(",") if s.strip()]
        codes = cfg.get("code_sets")
        if codes is not None:
            codes = {k: tuple(int(c) for c in v) for k, v in codes.items()}
        return cls(
            features=tuple(features),
            sensitive=tuple(sensitive),
            label=str(label),
            c_column=cfg.get("c_column"),
            d_column=cfg.get("d_column"),
            code_sets=codes,
        )


def load_schema(path: str | Path) -> ColumnSchema:
    """Read a column schema from a YAML or JSON file."""
    import yaml

    text = Path(path).read_text()
    cfg = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    if not isinstance(cfg, Mapping):
        raise SchemaError(f"schema file {path} does not contain a mapping")
    return ColumnSchema.from_mapping(cfg)


@dataclass(frozen=True, eq=False)
class AuditDataset:
    """Immutable column-oriented container for ``N`` audit samples.

    Attributes
    ----------
    X : ndarray, shape (N, d)
        Feature matrix.
    A : ndarray of int, shape (N, K)
        Sensitive attribute codes, one column per attribute.
    Y : ndarray of int, shape (N,)
        Binary labels.
    feature_names, attribute_names : tuple of str
    code_sets : tuple of tuple of int
        Declared codes of each sensitive attribute.
    C, D : ndarray or None
        Optional precomputed classifier labels and boundary distances.
    n_skipped : int
        Rows dropped for missing values at load time.
    """

    X: np.ndarray
    A: np.ndarray
    Y: np.ndarray
    feature_names: tuple[str, ...] = ()
    attribute_names: tuple[str, ...] = ()
    code_sets: tuple[tuple[int, ...], ...] = ()
    C: np.ndarray | None = None
    D: np.ndarray | None = None
    n_skipped: int = 0

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        A = np.array(self.A, dtype=np.int64)
        if A.ndim == 1:
            A = A[:, None]
        Y = np.array(self.Y, dtype=np.int64).ravel()
        n = X.shape[0]
        if n == 0:
            raise EmptyDatasetError("dataset has no rows")
        if A.shape[0] != n or Y.shape[0] != n:
            raise SchemaError("feature, attribute and label columns differ in length")
        if not np.isin(Y, (0, 1)).all():
            raise DomainError("labels must be binary (0/1)")
        names = self.feature_names or tuple(f"x{j + 1}" for j in range(X.shape[1]))
        anames = self.attribute_names or tuple(f"A{k + 1}" for k in range(A.shape[1]))
        if len(names) != X.shape[1] or len(anames) != A.shape[1]:
            raise SchemaError("column names do not match array shapes")
        codes = self.code_sets or tuple(tuple(int(v) for v in np.unique(A[:, k])) for k in range(A.shape[1]))
        if len(codes) != A.shape[1]:
            raise SchemaError("one code set per sensitive attribute is required")
        for k, cs in enumerate(codes):
            if not np.isin(A[:, k], cs).all():
                raise DomainError(f"attribute {anames[k]!r} has codes outside {cs}")
        C = D = None
        if self.C is not None:
            C = np.array(self.C, dtype=np.int64).ravel()
            if C.shape[0] != n or not np.isin(C, (0, 1)).all():
                raise DomainError("precomputed classifier labels must be binary, one per row")
        if self.D is not None:
            D = np.array(self.D, dtype=float).ravel()
            if D.shape[0] != n or np.isnan(D).any() or (D < 0).any():
                raise DomainError("precomputed boundary distances must be nonnegative, one per row")
        for arr in (X, A, Y, C, D):
            if arr is not None:
                arr.flags.writeable = False
        for name, val in (("X", X), ("A", A), ("Y", Y), ("C", C), ("D", D),
                          ("feature_names", tuple(names)), ("attribute_names", tuple(anames)),
                          ("code_sets", tuple(tuple(c) for c in codes))):
            object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def n_attributes(self) -> int:
        return self.A.shape[1]

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, i: int) -> AuditSample:
        return AuditSample(self.X[i].copy(), tuple(int(v) for v in self.A[i]), int(self.Y[i]))

    def __iter__(self) -> Iterator[AuditSample]:
        return (self[i] for i in range(self.n))

    def take(self, index: Sequence[int]) -> "AuditDataset":
        """Return the dataset restricted to (or permuted by) ``index``."""
        index = np.asarray(index)
        return AuditDataset(
            self.X[index], self.A[index], self.Y[index], self.feature_names,
            self.attribute_names, self.code_sets,
            None if self.C is None else self.C[index],
            None if self.D is None else self.D[index],
        )

    @classmethod
    def from_samples(cls, samples: Sequence[AuditSample], **kwargs) -> "AuditDataset":
        if not samples:
            raise EmptyDatasetError("dataset has no rows")
        dims = {len(s.x) for s in samples}
        if len(dims) != 1:
            raise SchemaError("samples do not share a feature dimension")
        return cls(
            np.array([s.x for s in samples], dtype=float),
            np.array([s.a for s in samples], dtype=np.int64),
            np.array([s.y for s in samples], dtype=np.int64),
            **kwargs,
        )


def _parse_float(token: str) -> float:
    t = token.strip().lower()
    if t in MISSING_TOKENS:
        return np.nan
    if t in ("inf", "+inf", "infinity"):
        return np.inf
    return float(t)


def _parse_int(token: str, column: str) -> int:
    t = token.strip()
    if t.lower() in MISSING_TOKENS:
        raise _Missing
    try:
        v = float(t)
    except ValueError:
        raise DomainError(f"column {column!r}: {token!r} is not an integer code") from None
    if v != int(v):
        raise DomainError(f"column {column!r}: {token!r} is not an integer code")
    return int(v)


class _Missing(Exception):
    pass


def load_dataset(
    path: str | Path,
    schema: ColumnSchema,
    *,
    skip_missing: bool = False,
    delimiter: str | None = None,
) -> AuditDataset:
    """Load a delimiter-separated file with a header row.

    Rows with a missing value are rejected unless ``skip_missing`` is set, in
    which case they are dropped and counted in ``n_skipped``.
    """
    path = Path(path)
    if delimiter is None:
        delimiter = "\t" if path.suffix.lower() in (".tsv", ".tab") else ","
    with path.open(newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        header = next(reader, None)
        if header is None:
            raise EmptyDatasetError(f"{path} is empty")
        header = [h.strip() for h in header]
        needed = [*schema.features, *schema.sensitive, schema.label]
        needed += [c for c in (schema.c_column, schema.d_column) if c]
        missing_cols = [c for c in needed if c not in header]
        if missing_cols:
            raise SchemaError(f"{path}: missing column(s) {', '.join(missing_cols)}")
        col = {name: header.index(name) for name in needed}

        X, A, Y, C, D = [], [], [], [], []
        skipped = 0
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not t.strip() for t in row):
                continue
            try:
                x = [_parse_float(row[col[f]]) for f in schema.features]
                if any(np.isnan(v) for v in x):
                    raise _Missing
                a = [_parse_int(row[col[s]], s) for s in schema.sensitive]
                y = _parse_int(row[col[schema.label]], schema.label)
                if y not in (0, 1):
                    raise DomainError(f"{path}:{lineno}: label {row[col[schema.label]]!r} is not binary")
                c = _parse_int(row[col[schema.c_column]], schema.c_column) if schema.c_column else None
                dv = _parse_float(row[col[schema.d_column]]) if schema.d_column else None
                if dv is not None and np.isnan(dv):
                    raise _Missing
            except (_Missing, IndexError):
                if not skip_missing:
                    raise DomainError(f"{path}:{lineno}: missing value (use skip_missing to drop such rows)") from None
                skipped += 1
                continue
            X.append(x)
            A.append(a)
            Y.append(y)
            C.append(c)
            D.append(dv)
    if not X:
        raise EmptyDatasetError(f"{path} has no data rows")
    if skipped:
        logger.warning("dropped %d row(s) with missing values from %s", skipped, path)
    code_sets = ()
    if schema.code_sets is not None:
        try:
            code_sets = tuple(tuple(schema.code_sets[s]) for s in schema.sensitive)
        except KeyError as exc:
            raise SchemaError(f"no code set declared for attribute {exc.args[0]!r}") from None
    return AuditDataset(
        np.array(X, dtype=float),
        np.array(A, dtype=np.int64),
        np.array(Y, dtype=np.int64),
        feature_names=tuple(schema.features),
        attribute_names=tuple(schema.sensitive),
        code_sets=code_sets,
        C=np.array(C, dtype=np.int64) if schema.c_column else None,
        D=np.array(D, dtype=float) if schema.d_column else None,
        n_skipped=skipped,
    )


@dataclass(frozen=True)
class EnrichedSample:
    """An audit sample together with every quantity the projection LP needs."""

    base: AuditSample
    c_label: int
    dist: float
    u: np.ndarray
    phi: np.ndarray


@dataclass(frozen=True, eq=False)
class EnrichedData:
    """Row-aligned arrays of classifier outputs and criterion values.

    ``mu`` is the single shared group mean ``N^-1 sum_i u_i`` that enters
    every ``phi`` row.
    """

    dataset: AuditDataset
    c: np.ndarray
    dist: np.ndarray
    u: np.ndarray
    phi: np.ndarray
    mu: np.ndarray
    phi_z: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.c.shape[0]

    @property
    def m(self) -> int:
        return self.phi.shape[1]

    def signed_distance(self) -> np.ndarray:
        """Signed boundary distance ``(2 C(x) - 1) d(x)``."""
        return (2 * self.c - 1) * self.dist

    def __getitem__(self, i: int) -> EnrichedSample:
        return EnrichedSample(self.dataset[i], int(self.c[i]), float(self.dist[i]), self.u[i].copy(), self.phi[i].copy())

    def __iter__(self) -> Iterator[EnrichedSample]:
        return (self[i] for i in range(self.n))

    def rows(self) -> list[EnrichedSample]:
        return list(self)


def enrich(dataset: AuditDataset, clf, crit) -> EnrichedData:
    """Evaluate classifier labels, boundary distances and criterion values.

    Parameters
    ----------
    dataset : AuditDataset
    clf : classifier view from :mod:`fairtest.boundary`
        Precomputed classifiers read the dataset's ``C``/``D`` columns.
    crit : FairnessCriterion

    Raises
    ------
    DegenerateGroupError
        If a group used as a denominator is absent from the data.
    """
    if crit.n_attributes != dataset.n_attributes:
        raise SchemaError(
            f"criterion {crit.name!r} expects {crit.n_attributes} sensitive attribute(s), "
            f"dataset has {dataset.n_attributes}"
        )
    if getattr(clf, "kind", None) == "precomputed":
        c, dist = clf.outputs(dataset)
    else:
        if clf.dim is not None and clf.dim != dataset.d:
            raise SchemaError(f"classifier expects {clf.dim} features, dataset has {dataset.d}")
        c = clf.labels(dataset.X)
        dist = clf.distances(dataset.X)
    u = crit.u_matrix(dataset.A, dataset.Y)
    mu = u.mean(axis=0)
    try:
        crit.check_denominators(mu)
    except DegenerateGroupError as exc:
        raise DegenerateGroupError(f"{exc} (a group is absent from the data)") from None
    phi = crit.phi(u, mu)
    phi_z = crit.phi_z(u, mu)
    for arr in (c, dist, u, phi, mu, phi_z):
        arr.flags.writeable = False
    return EnrichedData(dataset, c, dist, u, phi, mu, phi_z)
