"""Classifier views and exact boundary distances.

For a deterministic classifier ``C`` and ground cost ``c`` the boundary
distance is ``d(x) = inf {c(x, x') : C(x') = 1 - C(x)}``.  The classes below
compute it in closed form for linear classifiers under p-norm and mixed
discrete/continuous costs, and for kernel classifiers under the RKHS cost.
Black-box models are supported through :class:`PrecomputedClassifier`, which
simply reads ``C`` and ``d`` columns from the data.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DomainError, IllConditionedKernelError, NoTargetError, SchemaError

SUPPORTED_P = (1.0, 2.0, math.inf)


def dual_exponent(p: float) -> float:
    if p == 1:
        return math.inf
    if p == math.inf:
        return 1.0
    return p / (p - 1.0)


def _norm(v: np.ndarray, p: float, axis=-1) -> np.ndarray:
    return np.linalg.norm(v, ord=p, axis=axis)


def _unit_dual_direction(theta: np.ndarray, p: float) -> np.ndarray:
    """Vector ``v`` with ``||v||_p = 1`` and ``theta @ v = ||theta||_q``."""
    if p == 2:
        return theta / np.linalg.norm(theta)
    if p == 1:
        j = int(np.argmax(np.abs(theta)))
        v = np.zeros_like(theta)
        v[j] = np.sign(theta[j])
        return v
    return np.sign(theta).astype(float)


# ---------------------------------------------------------------------------
# ground costs


@dataclass(frozen=True)
class NormCost:
    """``c(x, x') = ||x - x'||_p``."""

    p: float = 2.0
    kind: str = field(default="norm", init=False)

    def __post_init__(self):
        if float(self.p) not in SUPPORTED_P:
            raise ValueError(f"p-norm index must be one of 1, 2, inf; got {self.p}")
        object.__setattr__(self, "p", float(self.p))

    def __call__(self, x, x2) -> float:
        return float(_norm(np.asarray(x, float) - np.asarray(x2, float), self.p))


@dataclass(frozen=True, eq=False)
class MixedDiscreteCost:
    """Norm cost on continuous coordinates plus ``delta`` per discrete change.

    Discrete coordinates (``discrete_idx``) must stay within the finite set
    ``domain`` (rows of a (k, d1) array); leaving it costs infinity.
    """

    delta: float
    discrete_idx: tuple[int, ...]
    domain: np.ndarray | None = None
    p: float = 2.0
    kind: str = field(default="mixed", init=False)

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if float(self.p) not in SUPPORTED_P:
            raise ValueError(f"p-norm index must be one of 1, 2, inf; got {self.p}")
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "discrete_idx", tuple(int(i) for i in self.discrete_idx))
        if self.domain is not None:
            dom = np.unique(np.atleast_2d(np.asarray(self.domain, dtype=float)), axis=0)
            if dom.shape[1] != len(self.discrete_idx):
                raise ValueError("domain rows must match the number of discrete coordinates")
            object.__setattr__(self, "domain", dom)

    def with_domain(self, X: np.ndarray) -> "MixedDiscreteCost":
        """Return a copy whose domain is the set of discrete rows observed in ``X``."""
        dom = np.asarray(X, float)[:, list(self.discrete_idx)]
        return MixedDiscreteCost(self.delta, self.discrete_idx, dom, self.p)

    def split(self, x: np.ndarray, n_features: int):
        disc = list(self.discrete_idx)
        cont = [j for j in range(n_features) if j not in self.discrete_idx]
        return x[..., disc], x[..., cont], disc, cont

    def in_domain(self, v: np.ndarray) -> bool:
        return bool(np.any(np.all(self.domain == v, axis=1)))

    def __call__(self, x, x2) -> float:
        x = np.asarray(x, float)
        x2 = np.asarray(x2, float)
        xd, xc, _, _ = self.split(x, x.size)
        yd, yc, _, _ = self.split(x2, x2.size)
        if np.array_equal(xd, yd):
            return float(_norm(xc - yc, self.p))
        if self.domain is not None and not (self.in_domain(xd) and self.in_domain(yd)):
            return math.inf
        return float(_norm(xc - yc, self.p)) + self.delta


@dataclass(frozen=True)
class Kernel:
    """Reproducing kernel: ``rbf`` (``exp(-gamma ||x-y||^2)``) or ``linear``."""

    name: str = "rbf"
    gamma: float = 1.0

    def __post_init__(self):
        if self.name not in ("rbf", "linear"):
            raise ValueError(f"unknown kernel {self.name!r}")

    def gram(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, float))
        Y = np.atleast_2d(np.asarray(Y, float))
        if self.name == "linear":
            return X @ Y.T
        sq = (X**2).sum(1)[:, None] + (Y**2).sum(1)[None, :] - 2 * X @ Y.T
        return np.exp(-self.gamma * np.maximum(sq, 0.0))


@dataclass(frozen=True)
class KernelCost:
    """Squared RKHS distance ``k(x,x) - 2k(x,x') + k(x',x')``."""

    kernel: Kernel
    kind: str = field(default="kernel", init=False)

    def __call__(self, x, x2) -> float:
        k = self.kernel.gram(np.vstack([x, x2]), np.vstack([x, x2]))
        return float(max(k[0, 0] - 2 * k[0, 1] + k[1, 1], 0.0))


# ---------------------------------------------------------------------------
# classifiers


def logistic_threshold(tau: float) -> float:
    """Score threshold ``w`` with ``1/(1+exp(-w)) = tau``."""
    if not 0 < tau < 1:
        raise ValueError("logistic threshold tau must lie in (0, 1)")
    return -math.log(1.0 / tau - 1.0)


@dataclass(frozen=True, eq=False)
class LinearClassifier:
    """``C(x) = I{theta @ x >= w}``, with ``w = link^{-1}(tau)`` when a link is given."""

    theta: np.ndarray
    w: float = 0.0
    cost: NormCost | MixedDiscreteCost = field(default_factory=NormCost)
    link: str | None = None
    tau: float | None = None
    kind: str = field(default="linear", init=False)

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float).ravel()
        if not np.any(theta != 0):
            raise ValueError("theta must be nonzero")
        object.__setattr__(self, "theta", theta)
        if isinstance(self.cost, MixedDiscreteCost):
            _, tc, _, _ = self.cost.split(theta, theta.size)
            if not np.any(tc != 0):
                raise ValueError("continuous part of theta must be nonzero under the mixed cost")

    @classmethod
    def from_link(cls, theta, tau: float, link: str = "logistic", cost=None) -> "LinearClassifier":
        if link == "logistic":
            w = logistic_threshold(tau)
        elif link == "identity":
            w = float(tau)
        else:
            raise ValueError(f"unknown link {link!r}")
        return cls(theta, w, cost if cost is not None else NormCost(), link, tau)

    @property
    def dim(self) -> int:
        return self.theta.size

    def score(self, X) -> np.ndarray:
        return np.asarray(X, float) @ self.theta

    def label(self, x) -> int:
        return int(self.score(x) >= self.w)

    def labels(self, X) -> np.ndarray:
        return (self.score(np.atleast_2d(X)) >= self.w).astype(np.int64)

    def boundary_dist(self, x) -> float:
        return float(self.distances(np.atleast_2d(x))[0])

    def distances(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, float))
        if isinstance(self.cost, MixedDiscreteCost):
            return np.array([mixed_discrete_distance(self, self.cost, x) for x in X])
        return linear_distance(self, self.cost, X)

    def flip_target(self, x, eps: float = 1e-6) -> np.ndarray:
        return flip_target(self, self.cost, x, eps)


@dataclass(frozen=True, eq=False)
class KernelClassifier:
    """``C(x) = I{sum_i alpha_i k(s_i, x) + b >= 0}`` under the RKHS cost."""

    alpha: np.ndarray
    b: float
    support: np.ndarray
    kernel: Kernel = field(default_factory=Kernel)
    kind: str = field(default="kernel", init=False)

    def __post_init__(self):
        alpha = np.asarray(self.alpha, float).ravel()
        support = np.atleast_2d(np.asarray(self.support, float))
        if support.shape[0] != alpha.size:
            raise ValueError("one coefficient per support point is required")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "support", support)

    @property
    def dim(self) -> int:
        return self.support.shape[1]

    @property
    def cost(self) -> KernelCost:
        return KernelCost(self.kernel)

    def decision(self, X) -> np.ndarray:
        return self.kernel.gram(np.atleast_2d(X), self.support) @ self.alpha + self.b

    def rkhs_norm_sq(self) -> float:
        return float(self.alpha @ self.kernel.gram(self.support, self.support) @ self.alpha)

    def label(self, x) -> int:
        return int(self.decision(x)[0] >= 0)

    def labels(self, X) -> np.ndarray:
        return (self.decision(X) >= 0).astype(np.int64)

    def boundary_dist(self, x) -> float:
        return float(kernel_distance(self, np.atleast_2d(x))[0])

    def distances(self, X) -> np.ndarray:
        return kernel_distance(self, X)

    def flip_target(self, x, eps: float = 1e-6):
        # Transport targets live in the RKHS, not in input space.
        return None


@dataclass(frozen=True)
class PrecomputedClassifier:
    """Black-box classifier whose labels and distances are data columns."""

    kind: str = field(default="precomputed", init=False)
    dim: None = field(default=None, init=False)

    def outputs(self, dataset):
        if dataset.C is None or dataset.D is None:
            raise SchemaError("precomputed classifier requires C and d columns in the data")
        return dataset.C.copy(), dataset.D.copy()

    def flip_target(self, x, eps: float = 1e-6):
        return None


# ---------------------------------------------------------------------------
# distances


def linear_distance(clf: LinearClassifier, cost: NormCost, x) -> np.ndarray | float:
    """``|theta @ x - w| / ||theta||_q`` with ``q`` dual to the cost's ``p``."""
    x = np.asarray(x, float)
    q = dual_exponent(cost.p)
    out = np.abs(x @ clf.theta - clf.w) / np.linalg.norm(clf.theta, ord=q)
    return float(out) if out.ndim == 0 else out


def kernel_distance(clf: KernelClassifier, x) -> np.ndarray:
    """Closed form ``f(x)^2 / (alpha^T K alpha)`` of the RKHS boundary distance.

    ``f`` is the decision function.  The value is in the units of the
    squared RKHS cost, i.e. it is a squared distance.
    """
    nrm = clf.rkhs_norm_sq()
    scale = max(1.0, float(np.abs(clf.alpha).max()) ** 2)
    if not nrm > 1e-12 * scale:
        raise IllConditionedKernelError(f"alpha^T K alpha = {nrm:.3g} is not positive")
    return clf.decision(x) ** 2 / nrm


def _mixed_candidates(clf: LinearClassifier, cost: MixedDiscreteCost, x: np.ndarray):
    """Per discrete code ``v``: (v, discrete cost, continuous gap) for flipping ``x``."""
    if cost.domain is None:
        raise DomainError("mixed-discrete cost has no discrete domain; call with_domain() first")
    xd, xc, _, _ = cost.split(x, x.size)
    if not cost.in_domain(xd):
        raise DomainError(f"discrete coordinates {xd} are not in the declared domain")
    td, tc, _, _ = cost.split(clf.theta, x.size)
    tc_norm = np.linalg.norm(tc, ord=dual_exponent(cost.p))
    positive = clf.label(x) == 1
    scores = cost.domain @ td + tc @ xc
    if positive:
        # need score < w; the infimum sits on the boundary
        gap = np.maximum(scores - clf.w, 0.0) / tc_norm
    else:
        gap = np.maximum(clf.w - scores, 0.0) / tc_norm
    changed = ~np.all(cost.domain == xd, axis=1)
    return cost.domain, cost.delta * changed, gap


def mixed_discrete_distance(clf: LinearClassifier, cost: MixedDiscreteCost, x) -> float:
    """Minimum over discrete codes of ``delta * I{code changes} + continuous gap``."""
    x = np.asarray(x, float)
    _, disc_cost, gap = _mixed_candidates(clf, cost, x)
    return float(np.min(disc_cost + gap))


def flip_target(clf, cost, x, eps: float = 1e-6) -> np.ndarray | None:
    """A point with the opposite label whose cost from ``x`` is at most ``d(x) + eps``.

    The target reaches the boundary along the cost-optimal direction and is
    pushed a further ``eps/2`` into the opposite region.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if getattr(clf, "kind", None) != "linear":
        return clf.flip_target(x, eps)
    x = np.asarray(x, float).copy()
    positive = clf.label(x) == 1
    dist = clf.boundary_dist(x)
    if not math.isfinite(dist):
        raise NoTargetError("boundary distance is infinite")

    if isinstance(cost, MixedDiscreteCost):
        codes, disc_cost, gap = _mixed_candidates(clf, cost, x)
        best = int(np.argmin(disc_cost + gap))
        _, _, disc, cont = cost.split(x, x.size)
        x[disc] = codes[best]
        theta_c = clf.theta[cont]
        q_norm = np.linalg.norm(theta_c, ord=dual_exponent(cost.p))
        v = _unit_dual_direction(theta_c, cost.p)
        sgn = -1.0 if positive else 1.0
        score = float(clf.theta @ x)
        already = (score < clf.w) if positive else (score >= clf.w)
        if already:
            return x
        step = abs(score - clf.w) / q_norm + eps / 2
        x[cont] = x[cont] + sgn * step * v
        return x

    q_norm = np.linalg.norm(clf.theta, ord=dual_exponent(cost.p))
    v = _unit_dual_direction(clf.theta, cost.p)
    sgn = -1.0 if positive else 1.0
    return x + sgn * (dist + eps / 2) * v


# ---------------------------------------------------------------------------
# classifier files


def classifier_from_config(cfg: Mapping, X: np.ndarray | None = None, feature_names: Sequence[str] = ()):
    """Build a classifier view from a parsed classifier spec.

    ``X`` and ``feature_names`` are used to resolve named discrete columns and
    to infer the discrete domain of a mixed cost when none is declared.
    """
    kind = cfg.get("type")
    if kind == "precomputed":
        return PrecomputedClassifier()
    if kind == "linear":
        theta = cfg["theta"]
        cost_cfg = cfg.get("cost") or {"norm": 2}
        cost = _cost_from_config(cost_cfg, X, feature_names)
        if "w" in cfg:
            return LinearClassifier(theta, float(cfg["w"]), cost, cfg.get("link"), cfg.get("tau"))
        if "tau" in cfg:
            return LinearClassifier.from_link(theta, float(cfg["tau"]), cfg.get("link", "logistic"), cost)
        return LinearClassifier(theta, 0.0, cost)
    if kind == "kernel":
        kcfg = cfg.get("kernel") or {"rbf": {"gamma": 1.0}}
        if "linear" in kcfg:
            kernel = Kernel("linear")
        elif "rbf" in kcfg:
            kernel = Kernel("rbf", float((kcfg["rbf"] or {}).get("gamma", 1.0)))
        else:
            raise SchemaError(f"unknown kernel spec {kcfg!r}")
        return KernelClassifier(cfg["alpha"], float(cfg.get("b", 0.0)), cfg["support"], kernel)
    raise SchemaError(f"unknown classifier type {kind!r}")


def _parse_p(value) -> float:
    if isinstance(value, str) and value.lower() in ("inf", "infinity"):
        return math.inf
    return float(value)


def _cost_from_config(cfg: Mapping, X, feature_names):
    if "mixed" in cfg:
        mc = cfg["mixed"]
        idx = []
        for col in mc["discrete_cols"]:
            if isinstance(col, str):
                if col not in feature_names:
                    raise SchemaError(f"discrete column {col!r} is not a feature")
                idx.append(list(feature_names).index(col))
            else:
                idx.append(int(col))
        cost = MixedDiscreteCost(float(mc["delta"]), tuple(idx), mc.get("domain"), _parse_p(mc.get("norm", 2)))
        if cost.domain is None and X is not None:
            cost = cost.with_domain(X)
        return cost
    return NormCost(_parse_p(cfg.get("norm", 2)))


def load_classifier(path: str | Path, X: np.ndarray | None = None, feature_names: Sequence[str] = ()):
    """Read a classifier spec from a YAML or JSON file."""
    import yaml

    text = Path(path).read_text()
    cfg = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    if not isinstance(cfg, Mapping):
        raise SchemaError(f"classifier spec {path} does not contain a mapping")
    return classifier_from_config(cfg, X, feature_names)
