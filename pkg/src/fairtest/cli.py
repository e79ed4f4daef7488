"""Command-line driver: ``fairtest audit | project | simulate``.

Exit status
-----------
audit     0 fail-to-reject, 1 reject, 2 error
project   0 feasible plan written, 1 infeasible, 2 error
simulate  0 table written, 2 error
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import warnings
from pathlib import Path
from typing import Sequence

import numpy as np

from . import asymptotics as asy
from . import simlab
from .boundary import load_classifier
from .criteria import from_config, get_criterion
from .data import ColumnSchema, load_dataset, load_schema
from .errors import FairTestError
from .projection import ProjectionProblem, project, witness
from .testkit import _num, _nums, run_test, welch_test

MIN_DRAWS = 1000


class UsageError(FairTestError):
    pass


def _float_list(values: Sequence[str] | None) -> list[float]:
    out = []
    for v in values or ():
        out += [float(t) for t in v.split(",") if t.strip()]
    return out


def _alphas(args, default):
    alphas = _float_list(args.alpha) or list(default)
    if any(not 0 < a < 1 for a in alphas):
        raise UsageError("--alpha values must lie in (0, 1)")
    return alphas


def _epsilon(args):
    if args.epsilon is None:
        return None
    eps = _float_list([args.epsilon])
    if not eps or any(not (e >= 0 and math.isfinite(e)) for e in eps):
        raise UsageError("--epsilon entries must be finite and nonnegative")
    return np.array(eps)


def _draws(args):
    if args.mc_draws < MIN_DRAWS:
        raise UsageError(f"--mc-draws must be at least {MIN_DRAWS}")
    return args.mc_draws


def _split(s):
    return tuple(t.strip() for t in s.split(",") if t.strip())


def _schema(args) -> ColumnSchema:
    if args.schema:
        return load_schema(args.schema)
    with open(args.data, newline="") as fh:
        delim = "\t" if str(args.data).lower().endswith((".tsv", ".tab")) else ","
        header = [h.strip() for h in next(csv.reader(fh, delimiter=delim), [])]
    sensitive = _split(args.sensitive)
    label = args.label
    reserved = {label, *sensitive, args.c_col, args.d_col}
    features = _split(args.features) if args.features else tuple(h for h in header if h not in reserved)
    return ColumnSchema(features, sensitive, label, args.c_col, args.d_col)


def _criterion(name: str, dataset):
    path = Path(name)
    if path.suffix.lower() in (".yaml", ".yml", ".json") and path.exists():
        import yaml

        text = path.read_text()
        return from_config(json.loads(text) if path.suffix.lower() == ".json" else yaml.safe_load(text))
    if name == "equal-opportunity-multiclass":
        return get_criterion(name, k=int(dataset.A[:, 0].max()))
    if name == "equal-opportunity-multiattr":
        return get_criterion(name, K=dataset.n_attributes)
    return get_criterion(name)


def _load_inputs(args):
    schema = _schema(args)
    dataset = load_dataset(args.data, schema, skip_missing=args.skip_missing)
    clf = load_classifier(args.classifier, dataset.X, dataset.feature_names)
    return dataset, clf, _criterion(args.criterion, dataset)


def _emit(text: str, out: str | None):
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _flatten(tree, prefix=""):
    if isinstance(tree, dict):
        for k, v in tree.items():
            yield from _flatten(v, f"{prefix}.{k}" if prefix else str(k))
    elif isinstance(tree, list) and tree and isinstance(tree[0], dict):
        for i, v in enumerate(tree):
            yield from _flatten(v, f"{prefix}[{i}]")
    else:
        yield prefix, json.dumps(tree)


def _render(tree: dict, fmt: str) -> str:
    if fmt == "table":
        return "".join(f"{k}\t{v}\n" for k, v in _flatten(tree))
    return json.dumps(tree, indent=2) + "\n"


def cmd_audit(args) -> int:
    dataset, clf, crit = _load_inputs(args)
    alphas = _alphas(args, (0.05,))
    if args.method == "welch":
        report = welch_test(dataset, clf, crit, alphas)
    else:
        if args.bandwidth is not None and not args.bandwidth > 0:
            raise UsageError("--bandwidth must be positive")
        report = run_test(
            dataset, clf, crit, alphas, _epsilon(args), draws=_draws(args), seed=args.seed, bandwidth=args.bandwidth
        )
    tree = report.to_dict()
    tree["data"] = {"rows": dataset.n, "skipped": dataset.n_skipped}
    _emit(_render(tree, args.format), args.out)
    return 1 if report.rejected else 0


def cmd_project(args) -> int:
    dataset, clf, crit = _load_inputs(args)
    from .data import enrich

    enr = enrich(dataset, clf, crit)
    prob = ProjectionProblem.from_enriched(enr, _epsilon(args))
    res = project(prob)
    X = None if getattr(clf, "kind", None) == "precomputed" else dataset.X
    plan = witness(prob, res, clf, X)
    rows = [
        {
            "row": mv.row,
            "mass": _num(mv.mass),
            "cost": _num(mv.cost),
            "source": None if mv.source is None else _nums(mv.source),
            "target": None if mv.target is None else _nums(mv.target),
        }
        for mv in plan.moves
    ]
    if args.format == "table":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["row", "mass", "cost", "source", "target"])
        for r in rows:
            w.writerow([
                r["row"], repr(r["mass"]), repr(r["cost"]),
                "" if r["source"] is None else " ".join(map(repr, r["source"])),
                "" if r["target"] is None else " ".join(map(repr, r["target"])),
            ])
        w.writerow(["total", repr(_num(plan.total_mass)), repr(_num(plan.total_cost)), "", ""])
        if not res.feasible:
            w.writerow(["infeasible", "", "", "", ""])
        text = buf.getvalue()
    else:
        tree = {
            "criterion": crit.name,
            "n": prob.n,
            "epsilon": None if prob.epsilon is None else _nums(prob.epsilon),
            "infeasible": not res.feasible,
            "value": _num(res.value),
            "statistic": _num(res.statistic),
            "method": res.method,
            "witness": {
                "rows_moved": plan.rows_moved,
                "total_mass": _num(plan.total_mass),
                "total_cost": _num(plan.total_cost),
                "rows": rows,
            },
        }
        text = _render(tree, "report-tree")
    _emit(text, args.out)
    return 0 if res.feasible else 1


def _design(args) -> simlab.GaussianMixtureDesign:
    try:
        base = simlab.SCENARIOS[args.scenario]
    except KeyError:
        raise UsageError(f"unknown scenario {args.scenario!r}; choose from {', '.join(simlab.SCENARIOS)}") from None
    kw = {}
    if args.design:
        import yaml

        cfg = yaml.safe_load(Path(args.design).read_text()) or {}
        cell = lambda k: tuple(int(ch) for ch in str(k).replace(",", ""))  # noqa: E731
        for key in ("probs", "means", "variances"):
            if key in cfg:
                merged = dict(getattr(base, key))
                merged.update({cell(k): (tuple(v) if isinstance(v, list) else v) for k, v in cfg[key].items()})
                kw[key] = merged
        if "theta" in cfg:
            kw["theta"] = tuple(float(t) for t in cfg["theta"])
        if "tau" in cfg:
            kw["tau"] = float(cfg["tau"])
    if args.tau is not None:
        kw["tau"] = args.tau
    if args.theta is not None:
        kw["theta"] = tuple(float(t) for t in _split(args.theta))
    if not kw:
        return base
    fields = {k: getattr(base, k) for k in ("probs", "means", "variances", "theta", "tau")}
    fields.update(kw)
    try:
        return simlab.GaussianMixtureDesign(**fields)
    except (ValueError, TypeError, KeyError) as exc:
        raise UsageError(f"invalid design: {exc}") from None


def cmd_simulate(args) -> int:
    design = _design(args)
    ns = [int(v) for v in _float_list(args.n)] or [500]
    if any(n < 1 for n in ns):
        raise UsageError("--n must be at least 1")
    if args.reps < 1:
        raise UsageError("--reps must be at least 1")
    crit = get_criterion(args.criterion) if args.criterion else None
    if crit is not None and crit.n_attributes != 1:
        raise UsageError("the Gaussian design has a single binary attribute")
    draws = _draws(args)
    if args.histogram:
        rows = []
        for n in ns:
            emp, ref = simlab.statistic_histogram(design, n, args.reps, args.seed, criterion=crit, reference_draws=draws)
            rows += [{"N": n, "kind": "empirical", "index": i, "value": float(v)} for i, v in enumerate(emp)]
            rows += [{"N": n, "kind": "limit", "index": i, "value": float(v)} for i, v in enumerate(ref)]
    else:
        alphas = _alphas(args, (0.1, 0.05, 0.01))
        if args.bandwidth is not None and not args.bandwidth > 0:
            raise UsageError("--bandwidth must be positive")
        rows = []
        for n in ns:
            study = simlab.replicate_null_rejection(
                design, n, args.reps, alphas, args.seed, criterion=crit, epsilon=_epsilon(args),
                draws=draws, bandwidth=args.bandwidth,
            )
            rows += study.rows()
    delim = "\t" if args.out and args.out.lower().endswith((".tsv", ".tab")) else ","
    _emit(simlab.format_table(rows, delim), args.out)
    return 0


def _common(p: argparse.ArgumentParser):
    p.add_argument("--data", required=True, help="delimiter-separated file with a header row")
    p.add_argument("--classifier", required=True, help="classifier spec (YAML or JSON)")
    p.add_argument("--criterion", default="equal-opportunity", help="registry name or a criterion config file")
    p.add_argument("--schema", help="column schema file (YAML or JSON); overrides the column flags")
    p.add_argument("--features", help="comma-separated feature columns (default: all remaining columns)")
    p.add_argument("--sensitive", default="A", help="comma-separated sensitive attribute columns")
    p.add_argument("--label", default="Y", help="binary label column")
    p.add_argument("--c-col", dest="c_col", help="precomputed classifier output column")
    p.add_argument("--d-col", dest="d_col", help="precomputed boundary distance column")
    p.add_argument("--skip-missing", action="store_true", help="drop rows with missing values")
    p.add_argument("--epsilon", help="comma-separated tolerance vector for the composite test")
    p.add_argument("--out", help="output path (default: standard output)")
    p.add_argument("--format", choices=("report-tree", "table"), default="report-tree")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairtest", description="Statistical fairness audits of classifiers.")
    sub = parser.add_subparsers(dest="command", required=True)

    audit = sub.add_parser("audit", help="test a classifier for fairness")
    _common(audit)
    audit.add_argument("--alpha", action="append", help="significance level(s); repeat or comma-separate")
    audit.add_argument("--mc-draws", type=int, default=asy.DEFAULT_DRAWS)
    audit.add_argument("--seed", type=int, default=0)
    audit.add_argument("--bandwidth", type=float, help="kernel bandwidth h (default: std of signed distance times N^-1/5)")
    audit.add_argument("--method", choices=("projection", "welch"), default="projection")
    audit.set_defaults(func=cmd_audit)

    proj = sub.add_parser("project", help="write the minimal-perturbation transport plan")
    _common(proj)
    proj.set_defaults(func=cmd_project)

    sim = sub.add_parser("simulate", help="replication study on a synthetic design")
    sim.add_argument("--scenario", default="appendix-gaussian")
    sim.add_argument("--design", help="YAML overrides for probs/means/variances/theta/tau")
    sim.add_argument("--tau", type=float)
    sim.add_argument("--theta", help="comma-separated classifier weights")
    sim.add_argument("--criterion", help="single-attribute criterion (default equal-opportunity)")
    sim.add_argument("--n", action="append", help="sample size(s); repeat or comma-separate")
    sim.add_argument("--reps", type=int, default=2000)
    sim.add_argument("--alpha", action="append")
    sim.add_argument("--epsilon", help="composite tolerance vector")
    sim.add_argument("--mc-draws", type=int, default=asy.DEFAULT_DRAWS)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--bandwidth", type=float, help="bandwidth constant c in h = c N^-1/5")
    sim.add_argument("--histogram", action="store_true", help="emit raw statistics and --mc-draws limit-law samples instead")
    sim.add_argument("--out")
    sim.set_defaults(func=cmd_simulate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except (FairTestError, ValueError, KeyError, OSError) as exc:
        print(f"fairtest {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
