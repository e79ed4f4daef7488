"""Optimal-transport projection tests of classifier fairness."""

from .boundary import (
    KernelClassifier,
    LinearClassifier,
    MixedDiscreteCost,
    NormCost,
    PrecomputedClassifier,
    load_classifier,
)
from .criteria import FairnessCriterion, get_criterion
from .data import AuditDataset, AuditSample, ColumnSchema, enrich, load_dataset
from .errors import FairTestError
from .projection import ProjectionProblem, ProjectionResult, dual_value, project
from .testkit import TestReport, run_test, welch_test

__version__ = "0.1.0"

__all__ = [
    "AuditDataset",
    "AuditSample",
    "ColumnSchema",
    "FairTestError",
    "FairnessCriterion",
    "KernelClassifier",
    "LinearClassifier",
    "MixedDiscreteCost",
    "NormCost",
    "PrecomputedClassifier",
    "ProjectionProblem",
    "ProjectionResult",
    "TestReport",
    "dual_value",
    "enrich",
    "get_criterion",
    "load_classifier",
    "load_dataset",
    "project",
    "run_test",
    "welch_test",
]
