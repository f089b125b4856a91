"""Verification suites and the runner behind the CLI commands."""

from .base import CHECK_COLUMNS, CheckResult, RunSpec, Suite, SuiteError, SuiteResult, Table
from .registry import get_suite_registry, suite_registry
from .bench import BenchSuite
from .gradcheck import GradcheckSuite
from .metrics import MetricsSuite
from .oracle import OracleSuite
from .runner import EXIT_ERROR, EXIT_FAILED, EXIT_OK, Runner
from .smoketrain import SmokeTrainSuite

__all__ = [
    "CHECK_COLUMNS",
    "CheckResult",
    "RunSpec",
    "Suite",
    "SuiteError",
    "SuiteResult",
    "Table",
    "get_suite_registry",
    "suite_registry",
    "BenchSuite",
    "GradcheckSuite",
    "MetricsSuite",
    "OracleSuite",
    "SmokeTrainSuite",
    "Runner",
    "EXIT_OK",
    "EXIT_ERROR",
    "EXIT_FAILED",
]
