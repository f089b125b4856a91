"""Suite results and the abstract suite interface."""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from attnmerge.config import Config


class SuiteError(Exception):
    """Raised when a suite cannot run to completion."""

    pass


@dataclass(frozen=True)
class RunSpec:
    """
    Everything that determines one CLI run.

    The seed fully determines every random input: repetition ``r`` uses
    ``seed + r``.
    """

    command: str
    config_path: Optional[str]
    seed: int
    out_dir: Path
    dtype: str
    reps: int

    @classmethod
    def from_config(cls, command: str, config: Config, config_path: Optional[str] = None) -> "RunSpec":
        return cls(
            command=command,
            config_path=config_path,
            seed=config.run.seed,
            out_dir=Path(config.run.out_dir),
            dtype=config.model.dtype,
            reps=config.run.reps,
        )

    def seeds(self) -> List[int]:
        return [self.seed + rep for rep in range(self.reps)]


@dataclass
class CheckResult:
    """One named invariant: whether it held and the largest deviation seen."""

    name: str
    passed: bool
    max_error: float = 0.0
    tolerance: float = 0.0
    cases: int = 1
    detail: str = ""

    def merge(self, other: "CheckResult") -> "CheckResult":
        if other.name != self.name:
            raise SuiteError(f"Cannot merge check '{self.name}' with '{other.name}'")
        return CheckResult(
            name=self.name,
            passed=self.passed and other.passed,
            max_error=max(self.max_error, other.max_error),
            tolerance=self.tolerance,
            cases=self.cases + other.cases,
            detail=self.detail if not self.passed or other.passed else other.detail,
        )

    def as_record(self) -> Dict[str, Any]:
        return {
            "check": self.name,
            "passed": self.passed,
            "max_error": self.max_error,
            "tolerance": self.tolerance,
            "cases": self.cases,
            "detail": self.detail,
        }


CHECK_COLUMNS = ("check", "passed", "max_error", "tolerance", "cases", "detail")


@dataclass
class Table:
    """Rows for one tabular report."""

    columns: Sequence[str]
    rows: List[Dict[str, Any]] = field(default_factory=list)
    # excluded from the reproducibility guarantee (wall-clock figures)
    volatile: bool = False


@dataclass
class SuiteResult:
    """Checks, tables and summary values of one suite repetition."""

    suite: str
    checks: List[CheckResult] = field(default_factory=list)
    tables: Dict[str, Table] = field(default_factory=dict)
    summary: Dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    @property
    def failures(self) -> List[CheckResult]:
        return [check for check in self.checks if not check.passed]

    def check(self, name: str) -> CheckResult:
        for entry in self.checks:
            if entry.name == name:
                return entry
        raise SuiteError(f"Suite '{self.suite}' has no check named '{name}'")

    @classmethod
    def combine(cls, results: Sequence["SuiteResult"]) -> "SuiteResult":
        """
        Merge repetitions in order.

        Checks merge by name; table rows are concatenated with a leading
        ``rep`` column; the summary is the first repetition's.
        """
        if not results:
            raise SuiteError("No suite results to combine")
        if len(results) == 1:
            return results[0]

        first = results[0]
        checks = list(first.checks)
        for other in results[1:]:
            if [c.name for c in other.checks] != [c.name for c in checks]:
                raise SuiteError("Repetitions produced different checks")
            checks = [a.merge(b) for a, b in zip(checks, other.checks)]

        tables: Dict[str, Table] = {}
        for name, table in first.tables.items():
            rows = [
                {"rep": rep, **row}
                for rep, result in enumerate(results)
                for row in result.tables[name].rows
            ]
            tables[name] = Table(("rep", *table.columns), rows, table.volatile)

        summary = dict(first.summary)
        summary["reps"] = len(results)
        return cls(first.suite, checks, tables, summary)


class Suite(ABC):
    """
    A verification or measurement command.

    ``run`` performs one repetition from a seed. Suites whose result does
    not depend on the seed set ``repeatable = False`` and run once.
    """

    name: str = ""
    repeatable: bool = True

    def __init__(self, config: Config) -> None:
        self.config = config

    @abstractmethod
    def run(self, seed: int) -> SuiteResult:
        """
        Run one repetition.

        Raises:
            SuiteError: If the suite cannot complete
        """
        pass
