"""Suite runner: repetitions, report assembly and writing."""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, List, Optional

from attnmerge.config import Config
from attnmerge.writers import Report, StdoutWriter, Writer, get_writer_registry

from .base import CHECK_COLUMNS, RunSpec, Suite, SuiteResult
from .registry import get_suite_registry

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FAILED = 2


class Runner:
    """
    Orchestrates one CLI command.

    Flow: RunSpec → suite repetitions → combined result → file writers →
    stdout summary → exit status.
    """

    def __init__(self, config: Config, config_path: Optional[str] = None, show_rows: bool = False):
        """
        Initialize the runner.

        Args:
            config: Validated configuration, CLI overrides already applied
            config_path: File the configuration came from, recorded in reports
            show_rows: Also print report rows on stdout
        """
        self.config = config
        self.config_path = config_path
        self.show_rows = show_rows
        self.suite_registry = get_suite_registry()
        self.writer_registry = get_writer_registry()

    def run(self, command: str, **suite_kwargs: Any) -> int:
        """
        Run suite ``command`` and write its reports.

        Returns:
            ``EXIT_OK`` if every check passed, else ``EXIT_FAILED``

        Raises:
            RegistrationError: On an unknown suite or writer
            SuiteError: If the suite cannot complete
            WriterError: If a report cannot be written
        """
        spec = RunSpec.from_config(command, self.config, self.config_path)
        suite = self.suite_registry.create(command, config=self.config, **suite_kwargs)
        result = self.execute(suite, spec)

        reports = self.build_reports(result, spec)
        for writer in self._file_writers(spec):
            for report in reports:
                path = writer.write(report)
                logger.debug("wrote %s", path)

        StdoutWriter(show_rows=self.show_rows).write(reports[0])
        for failure in result.failures:
            logger.error("check %s failed: max error %.3e %s", failure.name, failure.max_error, failure.detail)

        return EXIT_OK if result.passed else EXIT_FAILED

    def execute(self, suite: Suite, spec: RunSpec) -> SuiteResult:
        """Run every repetition; more than one runs in a thread pool."""
        seeds = spec.seeds() if suite.repeatable else [spec.seed]
        if len(seeds) == 1:
            return suite.run(seeds[0])

        workers = min(len(seeds), os.cpu_count() or 1)
        logger.debug("running %d repetitions of %s on %d threads", len(seeds), suite.name, workers)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(suite.run, seeds))
        return SuiteResult.combine(results)

    def build_reports(self, result: SuiteResult, spec: RunSpec) -> List[Report]:
        """
        The main ``<suite>`` report of checks plus one ``<suite>_<table>``
        report per table.
        """
        summary: Dict[str, Any] = dict(result.summary)
        summary["passed"] = result.passed
        summary["failed_checks"] = [check.name for check in result.failures]
        summary["run"] = {
            "command": spec.command,
            "config": spec.config_path,
            "seed": spec.seed,
            "dtype": spec.dtype,
            "reps": spec.reps,
        }
        volatile = sorted(name for name, table in result.tables.items() if table.volatile)
        if volatile:
            summary["volatile_tables"] = volatile

        reports = [
            Report(result.suite, CHECK_COLUMNS, [check.as_record() for check in result.checks], summary)
        ]
        for name, table in result.tables.items():
            reports.append(Report(f"{result.suite}_{name}", table.columns, table.rows))
        return reports

    def _file_writers(self, spec: RunSpec) -> List[Writer]:
        return [
            self.writer_registry.create(name, directory=spec.out_dir)
            for name in self.config.run.writers
        ]
