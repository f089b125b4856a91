"""Report type and the abstract writer interface."""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence


class WriterError(Exception):
    """Raised when a writer encounters an error."""

    pass


@dataclass
class Report:
    """
    Named table plus a nested summary object.

    ``columns`` fixes the column order of tabular outputs; every row must
    provide exactly those keys.
    """

    name: str
    columns: Sequence[str]
    rows: List[Dict[str, Any]] = field(default_factory=list)
    summary: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        expected = set(self.columns)
        for i, row in enumerate(self.rows):
            if set(row) != expected:
                raise WriterError(
                    f"Report '{self.name}' row {i} has keys {sorted(row)}, "
                    f"expected {sorted(expected)}"
                )

    def as_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "columns": list(self.columns),
            "rows": self.rows,
            "summary": self.summary,
        }


class Writer(ABC):
    """
    Abstract base class for report writers.

    File writers place ``<report.name>.<suffix>`` inside their directory.
    """

    @abstractmethod
    def write(self, report: Report) -> Optional[Path]:
        """
        Write a report.

        Returns:
            Path of the written file, or None for stream writers

        Raises:
            WriterError: If writing fails
        """
        pass
