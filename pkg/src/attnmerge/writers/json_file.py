"""JSON report writer."""

import json
from pathlib import Path

from .base import Report, Writer, WriterError
from .registry import writer_registry


@writer_registry.register_decorator("json_file")
class JSONWriter(Writer):
    """
    Writer for JSON files.

    Keys are sorted and floats use their shortest round-trip form, so equal
    reports serialize to identical bytes.
    """

    def __init__(self, directory: str | Path, indent: int = 2, encoding: str = "utf-8"):
        self.directory = Path(directory)
        self.indent = indent
        self.encoding = encoding

    def write(self, report: Report) -> Path:
        path = self.directory / f"{report.name}.json"
        try:
            text = json.dumps(report.as_dict(), indent=self.indent, sort_keys=True)
        except (TypeError, ValueError) as e:
            raise WriterError(f"Report '{report.name}' is not JSON serializable: {e}") from e

        try:
            self.directory.mkdir(parents=True, exist_ok=True)
            path.write_text(text + "\n", encoding=self.encoding)
        except OSError as e:
            raise WriterError(f"Failed to write {path}: {e}") from e
        return path
