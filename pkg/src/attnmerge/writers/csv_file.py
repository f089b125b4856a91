"""CSV report writer."""

import csv
from pathlib import Path

from .base import Report, Writer, WriterError
from .registry import writer_registry


@writer_registry.register_decorator("csv_file")
class CSVWriter(Writer):
    """
    Writer for CSV files.

    One row per report row, columns in the report's declared order.
    """

    def __init__(self, directory: str | Path, delimiter: str = ",", encoding: str = "utf-8"):
        """
        Initialize CSV writer.

        Args:
            directory: Output directory
            delimiter: Field delimiter
            encoding: Text encoding
        """
        self.directory = Path(directory)
        self.delimiter = delimiter
        self.encoding = encoding

    def write(self, report: Report) -> Path:
        path = self.directory / f"{report.name}.csv"
        try:
            self.directory.mkdir(parents=True, exist_ok=True)
            with open(path, "w", encoding=self.encoding, newline="") as f:
                writer = csv.DictWriter(
                    f, fieldnames=list(report.columns), delimiter=self.delimiter, lineterminator="\n"
                )
                writer.writeheader()
                for row in report.rows:
                    writer.writerow(row)
        except OSError as e:
            raise WriterError(f"Failed to write {path}: {e}") from e
        return path
