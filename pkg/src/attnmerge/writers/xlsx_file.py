"""XLSX report writer."""

from pathlib import Path

from openpyxl import Workbook

from .base import Report, Writer, WriterError
from .registry import writer_registry

# Excel limits sheet titles to 31 characters
MAX_SHEET_TITLE = 31


def _cell_value(value):
    if value is None or isinstance(value, (int, float, str, bool)):
        return value
    return str(value)


@writer_registry.register_decorator("xlsx_file")
class XLSXWriter(Writer):
    """
    Writer for Excel (XLSX) files.

    The report rows go to one sheet with a header row; the summary goes to a
    second two-column sheet.
    """

    def __init__(self, directory: str | Path, write_summary: bool = True):
        self.directory = Path(directory)
        self.write_summary = write_summary

    def write(self, report: Report) -> Path:
        path = self.directory / f"{report.name}.xlsx"

        workbook = Workbook()
        sheet = workbook.active
        sheet.title = report.name[:MAX_SHEET_TITLE]
        columns = list(report.columns)

        for col_idx, column in enumerate(columns, start=1):
            sheet.cell(row=1, column=col_idx, value=column)
        for row_idx, row in enumerate(report.rows, start=2):
            for col_idx, column in enumerate(columns, start=1):
                sheet.cell(row=row_idx, column=col_idx, value=_cell_value(row[column]))

        if self.write_summary and report.summary:
            summary = workbook.create_sheet("summary")
            for row_idx, (key, value) in enumerate(sorted(report.summary.items()), start=1):
                summary.cell(row=row_idx, column=1, value=key)
                summary.cell(row=row_idx, column=2, value=_cell_value(value))

        try:
            self.directory.mkdir(parents=True, exist_ok=True)
            workbook.save(path)
        except OSError as e:
            raise WriterError(f"Failed to write {path}: {e}") from e
        return path
