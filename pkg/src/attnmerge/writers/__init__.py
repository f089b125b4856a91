"""Report writers: CSV, JSON, XLSX and stdout."""

from .base import Report, Writer, WriterError
from .registry import get_writer_registry, writer_registry
from .csv_file import CSVWriter
from .json_file import JSONWriter
from .stdout import StdoutWriter
from .xlsx_file import XLSXWriter

__all__ = [
    "Report",
    "Writer",
    "WriterError",
    "writer_registry",
    "get_writer_registry",
    "CSVWriter",
    "JSONWriter",
    "StdoutWriter",
    "XLSXWriter",
]
