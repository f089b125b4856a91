"""Stdout writer implementation."""

from typing import Any

import click

from .base import Report, Writer, WriterError
from .registry import writer_registry


def _format(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


@writer_registry.register_decorator("stdout")
class StdoutWriter(Writer):
    """
    Human-readable summary on stdout.

    Useful after the machine-readable files have been written.
    """

    def __init__(self, show_rows: bool = False):
        """
        Initialize stdout writer.

        Args:
            show_rows: If True, print every report row after the summary
        """
        self.show_rows = show_rows

    def write(self, report: Report) -> None:
        try:
            click.echo(f"[{report.name}]")
            for key, value in sorted(report.summary.items()):
                click.echo(f"  {key}: {_format(value)}")
            if self.show_rows:
                click.echo("  " + "\t".join(report.columns))
                for row in report.rows:
                    click.echo("  " + "\t".join(_format(row[c]) for c in report.columns))
        except Exception as e:
            raise WriterError(f"Failed to write to stdout: {e}") from e
