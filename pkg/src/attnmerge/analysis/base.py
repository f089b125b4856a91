"""Errors shared by the analysis package."""


class AnalysisError(Exception):
    """Raised on invalid complexity parameters or label rasters."""

    pass
