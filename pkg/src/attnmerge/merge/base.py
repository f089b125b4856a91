"""Errors shared by the merge package."""


class MergeError(Exception):
    """Raised on invalid mask templates, orderings or merge operands."""

    pass
