"""attnmerge - granular attention, attention-map merging and their verification harness."""

__version__ = "0.1.0"
