"""Tests for the attnmerge package."""
