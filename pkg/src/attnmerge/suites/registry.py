"""Registry for verification suites."""

from attnmerge.registry import ComponentRegistry

suite_registry = ComponentRegistry("suite")


def get_suite_registry() -> ComponentRegistry:
    """Get the suite registry instance."""
    return suite_registry
