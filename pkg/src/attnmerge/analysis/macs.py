"""Scoped multiply-accumulate counter.

Kernels in :mod:`attnmerge.tensor.ops` report the MACs they execute through
:func:`record_macs`; every counter active in the current execution context
receives the count. Counters are kept in a ``ContextVar`` so threads and
asyncio tasks each see their own stack.
"""

from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass, field
from typing import Dict, Iterator, Tuple


class MacCounterError(Exception):
    """Raised on invalid counter scoping."""

    pass


@dataclass
class MacCounter:
    """Running MAC total for one named scope, broken down by primitive."""

    scope: str
    count: int = 0
    by_primitive: Dict[str, int] = field(default_factory=dict)

    def add(self, primitive: str, macs: int) -> None:
        self.count += macs
        self.by_primitive[primitive] = self.by_primitive.get(primitive, 0) + macs


_ACTIVE: ContextVar[Tuple[MacCounter, ...]] = ContextVar("attnmerge_mac_counters", default=())


@contextmanager
def mac_counter(scope: str) -> Iterator[MacCounter]:
    """
    Count MACs executed inside the ``with`` block.

    Scopes nest; an inner scope's MACs are also added to every enclosing
    scope. Re-entering a scope name that is already active is rejected.

    Raises:
        MacCounterError: If ``scope`` is already active in this context
    """
    active = _ACTIVE.get()
    if any(counter.scope == scope for counter in active):
        raise MacCounterError(f"MAC counter scope '{scope}' is already active")

    counter = MacCounter(scope=scope)
    token = _ACTIVE.set(active + (counter,))
    try:
        yield counter
    finally:
        _ACTIVE.reset(token)


def record_macs(primitive: str, macs: int) -> None:
    """Add ``macs`` to every active counter. No-op when none is active."""
    for counter in _ACTIVE.get():
        counter.add(primitive, int(macs))
