"""Reverse-mode differentiation tape."""

import logging
from contextvars import ContextVar
from dataclasses import dataclass
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .base import TapeError, Tensor

logger = logging.getLogger(__name__)

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_ACTIVE_TAPE: ContextVar[Optional["GradTape"]] = ContextVar("attnmerge_tape", default=None)


@dataclass
class TapeEntry:
    """One recorded primitive: inputs, output and its vector-Jacobian product."""

    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward: BackwardFn


class GradTape:
    """
    Records primitives executed while active.

    Usage::

        with GradTape() as tape:
            loss = model_loss(params)
        grads = backward(tape, loss)

    Operations are appended in execution order, which is a topological order
    of the computation; :func:`backward` replays them in exact reverse. A tape
    belongs to one forward/backward pass on one thread.
    """

    def __init__(self) -> None:
        self._entries: List[TapeEntry] = []
        self._generation = 0
        self._token = None

    def __enter__(self) -> "GradTape":
        self._token = _ACTIVE_TAPE.set(self)
        return self

    def __exit__(self, *exc_info) -> None:
        _ACTIVE_TAPE.reset(self._token)
        self._token = None

    @property
    def generation(self) -> int:
        return self._generation

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[TapeEntry]:
        return iter(self._entries)

    def ops(self) -> List[str]:
        """Recorded op names in execution order."""
        return [entry.op for entry in self._entries]

    def record(
        self,
        op: str,
        inputs: Tuple[Tensor, ...],
        output: Tensor,
        backward_fn: BackwardFn,
    ) -> None:
        output._origin = (self, self._generation)
        self._entries.append(TapeEntry(op, inputs, output, backward_fn))

    def reset(self) -> None:
        """Drop every entry; tensors produced before the reset become unusable for backward."""
        self._entries.clear()
        self._generation += 1


def active_tape() -> Optional[GradTape]:
    return _ACTIVE_TAPE.get()


class Gradients:
    """
    Result of :func:`backward`: gradient arrays keyed by tensor identity.

    ``grads[param]`` returns the accumulated gradient for ``param`` (zeros if
    the loss does not depend on it).
    """

    def __init__(self, accumulators: Dict[int, np.ndarray], tensors: Dict[int, Tensor]) -> None:
        self._accumulators = accumulators
        self._tensors = tensors

    def __getitem__(self, tensor: Tensor) -> np.ndarray:
        grad = self._accumulators.get(id(tensor))
        if grad is None:
            return np.zeros(tensor.shape, dtype=tensor.dtype)
        return grad

    def __contains__(self, tensor: Tensor) -> bool:
        return id(tensor) in self._accumulators

    def parameters(self) -> List[Tensor]:
        """Leaf tensors with ``requires_grad`` that received a gradient."""
        return [
            t for t in self._tensors.values() if t.requires_grad and t._origin is None
        ]

    def by_name(self) -> Dict[str, np.ndarray]:
        """Gradients of named leaf tensors, keyed by name."""
        return {t.name: self[t] for t in self.parameters() if t.name is not None}


def _is_stale(tensor: Tensor, tape: GradTape) -> bool:
    if tensor._origin is None:
        return False
    origin_tape, generation = tensor._origin
    return origin_tape is tape and generation != tape.generation


def backward(tape: GradTape, loss: Tensor) -> Gradients:
    """
    Propagate d(loss)/d(x) back through ``tape``.

    Args:
        tape: Tape that recorded the computation of ``loss``
        loss: Scalar (single-element) tensor

    Returns:
        Gradients for every tensor reached, including all recorded parameters

    Raises:
        TapeError: If ``loss`` is not scalar, was not produced on ``tape``,
            or depends on a tensor recorded before a ``tape.reset()``
    """
    if loss.size != 1:
        raise TapeError(f"backward needs a scalar loss, got shape {loss.shape}")

    if loss._origin is None:
        raise TapeError("loss was not produced by a recorded operation")

    origin_tape, generation = loss._origin
    if origin_tape is not tape:
        raise TapeError("loss was recorded on a different tape")

    if generation != tape.generation:
        raise TapeError("loss was recorded before the tape was reset")

    accumulators: Dict[int, np.ndarray] = {id(loss): np.ones(loss.shape, dtype=loss.dtype)}
    tensors: Dict[int, Tensor] = {id(loss): loss}

    for entry in reversed(tape._entries):
        grad_out = accumulators.get(id(entry.output))
        if grad_out is None:
            continue

        grad_inputs = entry.backward(grad_out)
        for tensor, grad in zip(entry.inputs, grad_inputs):
            if grad is None or not tensor.requires_grad:
                continue

            if _is_stale(tensor, tape):
                raise TapeError(
                    f"{entry.op} input of shape {tensor.shape} was recorded before the tape was reset"
                )

            if grad.shape != tensor.shape:
                raise TapeError(
                    f"{entry.op} produced gradient of shape {grad.shape} "
                    f"for input of shape {tensor.shape}"
                )

            key = id(tensor)
            if key in accumulators:
                accumulators[key] = accumulators[key] + grad
            else:
                accumulators[key] = np.array(grad, dtype=tensor.dtype)
                tensors[key] = tensor

    logger.debug("backward visited %d recorded ops", len(tape))
    return Gradients(accumulators, tensors)
