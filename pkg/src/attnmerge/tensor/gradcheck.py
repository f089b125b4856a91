"""Central finite differences as an independent oracle for :func:`backward`."""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence

import numpy as np

from .base import Tensor
from .tape import GradTape, backward

logger = logging.getLogger(__name__)


class GradCheckError(Exception):
    """Raised when a finite-difference evaluation cannot be completed."""

    pass


def finite_difference_grad(
    f: Callable[[np.ndarray], float],
    p: Tensor,
    epsilon: float = 1e-4,
    relative_step: bool = True,
    coords: Optional[Sequence[int]] = None,
) -> Tensor:
    """
    Central-difference gradient of a scalar function of ``p``.

    ``f`` receives a perturbed copy of ``p``'s buffer. With
    ``relative_step`` the step for coordinate i is
    ``epsilon * max(1, |p_i|)``; otherwise it is ``epsilon``.

    Args:
        f: Scalar function of an array shaped like ``p``
        p: Point to differentiate at
        epsilon: Base step, must be positive
        relative_step: Scale the step by the coordinate magnitude
        coords: Flat coordinates to evaluate (all when None); others stay 0

    Returns:
        Tensor shaped like ``p``

    Raises:
        GradCheckError: If ``epsilon`` is not positive or ``f`` returns a
            non-finite value (the offending coordinate is reported)
    """
    if epsilon <= 0:
        raise GradCheckError(f"epsilon must be positive, got {epsilon}")

    base = np.array(p.numpy(), dtype=p.dtype, copy=True)
    flat = base.reshape(-1)
    grad = np.zeros_like(flat)
    indices = range(flat.size) if coords is None else coords

    for i in indices:
        original = flat[i]
        step = epsilon * max(1.0, abs(float(original))) if relative_step else epsilon

        try:
            flat[i] = original + step
            f_plus = float(f(base.copy()))
            flat[i] = original - step
            f_minus = float(f(base.copy()))
        finally:
            flat[i] = original

        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            coordinate = tuple(int(c) for c in np.unravel_index(i, p.shape))
            raise GradCheckError(
                f"non-finite function value at coordinate {coordinate} "
                f"(f+={f_plus}, f-={f_minus})"
            )

        grad[i] = (f_plus - f_minus) / (2.0 * step)

    return Tensor(grad.reshape(p.shape), dtype=p.dtype)


def relative_error(
    analytic: np.ndarray, numeric: np.ndarray, abs_floor: float = 1e-6
) -> np.ndarray:
    """``|a - n| / max(|a|, |n|, abs_floor)`` elementwise."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), abs_floor)
    return np.abs(analytic - numeric) / denom


@dataclass
class ParamCheck:
    """Comparison outcome for one parameter tensor."""

    name: str
    size: int
    checked: int
    max_rel_error: float
    worst_index: tuple
    analytic_norm: float


@dataclass
class GradCheckReport:
    """Outcome of :func:`check_gradients` across all parameters."""

    tolerance: float
    params: List[ParamCheck] = field(default_factory=list)

    @property
    def worst(self) -> ParamCheck:
        return max(self.params, key=lambda entry: entry.max_rel_error)

    @property
    def passed(self) -> bool:
        return all(entry.max_rel_error < self.tolerance for entry in self.params)


def check_gradients(
    loss_fn: Callable[[Mapping[str, Tensor]], Tensor],
    params: Mapping[str, Tensor],
    epsilon: float = 1e-4,
    tolerance: float = 1e-5,
    abs_floor: float = 1e-6,
    max_coords_per_param: int = 0,
    rng: Optional[np.random.Generator] = None,
) -> GradCheckReport:
    """
    Compare :func:`backward` against central differences for every parameter.

    Args:
        loss_fn: Maps a name->tensor parameter mapping to a scalar loss
        params: Parameters to differentiate with respect to
        epsilon: Base finite-difference step (relative to ``max(1, |p|)``)
        tolerance: Relative error threshold for ``passed``
        abs_floor: Denominator floor of the relative error
        max_coords_per_param: Check at most this many coordinates per
            parameter, sampled with ``rng``; 0 checks all
        rng: Generator used for coordinate sampling

    Raises:
        GradCheckError: If ``params`` is empty
    """
    if not params:
        raise GradCheckError("gradient check needs at least one parameter")

    with GradTape() as tape:
        loss = loss_fn(params)
    grads = backward(tape, loss)

    rng = rng or np.random.default_rng(0)
    report = GradCheckReport(tolerance=tolerance)

    for name, p in params.items():
        analytic = grads[p]

        coords: Optional[np.ndarray] = None
        if 0 < max_coords_per_param < p.size:
            coords = np.sort(rng.choice(p.size, size=max_coords_per_param, replace=False))

        def perturbed_loss(values: np.ndarray, name: str = name, dtype=p.dtype) -> float:
            trial = dict(params)
            trial[name] = Tensor(values, dtype=dtype, name=name)
            return loss_fn(trial).item()

        numeric = finite_difference_grad(perturbed_loss, p, epsilon, coords=coords).numpy()

        selected = np.arange(p.size) if coords is None else coords
        errors = relative_error(
            analytic.reshape(-1)[selected], numeric.reshape(-1)[selected], abs_floor
        )
        worst = int(np.argmax(errors))
        report.params.append(
            ParamCheck(
                name=name,
                size=p.size,
                checked=int(selected.size),
                max_rel_error=float(errors[worst]),
                worst_index=tuple(int(c) for c in np.unravel_index(int(selected[worst]), p.shape)),
                analytic_norm=float(np.linalg.norm(analytic)),
            )
        )
        logger.debug("gradcheck %s: max rel error %.3e", name, errors[worst])

    return report
