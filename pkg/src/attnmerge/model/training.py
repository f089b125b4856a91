"""AdamW, the poly learning-rate schedule and single training steps."""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from attnmerge.config import TrainingConfig
from attnmerge.tensor import GradTape, Gradients, Tensor, backward

from .base import ModelError
from .network import Network
from .synthetic import SyntheticBatch

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PolySchedule:
    """
    ``lr_t = base_lr * w_t * (1 - t / max_steps) ** power`` for ``t`` in ``[0, max_steps)``.

    ``w_t = min((t + 1) / warmup_steps, 1)`` ramps the rate up linearly over the
    first ``warmup_steps`` steps; with ``warmup_steps = 0`` it is always 1.
    """

    base_lr: float
    max_steps: int
    power: float = 0.9
    warmup_steps: int = 0

    def __call__(self, step: int) -> float:
        if step < 0:
            raise ModelError(f"Schedule step must be non-negative, got {step}")
        progress = min(step, self.max_steps) / self.max_steps
        warmup = min((step + 1) / self.warmup_steps, 1.0) if self.warmup_steps > 0 else 1.0
        return self.base_lr * warmup * (1.0 - progress) ** self.power


@dataclass
class AdamW:
    """
    Adam with decoupled weight decay.

    Per parameter: ``p <- p * (1 - lr * wd)`` then
    ``p <- p - lr * m_hat / (sqrt(v_hat) + eps)``.
    """

    lr: float = 1e-4
    weight_decay: float = 0.01
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    step_count: int = 0
    _m: Dict[str, np.ndarray] = field(default_factory=dict, repr=False)
    _v: Dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    @classmethod
    def from_config(cls, cfg: TrainingConfig) -> "AdamW":
        if cfg.optimizer != "adamw":
            raise ModelError(f"Unsupported optimizer {cfg.optimizer!r}; only 'adamw' is available")
        return cls(cfg.lr, cfg.weight_decay, tuple(cfg.betas), cfg.eps)

    def step(self, network: Network, grads: Gradients, lr: Optional[float] = None) -> None:
        """Update every parameter of ``network`` in place of its tensor."""
        lr = self.lr if lr is None else lr
        b1, b2 = self.betas
        self.step_count += 1
        t = self.step_count

        for path, param in network.named_parameters().items():
            g = grads[param]
            m = self._m.get(path)
            v = self._v.get(path)
            if m is None:
                m = np.zeros_like(g)
                v = np.zeros_like(g)

            m = b1 * m + (1.0 - b1) * g
            v = b2 * v + (1.0 - b2) * g * g
            self._m[path], self._v[path] = m, v

            m_hat = m / (1.0 - b1**t)
            v_hat = v / (1.0 - b2**t)
            p = param.numpy() * (1.0 - lr * self.weight_decay)
            p = p - lr * m_hat / (np.sqrt(v_hat) + self.eps)
            network.set_parameter(path, Tensor(p, dtype=param.dtype, requires_grad=True, name=path))


def train_step(
    network: Network,
    batch: SyntheticBatch,
    optimizer: AdamW,
    lr: Optional[float] = None,
) -> float:
    """
    One cross-entropy forward/backward pass and optimizer update.

    Returns:
        The loss before the update

    Raises:
        ModelError: If a label lies outside ``[0, classes)``
    """
    with GradTape() as tape:
        loss = network.loss(batch.image, batch.labels)
    grads = backward(tape, loss)
    optimizer.step(network, grads, lr)
    return loss.item()


@dataclass
class TrainingHistory:
    """Per-step loss and learning rate."""

    losses: List[float] = field(default_factory=list)
    lrs: List[float] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.losses[-1]

    def records(self) -> List[Dict[str, float]]:
        return [
            {"step": i, "lr": lr, "loss": loss}
            for i, (lr, loss) in enumerate(zip(self.lrs, self.losses))
        ]


def fit(
    network: Network,
    batch: SyntheticBatch,
    cfg: TrainingConfig,
    steps: Optional[int] = None,
) -> TrainingHistory:
    """
    Overfit a single batch for ``steps`` (default ``cfg.max_steps``) steps
    under the poly schedule.
    """
    steps = cfg.max_steps if steps is None else steps
    optimizer = AdamW.from_config(cfg)
    schedule = PolySchedule(cfg.lr, cfg.max_steps, cfg.poly_power, cfg.warmup_steps)
    history = TrainingHistory()

    for step in range(steps):
        lr = schedule(step)
        loss = train_step(network, batch, optimizer, lr)
        history.losses.append(loss)
        history.lrs.append(lr)
        if step % 50 == 0:
            logger.debug("step %d lr %.3e loss %.6f", step, lr, loss)

    return history
