"""Smoke-training suite: overfit one synthetic batch."""

import logging
import math
from dataclasses import replace

import numpy as np

from attnmerge.model import SYNTHETIC_CLASSES, ModelError, build_network, fit, rectangle_batch

from .base import CheckResult, Suite, SuiteError, SuiteResult, Table
from .registry import suite_registry

logger = logging.getLogger(__name__)

LOSS_COLUMNS = ("step", "lr", "loss")
INITIAL_LOSS_TOLERANCE = 0.01
DECREASING_STEPS = 10


@suite_registry.register_decorator("smoketrain")
class SmokeTrainSuite(Suite):
    """
    Train on a single batch of the rectangle task for ``training.max_steps``
    AdamW steps and record the loss curve.

    The class count is forced to the task's three classes.
    """

    name = "smoketrain"

    def run(self, seed: int) -> SuiteResult:
        training = self.config.training
        model_cfg = replace(self.config.model, classes=SYNTHETIC_CLASSES)
        rng = np.random.default_rng(seed)

        try:
            network = build_network(model_cfg, seed)
            batch = rectangle_batch(
                rng,
                training.batch_size,
                model_cfg.input_h,
                model_cfg.input_w,
                model_cfg.in_channels,
                SYNTHETIC_CLASSES,
                dtype=model_cfg.dtype,
            )
            history = fit(network, batch, training)
        except ModelError as e:
            raise SuiteError(f"Smoke training failed: {e}") from e

        losses = history.losses
        uniform = math.log(SYNTHETIC_CLASSES)
        initial_error = abs(losses[0] - uniform) / uniform

        result = SuiteResult(self.name, tables={"loss_curve": Table(LOSS_COLUMNS, history.records())})
        if model_cfg.head_zero_init:
            result.checks.append(
                CheckResult(
                    "initial_loss",
                    initial_error < INITIAL_LOSS_TOLERANCE,
                    initial_error,
                    INITIAL_LOSS_TOLERANCE,
                    detail=f"initial loss {losses[0]:.6f}, ln {SYNTHETIC_CLASSES} = {uniform:.6f}",
                )
            )

        head = losses[: DECREASING_STEPS + 1]
        increases = [i for i, (a, b) in enumerate(zip(head, head[1:]), start=1) if not b < a]
        result.checks.append(
            CheckResult(
                "first_steps_decrease",
                len(head) > DECREASING_STEPS and not increases,
                float(len(increases)),
                0.0,
                max(len(head) - 1, 0),
                "" if not increases else f"loss did not decrease at step(s) {increases}",
            )
        )
        result.checks.append(
            CheckResult(
                "target_loss",
                history.final_loss < training.target_loss,
                history.final_loss,
                training.target_loss,
                len(losses),
            )
        )

        logger.debug("smoke training: %d steps, final loss %.6f", len(losses), history.final_loss)
        result.summary = {
            "suite": self.name,
            "seed": seed,
            "dtype": model_cfg.dtype,
            "steps": len(losses),
            "initial_loss": losses[0],
            "final_loss": history.final_loss,
            "min_loss": min(losses),
            "passed": result.passed,
        }
        return result
