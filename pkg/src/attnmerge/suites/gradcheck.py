"""Gradient check suite: end-to-end finite differences on a small network."""

import logging

import numpy as np

from attnmerge.model import ModelError, build_network
from attnmerge.tensor import GradCheckError, Tensor, check_gradients

from .base import CheckResult, Suite, SuiteError, SuiteResult, Table
from .registry import suite_registry

logger = logging.getLogger(__name__)

PARAM_COLUMNS = ("parameter", "size", "checked", "max_rel_error", "worst_index", "analytic_norm")


@suite_registry.register_decorator("gradcheck")
class GradcheckSuite(Suite):
    """
    Compare the tape's gradients of the pixel cross-entropy against central
    differences, parameter by parameter.

    Meaningful in ``f64`` only; an ``f32`` run is allowed but will not meet a
    1e-5 relative tolerance.
    """

    name = "gradcheck"

    def run(self, seed: int) -> SuiteResult:
        model_cfg = self.config.model
        cfg = self.config.gradcheck
        if model_cfg.dtype != "f64":
            logger.warning("gradient check in %s; finite differences will be noisy", model_cfg.dtype)

        rng = np.random.default_rng(seed)
        try:
            network = build_network(model_cfg, seed)
        except ModelError as e:
            raise SuiteError(f"Cannot build the network: {e}") from e

        image = Tensor.randn(
            (1, model_cfg.input_h, model_cfg.input_w, model_cfg.in_channels), rng, model_cfg.dtype
        )
        labels = rng.integers(0, model_cfg.classes, size=(1, model_cfg.input_h, model_cfg.input_w))

        try:
            report = check_gradients(
                lambda params: network.loss(image, labels, params),
                network.named_parameters(),
                epsilon=cfg.epsilon_scale,
                tolerance=cfg.tolerance,
                abs_floor=cfg.abs_floor,
                max_coords_per_param=cfg.max_coords_per_param,
                rng=rng,
            )
        except (GradCheckError, ModelError) as e:
            raise SuiteError(f"Gradient check failed to run: {e}") from e

        table = Table(PARAM_COLUMNS)
        for entry in report.params:
            table.rows.append(
                {
                    "parameter": entry.name,
                    "size": entry.size,
                    "checked": entry.checked,
                    "max_rel_error": entry.max_rel_error,
                    "worst_index": list(entry.worst_index),
                    "analytic_norm": entry.analytic_norm,
                }
            )

        worst = report.worst
        check = CheckResult(
            "gradient_match",
            report.passed,
            worst.max_rel_error,
            cfg.tolerance,
            sum(entry.checked for entry in report.params),
            "" if report.passed else f"{worst.name} at {list(worst.worst_index)}",
        )

        result = SuiteResult(self.name, [check], {"params": table})
        result.summary = {
            "suite": self.name,
            "seed": seed,
            "dtype": model_cfg.dtype,
            "parameter_count": network.parameter_count(),
            "parameters_checked": len(report.params),
            "worst_param": worst.name,
            "worst_rel_error": worst.max_rel_error,
            "passed": result.passed,
        }
        return result
