"""Bench suite: analytic complexity sweep, measured MACs and throughput."""

import logging
import time
from typing import List, Tuple

import numpy as np

from attnmerge.analysis import AnalysisError, SWEEP_COLUMNS, attention_macs, mac_counter, square_sweep
from attnmerge.attention import GranularSelfAttention, MultiHeadSelfAttention
from attnmerge.model import ModelError, Network, build_network, describe
from attnmerge.tensor import Tensor

from .base import CheckResult, Suite, SuiteError, SuiteResult, Table
from .registry import suite_registry

logger = logging.getLogger(__name__)

MODEL_COLUMNS = ("component", "parameters", "macs")
ACCOUNTING_COLUMNS = ("module", "tokens", "channels", "heads", "measured", "analytic")
THROUGHPUT_COLUMNS = ("batch", "forwards", "seconds_per_forward", "images_per_second")

# (kind, grid extent, channels, heads)
ACCOUNTING_CASES: Tuple[Tuple[str, int, int, int], ...] = (
    ("gmsa", 8, 16, 1),
    ("gmsa", 8, 16, 2),
    ("gmsa", 4, 32, 4),
    ("msa", 4, 16, 1),
    ("msa", 4, 16, 2),
    ("msa", 2, 32, 4),
)


def measure_attention(kind: str, extent: int, channels: int, heads: int, rng: np.random.Generator, dtype: str) -> int:
    """Counted MACs of one attention forward over an ``extent x extent`` grid."""
    tokens = Tensor.randn((1, extent * extent, channels), rng, dtype)
    if kind == "gmsa":
        module = GranularSelfAttention(channels, heads, rng, dtype)
        with mac_counter("attention") as counter:
            module.block_output(tokens)
    else:
        module = MultiHeadSelfAttention(channels, heads, (extent, extent), rng, dtype)
        with mac_counter("attention") as counter:
            module(tokens)
    return counter.count


def component_macs(network: Network, image: Tensor) -> List[Tuple[str, int]]:
    """Counted MACs per top-level component for one forward pass."""
    counts: List[Tuple[str, int]] = []
    with mac_counter("encoder") as c:
        pyramid = network.encode(image)
    counts.append(("encoder", c.count))
    with mac_counter("deepest") as c:
        state = network.decoder_deepest(pyramid[3])
    counts.append(("deepest", c.count))
    for index in (1, 2):
        with mac_counter(f"level{index}") as c:
            state = network.decoder_level(state, pyramid[3 - index], index)
        counts.append((f"level{index}", c.count))
    with mac_counter("final") as c:
        fused = network.decoder_final(state, pyramid[0])
    counts.append(("final", c.count))
    with mac_counter("head") as c:
        network.mlp_head(fused)
    counts.append(("head", c.count))
    return counts


@suite_registry.register_decorator("bench")
class BenchSuite(Suite):
    """
    Complexity sweep of the three attention formulas, per-component
    parameter and MAC counts of the configured network, the
    measured-versus-analytic attention accounting, and wall-clock throughput.

    Throughput rows are volatile: they vary between otherwise identical runs.
    """

    name = "bench"

    def run(self, seed: int) -> SuiteResult:
        bench = self.config.bench
        model_cfg = self.config.model
        rng = np.random.default_rng(seed)
        result = SuiteResult(self.name)

        try:
            report = square_sweep(bench.sweep_sizes, bench.channels, bench.window, bench.deepest)
        except AnalysisError as e:
            raise SuiteError(f"Invalid complexity sweep: {e}") from e

        result.tables["complexity"] = Table(SWEEP_COLUMNS, report.records())
        result.checks.append(CheckResult("sweep_ordering", report.ordering_holds(), cases=len(report.rows)))
        result.checks.append(
            CheckResult("sweep_ratio_decreasing", report.ratio_decreasing(), cases=len(report.rows))
        )

        accounting = Table(ACCOUNTING_COLUMNS)
        worst = 0
        for kind, extent, channels, heads in ACCOUNTING_CASES:
            measured = measure_attention(kind, extent, channels, heads, rng, model_cfg.dtype)
            analytic = attention_macs(extent * extent, channels, kind)
            worst = max(worst, abs(measured - analytic))
            accounting.rows.append(
                {
                    "module": kind,
                    "tokens": extent * extent,
                    "channels": channels,
                    "heads": heads,
                    "measured": measured,
                    "analytic": analytic,
                }
            )
        result.tables["attention_macs"] = accounting
        result.checks.append(
            CheckResult("attention_mac_accounting", worst == 0, float(worst), 0.0, len(ACCOUNTING_CASES))
        )

        try:
            network = build_network(model_cfg, seed)
        except ModelError as e:
            raise SuiteError(f"Cannot build the network: {e}") from e

        image = Tensor.randn((1, model_cfg.input_h, model_cfg.input_w, model_cfg.in_channels), rng, model_cfg.dtype)
        parameters = describe(network)
        counts = component_macs(network, image)
        model_rows = [
            {"component": name, "parameters": parameters[name], "macs": macs} for name, macs in counts
        ]
        total_macs = sum(macs for _, macs in counts)
        model_rows.append({"component": "total", "parameters": parameters["total"], "macs": total_macs})
        result.tables["model"] = Table(MODEL_COLUMNS, model_rows)

        result.tables["throughput"] = Table(THROUGHPUT_COLUMNS, [self._throughput(network, image)], volatile=True)

        result.summary = {
            "suite": self.name,
            "seed": seed,
            "dtype": model_cfg.dtype,
            "decoder_attention": model_cfg.decoder_attention,
            "parameter_count": parameters["total"],
            "network_macs": total_macs,
            "sweep_rows": len(report.rows),
            "passed": result.passed,
        }
        return result

    def _throughput(self, network: Network, image: Tensor) -> dict:
        forwards = self.config.bench.throughput_reps
        network.forward(image)  # warm-up
        start = time.perf_counter()
        for _ in range(forwards):
            network.forward(image)
        elapsed = (time.perf_counter() - start) / forwards
        logger.debug("forward pass: %.4f s", elapsed)
        return {
            "batch": image.shape[0],
            "forwards": forwards,
            "seconds_per_forward": elapsed,
            "images_per_second": image.shape[0] / elapsed if elapsed > 0 else float("inf"),
        }
