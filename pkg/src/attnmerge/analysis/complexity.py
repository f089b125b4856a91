"""Analytic complexity of global, window and granular attention.

All values are exact Python integers. The granular formula carries a
``16 * log2(hw / h0w0) * C`` term which is an integer because the token
ratio between the current and deepest grid is required to be a power of 4.
"""

from dataclasses import dataclass
from typing import Any, Dict, List, Sequence

from .base import AnalysisError


def _exact_log2_power_of_four(ratio: int) -> int:
    if ratio < 1 or ratio & (ratio - 1) or (ratio.bit_length() - 1) % 2:
        raise AnalysisError(f"Token ratio {ratio} is not a power of 4")
    return ratio.bit_length() - 1


@dataclass(frozen=True)
class ComplexityParams:
    """
    Token grid ``h x w`` with ``channels`` channels, window size ``window``
    and deepest grid ``h0 x w0``.
    """

    h: int
    w: int
    channels: int
    window: int = 8
    h0: int = 1
    w0: int = 1

    def __post_init__(self) -> None:
        for name in ("h", "w", "channels", "window", "h0", "w0"):
            value = getattr(self, name)
            if not isinstance(value, int) or value <= 0:
                raise AnalysisError(f"{name} must be a positive integer, got {value!r}")

        if self.tokens < self.deepest_tokens:
            raise AnalysisError(
                f"hw={self.tokens} is smaller than the deepest grid h0w0={self.deepest_tokens}"
            )
        if self.tokens % self.deepest_tokens:
            raise AnalysisError(
                f"hw={self.tokens} is not a multiple of h0w0={self.deepest_tokens}"
            )
        _exact_log2_power_of_four(self.tokens // self.deepest_tokens)

    @property
    def tokens(self) -> int:
        return self.h * self.w

    @property
    def deepest_tokens(self) -> int:
        return self.h0 * self.w0


def _projection_term(p: ComplexityParams) -> int:
    return 4 * p.tokens * p.channels**2


def omega_msa(p: ComplexityParams) -> int:
    """``4hwC² + 2(hw)²C``."""
    return _projection_term(p) + 2 * p.tokens**2 * p.channels


def omega_wmsa(p: ComplexityParams) -> int:
    """``4hwC² + 2M²hwC``."""
    return _projection_term(p) + 2 * p.window**2 * p.tokens * p.channels


def omega_gmsa(p: ComplexityParams) -> int:
    """``4hwC² + (h0w0)²C + 16·log2(hw/h0w0)·C``."""
    log_term = _exact_log2_power_of_four(p.tokens // p.deepest_tokens)
    return (
        _projection_term(p)
        + p.deepest_tokens**2 * p.channels
        + 16 * log_term * p.channels
    )


ATTENTION_KINDS = ("msa", "gmsa")


def attention_macs(tokens: int, channels: int, kind: str, batch: int = 1) -> int:
    """
    Hand-derived MACs of one attention forward without output projection.

    Q/K/V projections cost ``3nC²``. Global attention adds ``n²C`` for the
    scores and ``n²C`` for the mixing; granular attention spends ``16C`` on
    each per subregion, ``2 * 16 * (n/4) * C`` in total. The head count does
    not change either figure.

    Raises:
        AnalysisError: On an unknown kind or a token count GMSA cannot group
    """
    if kind not in ATTENTION_KINDS:
        raise AnalysisError(f"Unknown attention kind {kind!r}; expected one of {ATTENTION_KINDS}")
    if tokens <= 0 or channels <= 0 or batch <= 0:
        raise AnalysisError("tokens, channels and batch must be positive")

    projections = 3 * tokens * channels**2
    if kind == "msa":
        mixing = 2 * tokens**2 * channels
    else:
        if tokens % 4:
            raise AnalysisError(f"{tokens} tokens do not group into 2x2 subregions")
        mixing = 2 * 16 * (tokens // 4) * channels
    return batch * (projections + mixing)


@dataclass
class ComplexityRow:
    """Analytic values for one parameter set."""

    params: ComplexityParams
    msa: int
    wmsa: int
    gmsa: int

    @property
    def gmsa_over_msa(self) -> float:
        return self.gmsa / self.msa

    @property
    def wmsa_over_msa(self) -> float:
        return self.wmsa / self.msa

    def as_record(self) -> Dict[str, Any]:
        p = self.params
        return {
            "h": p.h,
            "w": p.w,
            "channels": p.channels,
            "window": p.window,
            "h0": p.h0,
            "w0": p.w0,
            "omega_msa": self.msa,
            "omega_wmsa": self.wmsa,
            "omega_gmsa": self.gmsa,
            "gmsa_over_msa": self.gmsa_over_msa,
            "wmsa_over_msa": self.wmsa_over_msa,
        }


SWEEP_COLUMNS = (
    "h",
    "w",
    "channels",
    "window",
    "h0",
    "w0",
    "omega_msa",
    "omega_wmsa",
    "omega_gmsa",
    "gmsa_over_msa",
    "wmsa_over_msa",
)


@dataclass
class ComplexityReport:
    """Sweep of analytic Ω values over a list of configurations."""

    rows: List[ComplexityRow]

    def records(self) -> List[Dict[str, Any]]:
        return [row.as_record() for row in self.rows]

    def ordering_holds(self) -> bool:
        """GMSA < W-MSA < MSA on every row."""
        return all(row.gmsa < row.wmsa < row.msa for row in self.rows)

    def ratio_decreasing(self) -> bool:
        """GMSA/MSA strictly decreases along the sweep."""
        ratios = [row.gmsa_over_msa for row in self.rows]
        return all(b < a for a, b in zip(ratios, ratios[1:]))


def evaluate(p: ComplexityParams) -> ComplexityRow:
    return ComplexityRow(p, omega_msa(p), omega_wmsa(p), omega_gmsa(p))


def sweep(params: Sequence[ComplexityParams]) -> ComplexityReport:
    """
    Evaluate every parameter set.

    Raises:
        AnalysisError: If ``params`` is empty
    """
    if not params:
        raise AnalysisError("Complexity sweep needs at least one parameter set")
    return ComplexityReport([evaluate(p) for p in params])


def square_sweep(
    sizes: Sequence[int], channels: int, window: int, deepest: int
) -> ComplexityReport:
    """Sweep over square grids ``h = w = size`` with a square deepest grid."""
    return sweep([ComplexityParams(s, s, channels, window, deepest, deepest) for s in sizes])
