"""Oracle suite: granular attention, merging and DCM against brute force."""

import logging
from itertools import product
from typing import Iterator, List, Tuple

import numpy as np

from attnmerge.attention import (
    AttentionMap,
    Ordering,
    QKVProjection,
    RPBTable,
    dense_masked_attention_map,
    gmsa_assemble,
    gmsa_subregion_maps,
    table_size,
)
from attnmerge.config import Config
from attnmerge.merge import (
    MaskTemplate,
    OrderingSpec,
    build_mask,
    dcm,
    dcm_attention,
    inverse_dcm,
    merge_maps,
    upsample_attention,
)
from attnmerge.tensor import Tensor

from .base import CheckResult, Suite, SuiteResult, Table
from .registry import suite_registry

logger = logging.getLogger(__name__)

F32_TOLERANCE = 1e-5
DCM_GOLDEN = (0, 1, 4, 5, 2, 3, 6, 7, 8, 9, 12, 13, 10, 11, 14, 15)


def brute_force_nested_coords(height: int, width: int, depth: int) -> List[Tuple[int, int]]:
    """Nested order by recursive expansion of each coarser token into its 2x2 children."""
    if depth == 0:
        return [(r, c) for r in range(height) for c in range(width)]
    parents = brute_force_nested_coords(height // 2, width // 2, depth - 1)
    return [
        (2 * r + ir, 2 * c + ic)
        for r, c in parents
        for ir in range(2)
        for ic in range(2)
    ]


def random_row_stochastic(rng: np.random.Generator, shape: Tuple[int, ...]) -> np.ndarray:
    x = rng.random(shape) + 1e-3
    return x / x.sum(axis=-1, keepdims=True)


def random_block_stochastic(rng: np.random.Generator, heads: int, tokens: int) -> np.ndarray:
    """Row-stochastic ``[heads, n, n]`` map supported on the diagonal 4x4 blocks."""
    blocks = random_row_stochastic(rng, (heads, tokens // 4, 4, 4))
    out = np.zeros((heads, tokens, tokens))
    for s in range(tokens // 4):
        out[:, 4 * s:4 * s + 4, 4 * s:4 * s + 4] = blocks[:, s]
    return out


def corrupt(mask: MaskTemplate) -> MaskTemplate:
    """Flip the first off-block entry of a block mask to 1."""
    matrix = np.array(mask.matrix, copy=True)
    matrix[0, 4] = 1.0
    matrix.setflags(write=False)
    return MaskTemplate(mask.granularity, mask.size, matrix)


@suite_registry.register_decorator("oracle")
class OracleSuite(Suite):
    """
    Granular attention versus masked dense attention, merging versus an
    elementwise evaluation, and the nested/raster permutation versus
    coordinate enumeration.
    """

    name = "oracle"

    def __init__(self, config: Config, corrupt_mask: bool = False) -> None:
        super().__init__(config)
        self.corrupt_mask = corrupt_mask
        self.dtype = config.model.dtype
        self.tolerance = config.oracle.tolerance if self.dtype == "f64" else F32_TOLERANCE

    def run(self, seed: int) -> SuiteResult:
        rng = np.random.default_rng(seed)
        result = SuiteResult(self.name)
        cases = Table(("family", "case", "max_error"))

        result.checks.append(self._gmsa_equivalence(rng, cases))
        result.checks.extend(self._merge_checks(rng, cases))
        result.checks.extend(self._dcm_checks(rng, cases))

        result.tables["cases"] = cases
        result.summary = {
            "suite": self.name,
            "seed": seed,
            "dtype": self.dtype,
            "max_error": max(c.max_error for c in result.checks),
            "passed": result.passed,
            "failed_checks": [c.name for c in result.failures],
        }
        return result

    # granular attention

    def _grids(self) -> Iterator[Tuple[int, int]]:
        extents = range(2, self.config.oracle.max_grid + 1, 2)
        return product(extents, extents)

    def _gmsa_case(self, rng: np.random.Generator, h: int, w: int, heads: int) -> float:
        channels = heads * self.config.oracle.head_dim
        features = Tensor.randn((1, h, w, channels), rng, self.dtype)
        projections = QKVProjection(channels, heads, rng, self.dtype)
        table_values = Tensor.randn((heads, table_size((2, 2))), rng, self.dtype)

        blocks = gmsa_subregion_maps(features, projections, RPBTable.granular(table_values))
        assembled = gmsa_assemble(blocks).numpy()[0]

        # dense reference over the same subregion-major token order
        coords = OrderingSpec(h, w, 1).coords()
        x = features.numpy()[0][coords[:, 0], coords[:, 1]]
        d = channels // heads

        def per_head(weight: Tensor) -> np.ndarray:
            return (x @ weight.numpy()).reshape(-1, heads, d).transpose(1, 0, 2)

        q, k = per_head(projections.q.weight), per_head(projections.k.weight)
        rel = coords[:, None, :] - coords[None, :, :]
        allowed = (coords[:, None, 0] // 2 == coords[None, :, 0] // 2) & (
            coords[:, None, 1] // 2 == coords[None, :, 1] // 2
        )
        index = (np.clip(rel[..., 0], -1, 1) + 1) * 3 + (np.clip(rel[..., 1], -1, 1) + 1)
        bias = np.where(allowed, table_values.numpy()[:, index], 0.0)
        reference = dense_masked_attention_map(q, k, bias, allowed)
        return float(np.max(np.abs(assembled - reference)))

    def _gmsa_equivalence(self, rng: np.random.Generator, cases: Table) -> CheckResult:
        oracle = self.config.oracle
        worst = 0.0
        count = 0
        for (h, w), heads in product(self._grids(), range(1, oracle.max_heads + 1)):
            family_worst = 0.0
            for _ in range(oracle.seeds):
                family_worst = max(family_worst, self._gmsa_case(rng, h, w, heads))
                count += 1
            cases.rows.append(
                {"family": "gmsa", "case": f"{h}x{w} heads={heads}", "max_error": family_worst}
            )
            worst = max(worst, family_worst)

        logger.debug("gmsa oracle: %d cases, max error %.3e", count, worst)
        return CheckResult("gmsa_block_equivalence", worst < self.tolerance, worst, self.tolerance, count)

    # merging

    def _merge_checks(self, rng: np.random.Generator, cases: Table) -> List[CheckResult]:
        oracle = self.config.oracle
        exact = CheckResult("merge_elementwise", True, 0.0, 0.0, 0)
        stochastic = CheckResult("merge_row_stochastic", True, 0.0, oracle.row_sum_tolerance, 0)
        support = CheckResult("merge_support", True, 0.0, 0.0, 0)
        complement = CheckResult("mask_complementarity", True, 0.0, 0.0, 0)
        mass = CheckResult("upsample_row_mass", True, 0.0, self.tolerance, 0)

        for n in oracle.merge_token_counts:
            mask = build_mask(n, "block")
            if self.corrupt_mask:
                mask = corrupt(mask)
            fine_index = np.arange(n)
            parent = fine_index // 4
            same_block = parent[:, None] == parent[None, :]
            e = mask.matrix

            errors = {"elementwise": 0.0, "row_sum": 0.0, "support": 0.0, "complement": 0.0, "mass": 0.0}
            for _ in range(oracle.merge_trials):
                deep_np = random_row_stochastic(rng, (1, 1, n // 4, n // 4))
                fine_np = random_block_stochastic(rng, 1, n)[None]
                deep = AttentionMap(Tensor(deep_np, dtype=self.dtype), Ordering.nested(0))
                fine = AttentionMap(Tensor(fine_np, dtype=self.dtype), Ordering.nested(1))
                deep_v = deep.numpy()
                fine_v = fine.numpy()

                upsampled = upsample_attention(deep).numpy()
                child_mass = upsampled.sum(axis=-1)
                parent_mass = deep_v.sum(axis=-1)[..., parent]
                errors["mass"] = max(errors["mass"], float(np.max(np.abs(child_mass - parent_mass))))

                raw = merge_maps(deep, fine, mask, renormalize=False).numpy()
                replicated = deep_v[..., parent[:, None], parent[None, :]] / 4
                expected = (1 - e) * replicated + e * fine_v
                errors["elementwise"] = max(errors["elementwise"], float(np.max(np.abs(raw - expected))))

                support_expected = np.where(same_block, fine_v, replicated)
                errors["support"] = max(
                    errors["support"], float(np.max(np.abs(raw - support_expected)))
                )

                recombined = (1 - e) * fine_v + e * fine_v
                errors["complement"] = max(
                    errors["complement"], float(np.max(np.abs(recombined - fine_v)))
                )

                renormalized = merge_maps(deep, fine, mask, renormalize=True).numpy()
                errors["row_sum"] = max(
                    errors["row_sum"], float(np.max(np.abs(renormalized.sum(axis=-1) - 1.0)))
                )

            trials = oracle.merge_trials
            exact = exact.merge(CheckResult(exact.name, errors["elementwise"] == 0.0, errors["elementwise"], 0.0, trials))
            support = support.merge(
                CheckResult(
                    support.name,
                    errors["support"] == 0.0,
                    errors["support"],
                    0.0,
                    trials,
                    "" if errors["support"] == 0.0 else f"merged map leaves the block support at n={n}",
                )
            )
            complement = complement.merge(
                CheckResult(complement.name, errors["complement"] == 0.0, errors["complement"], 0.0, trials)
            )
            stochastic = stochastic.merge(
                CheckResult(
                    stochastic.name,
                    errors["row_sum"] < oracle.row_sum_tolerance,
                    errors["row_sum"],
                    oracle.row_sum_tolerance,
                    trials,
                )
            )
            mass = mass.merge(
                CheckResult(mass.name, errors["mass"] < self.tolerance, errors["mass"], self.tolerance, trials)
            )
            for family, value in sorted(errors.items()):
                cases.rows.append({"family": f"merge_{family}", "case": f"n={n}", "max_error": value})

        return [exact, stochastic, support, complement, mass]

    # dimension correspondence

    def _dcm_specs(self) -> Iterator[OrderingSpec]:
        for h, w in product(self.config.oracle.dcm_extents, repeat=2):
            depth = 0
            while h % (2**depth) == 0 and w % (2**depth) == 0:
                yield OrderingSpec(h, w, depth)
                depth += 1

    def _dcm_checks(self, rng: np.random.Generator, cases: Table) -> List[CheckResult]:
        enumeration = CheckResult("dcm_enumeration", True, 0.0, 0.0, 0)
        roundtrip = CheckResult("dcm_roundtrip", True, 0.0, 0.0, 0)
        remap = CheckResult("dcm_attention_remap", True, 0.0, 0.0, 0)

        for spec in self._dcm_specs():
            expected = np.array([r * spec.width + c for r, c in brute_force_nested_coords(spec.height, spec.width, spec.depth)])
            mismatches = int(np.sum(spec.permutation != expected))
            bijective = np.array_equal(np.sort(spec.permutation), np.arange(spec.tokens))
            enumeration = enumeration.merge(
                CheckResult(
                    enumeration.name,
                    mismatches == 0 and bijective,
                    float(mismatches),
                    0.0,
                    1,
                    "" if mismatches == 0 and bijective else f"{spec.height}x{spec.width} depth {spec.depth}",
                )
            )

            nested = Tensor.randn((1, spec.tokens, 3), rng, self.dtype)
            raster = dcm(nested, spec)
            placed = np.empty_like(nested.numpy())
            placed[:, spec.permutation] = nested.numpy()
            back = inverse_dcm(raster, spec)
            rt_error = float(
                max(np.max(np.abs(raster.numpy() - placed)), np.max(np.abs(back.numpy() - nested.numpy())))
            )
            roundtrip = roundtrip.merge(CheckResult(roundtrip.name, rt_error == 0.0, rt_error, 0.0, 1))

            am_np = random_row_stochastic(rng, (1, 1, spec.tokens, spec.tokens))
            am = AttentionMap(Tensor(am_np, dtype=self.dtype), spec.ordering)
            out = dcm_attention(am, spec).numpy()
            remapped = np.empty_like(am.numpy())
            perm = spec.permutation
            remapped[..., perm[:, None], perm[None, :]] = am.numpy()
            remap_error = float(np.max(np.abs(out - remapped)))
            remap = remap.merge(CheckResult(remap.name, remap_error == 0.0, remap_error, 0.0, 1))

            cases.rows.append(
                {
                    "family": "dcm",
                    "case": f"{spec.height}x{spec.width} depth={spec.depth}",
                    "max_error": max(float(mismatches), rt_error, remap_error),
                }
            )

        golden = OrderingSpec(4, 4, 1).permutation
        golden_ok = tuple(int(i) for i in golden) == DCM_GOLDEN
        golden_check = CheckResult(
            "dcm_golden_4x4", golden_ok, 0.0 if golden_ok else 1.0, 0.0, 1,
            "" if golden_ok else f"got {list(golden)}",
        )
        return [enumeration, roundtrip, remap, golden_check]
