"""Tests for complexity formulas and segmentation metrics."""

import numpy as np
import pytest

from attnmerge.analysis import (
    AnalysisError,
    ComplexityParams,
    ConfusionMatrix,
    attention_macs,
    class_accuracy,
    class_iou,
    class_recall,
    confusion,
    mac_counter,
    macc,
    miou,
    mrecall,
    omega_gmsa,
    omega_msa,
    omega_wmsa,
    overall_accuracy,
    per_class_records,
    square_sweep,
    summary,
    sweep,
)
from attnmerge.attention import GranularSelfAttention, MultiHeadSelfAttention
from attnmerge.tensor import Tensor


class TestComplexityFormulas:
    """Worked values of the analytic formulas."""

    def test_msa(self):
        """h=w=16, C=64."""
        assert omega_msa(ComplexityParams(16, 16, 64)) == 12_582_912

    def test_wmsa(self):
        """h=w=16, C=64, M=4."""
        assert omega_wmsa(ComplexityParams(16, 16, 64, window=4)) == 4_718_592

    def test_gmsa(self):
        """h=w=16, C=64, h0=w0=4."""
        assert omega_gmsa(ComplexityParams(16, 16, 64, h0=4, w0=4)) == 4_214_784

    def test_exact_integers(self):
        """Large grids stay exact Python integers."""
        value = omega_msa(ComplexityParams(4096, 4096, 512))
        assert isinstance(value, int)
        assert value == 4 * 4096**2 * 512**2 + 2 * 4096**4 * 512

    def test_gmsa_at_deepest_grid(self):
        """With hw = h0w0 the log term vanishes."""
        p = ComplexityParams(4, 4, 8, h0=4, w0=4)
        assert omega_gmsa(p) == 4 * 16 * 64 + 256 * 8

    @pytest.mark.parametrize(
        "kwargs, message",
        [
            ({"h": 0, "w": 4, "channels": 8}, "positive"),
            ({"h": 4, "w": 4, "channels": -1}, "positive"),
            ({"h": 4, "w": 4, "channels": 8, "h0": 8, "w0": 8}, "smaller"),
            ({"h": 8, "w": 4, "channels": 8, "h0": 2, "w0": 2}, "power of 4"),
            ({"h": 6, "w": 6, "channels": 8, "h0": 4, "w0": 4}, "multiple"),
        ],
    )
    def test_invalid_params(self, kwargs, message):
        """Non-positive values and token ratios that are not powers of 4 are rejected."""
        with pytest.raises(AnalysisError, match=message):
            ComplexityParams(**kwargs)


class TestSweep:
    """Tests for complexity sweeps."""

    def test_ordering_and_ratio(self):
        """Across 32..256, GMSA < W-MSA < MSA and GMSA/MSA keeps falling."""
        report = square_sweep([32, 64, 128, 256], channels=64, window=8, deepest=16)

        assert len(report.rows) == 4
        assert report.ordering_holds()
        assert report.ratio_decreasing()

    def test_records(self):
        """Each record carries the inputs, the three values and both ratios."""
        record = square_sweep([16], channels=64, window=4, deepest=4).records()[0]

        assert record["omega_msa"] == 12_582_912
        assert record["omega_wmsa"] == 4_718_592
        assert record["omega_gmsa"] == 4_214_784
        assert record["gmsa_over_msa"] == pytest.approx(4_214_784 / 12_582_912)
        assert (record["h"], record["w"], record["window"], record["h0"]) == (16, 16, 4, 4)

    def test_non_decreasing_ratio_detected(self):
        """A sweep listed in the wrong order is not decreasing."""
        report = square_sweep([64, 32], channels=64, window=8, deepest=16)
        assert not report.ratio_decreasing()

    def test_empty(self):
        """At least one parameter set is needed."""
        with pytest.raises(AnalysisError):
            sweep([])


class TestAttentionMacs:
    """Hand-derived MAC counts against counted ones."""

    def test_formulas(self):
        """3nC² plus the mixing term."""
        assert attention_macs(16, 8, "msa") == 3 * 16 * 64 + 2 * 256 * 8
        assert attention_macs(16, 8, "gmsa") == 3 * 16 * 64 + 32 * 4 * 8
        assert attention_macs(16, 8, "gmsa", batch=3) == 3 * attention_macs(16, 8, "gmsa")

    @pytest.mark.parametrize("heads", [1, 2, 4])
    def test_gmsa_matches_count(self, rng, heads):
        """Blockwise granular attention executes exactly the predicted MACs."""
        module = GranularSelfAttention(16, heads, rng)
        with mac_counter("gmsa") as counter:
            module.block_output(Tensor(rng.standard_normal((2, 64, 16))))
        assert counter.count == attention_macs(64, 16, "gmsa", batch=2)

    @pytest.mark.parametrize("heads", [1, 2, 4])
    def test_msa_matches_count(self, rng, heads):
        """Global attention executes exactly the predicted MACs."""
        module = MultiHeadSelfAttention(16, heads, (4, 4), rng)
        with mac_counter("msa") as counter:
            module(Tensor(rng.standard_normal((1, 16, 16))))
        assert counter.count == attention_macs(16, 16, "msa")

    @pytest.mark.parametrize(
        "args, message",
        [((16, 8, "wmsa"), "Unknown attention kind"), ((0, 8, "msa"), "positive"), ((6, 8, "gmsa"), "2x2")],
    )
    def test_invalid(self, args, message):
        """Unknown kinds and impossible sizes are rejected."""
        with pytest.raises(AnalysisError, match=message):
            attention_macs(*args)


def brute_force(pred, truth, classes):
    """Per-class IoU, accuracy and recall counted pixel by pixel."""
    iou, acc, rec = [], [], []
    for c in range(classes):
        tp = fp = fn = tn = 0
        for p, t in zip(pred.reshape(-1), truth.reshape(-1)):
            if p == c and t == c:
                tp += 1
            elif p == c:
                fp += 1
            elif t == c:
                fn += 1
            else:
                tn += 1
        iou.append(1.0 if tp + fp + fn == 0 else tp / (tp + fp + fn))
        acc.append((tp + tn) / (tp + fp + fn + tn))
        rec.append(1.0 if tp + fn == 0 else tp / (tp + fn))
    return np.array(iou), np.array(acc), np.array(rec)


class TestMetrics:
    """Tests for confusion-matrix metrics."""

    def test_iou_worked_example(self):
        """TP=2, FP=1, FN=1 gives IoU 0.5."""
        cm = confusion(np.array([0, 0, 1, 0]), np.array([0, 0, 0, 1]), 2)

        assert class_iou(cm)[0] == 0.5
        assert (cm.true_positives()[0], cm.false_positives()[0], cm.false_negatives()[0]) == (2, 1, 1)

    def test_accuracy_worked_example(self):
        """TP=1, TN=2, FP=1, FN=0 gives Acc 3/4."""
        cm = confusion(np.array([1, 1, 0, 0]), np.array([1, 0, 0, 0]), 2)

        assert class_accuracy(cm)[1] == 0.75
        record = per_class_records(cm)[1]
        assert (record["tp"], record["tn"], record["fp"], record["fn"]) == (1, 2, 1, 0)

    def test_counts_layout(self):
        """counts[truth][prediction]."""
        cm = confusion(np.array([[2, 1]]), np.array([[0, 1]]), 3)
        assert cm.counts[0, 2] == 1
        assert cm.counts[1, 1] == 1
        assert cm.total == 2

    def test_relabeling_permutes_confusion(self, rng):
        """Renaming classes permutes both confusion axes and the per-class scores."""
        pred = rng.integers(0, 4, size=(6, 7))
        truth = rng.integers(0, 4, size=(6, 7))
        relabel = np.array([2, 0, 3, 1])

        cm = confusion(pred, truth, 4)
        renamed = confusion(relabel[pred], relabel[truth], 4)

        # class c of the original is class relabel[c] of the renamed rasters
        np.testing.assert_array_equal(renamed.counts[np.ix_(relabel, relabel)], cm.counts)
        np.testing.assert_allclose(class_iou(renamed)[relabel], class_iou(cm))
        assert miou(renamed) == pytest.approx(miou(cm))
        assert overall_accuracy(renamed) == overall_accuracy(cm)

    def test_absent_class_scores_one(self):
        """A class in neither raster has IoU and recall 1."""
        cm = confusion(np.array([0, 1]), np.array([0, 1]), 3)

        assert class_iou(cm).tolist() == [1.0, 1.0, 1.0]
        assert class_recall(cm)[2] == 1.0

    def test_perfect_prediction(self):
        """Identical rasters score 1 everywhere."""
        labels = np.array([[0, 1], [2, 1]])
        cm = confusion(labels, labels, 3)

        assert miou(cm) == 1.0
        assert macc(cm) == 1.0
        assert mrecall(cm) == 1.0
        assert overall_accuracy(cm) == 1.0

    def test_random_pairs_match_brute_force(self):
        """50 random raster pairs agree with pixel-by-pixel counting."""
        rng = np.random.default_rng(7)
        for _ in range(50):
            classes = int(rng.integers(2, 6))
            shape = (int(rng.integers(1, 6)), int(rng.integers(1, 6)))
            pred = rng.integers(0, classes, size=shape)
            truth = rng.integers(0, classes, size=shape)

            cm = confusion(pred, truth, classes)
            iou, acc, rec = brute_force(pred, truth, classes)

            np.testing.assert_allclose(class_iou(cm), iou)
            np.testing.assert_allclose(class_accuracy(cm), acc)
            np.testing.assert_allclose(class_recall(cm), rec)
            assert miou(cm) == pytest.approx(iou.mean())
            assert 0.0 <= miou(cm) <= 1.0

    def test_merge_is_additive(self, rng):
        """Merging per-image matrices equals tallying the concatenation."""
        pred = rng.integers(0, 4, size=(2, 8, 8))
        truth = rng.integers(0, 4, size=(2, 8, 8))
        merged = confusion(pred[0], truth[0], 4).merge(confusion(pred[1], truth[1], 4))

        np.testing.assert_array_equal(merged.counts, confusion(pred, truth, 4).counts)

    def test_merge_class_mismatch(self):
        """Matrices over different class counts cannot merge."""
        with pytest.raises(AnalysisError, match="Cannot merge"):
            ConfusionMatrix.empty(2).merge(ConfusionMatrix.empty(3))

    def test_summary(self):
        """The summary has pixel totals and the means."""
        result = summary(confusion(np.array([0, 0, 1, 0]), np.array([0, 0, 0, 1]), 2))

        assert result["classes"] == 2
        assert result["pixels"] == 4
        assert result["miou"] == pytest.approx(0.25)
        assert result["overall_accuracy"] == 0.5

    def test_per_class_records_columns(self):
        """Each record has the report columns."""
        records = per_class_records(confusion(np.array([0, 1]), np.array([1, 1]), 2))
        assert list(records[0]) == ["class", "tp", "fp", "fn", "tn", "iou", "acc", "recall"]

    @pytest.mark.parametrize(
        "pred, truth, message",
        [
            (np.array([0, 1]), np.array([0, 1, 1]), "differs"),
            (np.array([0.0, 1.0]), np.array([0, 1]), "integers"),
            (np.array([0, 2]), np.array([0, 1]), "must lie in"),
            (np.array([0, -1]), np.array([0, 1]), "must lie in"),
            (np.array([], dtype=np.int64), np.array([], dtype=np.int64), "empty"),
        ],
    )
    def test_invalid_rasters(self, pred, truth, message):
        """Shape, dtype and range problems are reported."""
        with pytest.raises(AnalysisError, match=message):
            confusion(pred, truth, 2)

    def test_invalid_matrices(self):
        """Non-square, single-class and negative matrices are rejected."""
        with pytest.raises(AnalysisError, match="square"):
            ConfusionMatrix(np.zeros((2, 3), dtype=np.int64))
        with pytest.raises(AnalysisError, match="2 classes"):
            ConfusionMatrix(np.zeros((1, 1), dtype=np.int64))
        with pytest.raises(AnalysisError, match="nonnegative"):
            ConfusionMatrix(np.array([[1, -1], [0, 0]]))

    def test_empty_matrix_has_no_metrics(self):
        """Metrics need at least one pixel."""
        with pytest.raises(AnalysisError, match="empty"):
            miou(ConfusionMatrix.empty(2))
