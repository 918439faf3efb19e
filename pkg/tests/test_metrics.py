import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kanq import metrics
from kanq.rng import RngStream


class TestConfusion:
    def test_perfect_predictions(self):
        cm = metrics.confusion([1, 0, 1], [1, 0, 1])
        assert cm.fp == 0 and cm.fn == 0 and cm.tp == 2 and cm.tn == 1

    def test_all_ones_predictor(self):
        cm = metrics.confusion([1, 1, 1, 0, 0], [1, 1, 1, 1, 1])
        assert (cm.tp, cm.fp, cm.fn, cm.tn) == (3, 2, 0, 0)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            metrics.confusion([1, 0], [1])

    def test_enumeration_oracle(self):
        rng = RngStream(1)
        labels = (rng.uniform01((200,)) > 0.4).astype(int)
        preds = (rng.uniform01((200,)) > 0.5).astype(int)
        cm = metrics.confusion(labels, preds)
        brute = {"tp": 0, "fp": 0, "fn": 0, "tn": 0}
        for y, p in zip(labels, preds):
            key = {(1, 1): "tp", (0, 1): "fp", (1, 0): "fn", (0, 0): "tn"}[(y, p)]
            brute[key] += 1
        assert (cm.tp, cm.fp, cm.fn, cm.tn) == (
            brute["tp"], brute["fp"], brute["fn"], brute["tn"])


def brute_macro(cm):
    """Independent transcription of the macro-averaged formulas."""
    out = []
    for tp, fp, fn in [(cm.tp, cm.fp, cm.fn), (cm.tn, cm.fn, cm.fp)]:
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * p * r / (p + r) if p + r else 0.0
        out.append((p, r, f1))
    (p1, r1, f11), (p0, r0, f10) = out
    acc = (cm.tp + cm.tn) / cm.total
    return ((p1 + p0) / 2, (r1 + r0) / 2, (f11 + f10) / 2, acc)


class TestMacroScores:
    def test_perfect_classifier(self):
        cm = metrics.ConfusionMatrix(tp=10, fp=0, fn=0, tn=10)
        assert metrics.macro_scores(cm) == (1.0, 1.0, 1.0, 1.0)

    def test_hand_arithmetic(self):
        cm = metrics.ConfusionMatrix(tp=40, fp=10, fn=20, tn=30)
        got = metrics.macro_scores(cm)
        assert np.abs(np.array(got) - brute_macro(cm)).max() < 1e-15

    def test_reference_fraction_matrix(self):
        # confusion fractions 40.22/51.81/4.35/3.62 percent scale to counts;
        # accuracy must come out at exactly 92.03 percent
        cm = metrics.ConfusionMatrix(tp=5181, fp=435, fn=362, tn=4022)
        _, _, _, acc = metrics.macro_scores(cm)
        assert abs(acc - 0.9203) < 1e-12

    def test_duplication_invariance(self):
        cm = metrics.ConfusionMatrix(tp=7, fp=3, fn=2, tn=8)
        doubled = metrics.ConfusionMatrix(tp=14, fp=6, fn=4, tn=16)
        assert np.allclose(metrics.macro_scores(cm), metrics.macro_scores(doubled))

    def test_random_matrices_vs_oracle(self):
        rng = RngStream(2)
        for _ in range(1000):
            counts = rng.integers(0, 40, (4,))
            if counts.sum() == 0:
                continue
            cm = metrics.ConfusionMatrix(*[int(c) for c in counts])
            got = metrics.macro_scores(cm)
            assert np.abs(np.array(got) - brute_macro(cm)).max() < 1e-12


class TestRocAuc:
    def test_perfect_separation(self):
        assert metrics.roc_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0

    def test_all_ties(self):
        assert metrics.roc_auc([0.5] * 6, [0, 1, 0, 1, 0, 1]) == 0.5

    def test_single_class_rejected(self):
        with pytest.raises(ValueError):
            metrics.roc_auc([0.1, 0.2], [1, 1])

    def test_pair_count_oracle(self):
        rng = RngStream(3)
        for trial in range(200):
            n = 20
            scores = np.round(rng.uniform01((n,)), 1)  # force ties
            labels = (rng.uniform01((n,)) > 0.5).astype(int)
            if labels.sum() in (0, n):
                continue
            pos = scores[labels == 1]
            neg = scores[labels == 0]
            wins = sum((p > q) + 0.5 * (p == q) for p in pos for q in neg)
            brute = wins / (len(pos) * len(neg))
            assert abs(metrics.roc_auc(scores, labels) - brute) < 1e-12

    def test_antisymmetry(self):
        rng = RngStream(4)
        scores = rng.uniform01((50,))
        labels = (rng.uniform01((50,)) > 0.4).astype(int)
        a = metrics.roc_auc(scores, labels)
        b = metrics.roc_auc(-scores, labels)
        assert abs(a + b - 1.0) < 1e-12

    def test_curve_endpoints(self):
        pts = metrics.roc_curve([0.2, 0.8, 0.5], [0, 1, 1])
        assert pts[0][1:] == (0.0, 0.0)
        assert pts[-1][1:] == (1.0, 1.0)


class TestMccKappa:
    def test_mcc_perfect(self):
        assert metrics.mcc(metrics.ConfusionMatrix(tp=5, fp=0, fn=0, tn=5)) == 1.0

    def test_mcc_inverted(self):
        assert metrics.mcc(metrics.ConfusionMatrix(tp=0, fp=5, fn=5, tn=0)) == -1.0

    def test_mcc_formula_oracle(self):
        cm = metrics.ConfusionMatrix(tp=40, fp=5, fn=10, tn=45)
        num = 40 * 45 - 5 * 10
        den = math.sqrt((40 + 5) * (40 + 10) * (45 + 5) * (45 + 10))
        assert abs(metrics.mcc(cm) - num / den) < 1e-15

    def test_mcc_zero_factor_convention(self):
        assert metrics.mcc(metrics.ConfusionMatrix(tp=0, fp=0, fn=3, tn=7)) == 0.0

    def test_kappa_perfect(self):
        assert metrics.kappa(metrics.ConfusionMatrix(tp=5, fp=0, fn=0, tn=5)) == 1.0

    def test_kappa_chance_level(self):
        # all-ones predictor agrees with chance exactly
        cm = metrics.confusion([1, 1, 1, 0, 0], [1, 1, 1, 1, 1])
        assert abs(metrics.kappa(cm)) < 1e-12

    def test_kappa_formula_oracle(self):
        cm = metrics.ConfusionMatrix(tp=40, fp=5, fn=10, tn=45)
        n = 100
        p_o = 85 / n
        p_e = ((45 * 50) + (55 * 50)) / (n * n)
        assert abs(metrics.kappa(cm) - (p_o - p_e) / (1 - p_e)) < 1e-15

    @given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50), st.integers(0, 50))
    @settings(max_examples=200, deadline=None)
    def test_relabeling_invariance(self, tp, fp, fn, tn):
        cm = metrics.ConfusionMatrix(tp=tp, fp=fp, fn=fn, tn=tn)
        swapped = metrics.ConfusionMatrix(tp=tn, fp=fn, fn=fp, tn=tp)
        assert abs(metrics.mcc(cm) - metrics.mcc(swapped)) < 1e-12
        assert abs(metrics.kappa(cm) - metrics.kappa(swapped)) < 1e-12


class TestCalibrationCurve:
    def test_single_confident_bin(self):
        rows = metrics.calibration_curve(np.ones(5), np.ones(5))
        assert rows == [(1.0, 1.0, 5)]

    def test_bin_counts_partition(self):
        rng = RngStream(5)
        probs = rng.uniform01((500,))
        labels = (rng.uniform01((500,)) > 0.5).astype(int)
        rows = metrics.calibration_curve(probs, labels)
        assert sum(r[2] for r in rows) == 500

    def test_synthetic_calibrated_data_near_diagonal(self):
        rng = RngStream(6)
        probs = rng.uniform01((20000,))
        labels = (rng.uniform01((20000,)) < probs).astype(int)
        for mean_pred, frac_pos, count in metrics.calibration_curve(probs, labels):
            # 99 percent binomial deviation bound
            bound = 2.58 * math.sqrt(0.25 / count) + 0.05
            assert abs(frac_pos - mean_pred) < bound

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            metrics.calibration_curve(np.array([1.5]), np.array([1]))


class TestPairedTTest:
    def test_constant_difference_degenerate(self):
        with pytest.raises(metrics.DegenerateTestError):
            metrics.paired_t_test([1.0, 2.0, 3.0], [0.5, 1.5, 2.5])

    def test_df_for_ten_folds(self):
        a = RngStream(7).uniform01((10,))
        b = RngStream(8).uniform01((10,))
        _, _, _, df = metrics.paired_t_test(a, b)
        assert df == 9

    def test_high_precision_oracle(self):
        mpmath = pytest.importorskip("mpmath")
        mpmath.mp.dps = 50
        a = np.array([0.92, 0.91, 0.93, 0.90, 0.92, 0.94, 0.91, 0.92, 0.93, 0.92])
        b = np.array([0.89, 0.90, 0.91, 0.88, 0.90, 0.91, 0.90, 0.89, 0.92, 0.90])
        t, p, d, df = metrics.paired_t_test(a, b)
        diff = a - b
        k = diff.size
        sd = diff.std(ddof=1)
        t_ref = diff.mean() / (sd / math.sqrt(k))
        x = df / (df + t_ref * t_ref)
        p_ref = float(mpmath.betainc(df / 2, 0.5, 0, x, regularized=True))
        assert abs(t - t_ref) < 1e-12
        assert abs(p - p_ref) < 1e-9
        assert abs(d - diff.mean() / sd) < 1e-12

    def test_tabulated_critical_value(self):
        # two-tailed p at the df=9 critical point t=2.262 is 0.05 (t tables)
        p = metrics.t_sf_two_sided(2.262, 9)
        assert abs(p - 0.05) < 5e-4

    def test_swap_negates_t(self):
        a = RngStream(9).uniform01((8,))
        b = RngStream(10).uniform01((8,))
        t1, p1, d1, _ = metrics.paired_t_test(a, b)
        t2, p2, d2, _ = metrics.paired_t_test(b, a)
        assert abs(t1 + t2) < 1e-12
        assert abs(p1 - p2) < 1e-12
        assert abs(d1 + d2) < 1e-12

    def test_betainc_against_mpmath_grid(self):
        mpmath = pytest.importorskip("mpmath")
        mpmath.mp.dps = 40
        for a, b, x in [(4.5, 0.5, 0.3), (0.5, 0.5, 0.9), (5.0, 2.0, 0.05),
                        (10.0, 0.5, 0.999), (1.0, 1.0, 0.42)]:
            ref = float(mpmath.betainc(a, b, 0, x, regularized=True))
            assert abs(metrics.betainc_reg(a, b, x) - ref) < 1e-12

    def test_bonferroni(self):
        assert metrics.bonferroni(0.05, 9) == pytest.approx(0.0056, abs=1e-4)
