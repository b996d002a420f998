import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oodgan.metrics import (
    DetectionScores,
    MetricError,
    aupr,
    auroc,
    fpr_at_tpr,
    ind_accuracy,
    joint_accuracy,
    joint_accuracy_curve,
    report,
    select_threshold,
    threshold_grid,
    write_report,
)

from oracles import metric_oracles as oracle


def random_scores(rng, n, levels=None, q=None):
    """Random records; ``levels`` quantizes scores so ties occur."""
    q = rng.uniform(0.2, 0.8) if q is None else q
    is_ood = rng.random(n) < q
    is_ood[0], is_ood[1] = True, False
    score = rng.random(n)
    if levels:
        score = np.round(score * levels) / levels
    true = np.where(is_ood, -1, rng.integers(0, 3, n))
    pred = rng.integers(0, 3, n)
    return DetectionScores(score, is_ood, pred, true)


def cols(s: DetectionScores):
    return s.score.tolist(), s.is_ood.tolist(), s.pred_label.tolist(), s.true_label.tolist()


@st.composite
def score_sets(draw, min_size=2, max_size=40):
    n = draw(st.integers(min_size, max_size))
    score = draw(st.lists(st.sampled_from([0.0, 0.1, 0.25, 0.5, 0.5001, 0.9, 1.0]), min_size=n, max_size=n))
    is_ood = draw(st.lists(st.booleans(), min_size=n, max_size=n))
    is_ood[0], is_ood[-1] = True, False
    pred = draw(st.lists(st.integers(0, 2), min_size=n, max_size=n))
    true = [-1 if o else draw(st.integers(0, 2)) for o in is_ood]
    return DetectionScores(np.array(score), np.array(is_ood), np.array(pred), np.array(true))


class TestOracleAgreement:
    @pytest.mark.parametrize("seed", range(10))
    @pytest.mark.parametrize("levels", [None, 10])
    def test_random_50(self, seed, levels):
        s = random_scores(np.random.default_rng(seed), 50, levels)
        sc, o, p, t = cols(s)
        assert auroc(s) == pytest.approx(oracle.auroc(sc, o), abs=1e-12)
        assert aupr(s) == pytest.approx(oracle.aupr(sc, o), abs=1e-12)
        for target in (0.9, 0.95):
            assert fpr_at_tpr(s, target) == oracle.fpr_at_tpr(sc, o, target)

    @pytest.mark.parametrize("seed", range(10))
    def test_joint_accuracy_20(self, seed):
        s = random_scores(np.random.default_rng(100 + seed), 20, levels=5)
        sc, o, p, t = cols(s)
        grid = np.r_[-0.1, threshold_grid(s), 0.33, 1.5]
        for thr, acc in joint_accuracy_curve(s, grid):
            assert acc == oracle.joint_accuracy(sc, o, p, t, thr)
            assert acc == joint_accuracy(s, thr)

    @pytest.mark.parametrize("seed", range(10))
    def test_select_threshold_20(self, seed):
        s = random_scores(np.random.default_rng(200 + seed), 20, levels=8)
        thr, acc = select_threshold(s)
        o_thr, o_acc = oracle.select_threshold(*cols(s))
        assert acc == o_acc
        if o_thr <= s.score.max():
            assert thr == o_thr
        else:  # the oracle uses a different "above everything" sentinel
            assert thr > s.score.max()

    @settings(max_examples=200, deadline=None)
    @given(score_sets())
    def test_hypothesis_sets(self, s):
        sc, o, p, t = cols(s)
        assert auroc(s) == pytest.approx(oracle.auroc(sc, o), abs=1e-12)
        assert aupr(s) == pytest.approx(oracle.aupr(sc, o), abs=1e-12)
        assert fpr_at_tpr(s, 0.95) == oracle.fpr_at_tpr(sc, o, 0.95)


class TestEdgeCases:
    def separated(self):
        return DetectionScores([0.1, 0.2, 0.8, 0.9], [True, True, False, False], [0, 0, 1, 2], [-1, -1, 1, 2])

    def test_perfect_separation(self):
        s = self.separated()
        assert auroc(s) == 1.0 and aupr(s) == 1.0
        assert fpr_at_tpr(s, 0.95) == 0.0 and fpr_at_tpr(s, 0.9) == 0.0

    def test_all_ties(self):
        s = DetectionScores([0.5] * 6, [True, False] * 3, [0] * 6, [-1, 0] * 3)
        assert auroc(s) == 0.5
        assert aupr(s) == 0.5
        assert fpr_at_tpr(s, 0.95) == 1.0

    def test_separated_threshold_is_gap_midpoint(self):
        thr, acc = select_threshold(self.separated())
        assert thr == pytest.approx(0.5) and acc == 1.0

    def test_equal_scores_threshold(self):
        # 3 IND (2 correct) and 2 OOD at one score: all-IND gives 2/5, all-OOD gives 2/5
        s = DetectionScores([0.4] * 5, [False, False, False, True, True], [0, 1, 0, 0, 0], [0, 1, 1, -1, -1])
        thr, acc = select_threshold(s)
        assert acc == pytest.approx(0.4) and thr == 0.4
        # more OOD: the all-OOD setting wins, threshold just above the score
        s = DetectionScores([0.4] * 4, [False, True, True, True], [0] * 4, [0, -1, -1, -1])
        thr, acc = select_threshold(s)
        assert acc == 0.75 and thr == np.nextafter(0.4, 1.0)

    def test_degenerate_thresholds(self):
        s = random_scores(np.random.default_rng(3), 30)
        ind_ok = np.mean((~s.is_ood) & (s.pred_label == s.true_label))
        assert joint_accuracy(s, 0.0) == pytest.approx(ind_ok)
        assert joint_accuracy(s, 1.01) == pytest.approx(s.is_ood.mean())

    def test_ind_accuracy(self):
        s = DetectionScores([0.9, 0.8, 0.1], [False, False, True], [1, 0, 0], [1, 0, -1])
        assert ind_accuracy(s) == 1.0
        s = DetectionScores([0.9, 0.8, 0.1], [False, False, True], [0, 1, 0], [1, 0, -1])
        assert ind_accuracy(s) == 0.0

    @pytest.mark.parametrize("fn", [auroc, aupr, lambda s: fpr_at_tpr(s, 0.95)])
    def test_single_class_rejected(self, fn):
        with pytest.raises(MetricError):
            fn(DetectionScores([0.1, 0.2], [True, True], [0, 0], [-1, -1]))

    def test_single_class_validation_rejected(self):
        with pytest.raises(MetricError):
            select_threshold(DetectionScores([0.3, 0.9], [False, False], [0, 1], [0, 1]))

    def test_bad_target(self):
        with pytest.raises(MetricError):
            fpr_at_tpr(self.separated(), 0.0)


class TestProperties:
    @settings(max_examples=100, deadline=None)
    @given(score_sets())
    def test_fpr_monotone_in_target(self, s):
        assert fpr_at_tpr(s, 0.90) <= fpr_at_tpr(s, 0.95)

    @settings(max_examples=100, deadline=None)
    @given(score_sets())
    def test_auroc_monotone_invariance(self, s):
        moved = DetectionScores(np.exp(3 * s.score) - 7.0, s.is_ood, s.pred_label, s.true_label)
        assert auroc(moved) == pytest.approx(auroc(s), abs=1e-12)
        assert aupr(moved) == pytest.approx(aupr(s), abs=1e-12)
        assert fpr_at_tpr(moved, 0.95) == fpr_at_tpr(s, 0.95)

    @settings(max_examples=100, deadline=None)
    @given(score_sets())
    def test_auroc_label_flip(self, s):
        flipped = DetectionScores(s.score, ~s.is_ood, s.pred_label, s.true_label)
        assert auroc(flipped) == pytest.approx(1.0 - auroc(s), abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(score_sets())
    def test_ranges(self, s):
        for v in report(s).values():
            assert 0.0 <= v <= 1.0

    @pytest.mark.parametrize("q", [0.1, 0.3, 0.5])
    def test_aupr_random_baseline(self, q):
        rng = np.random.default_rng(int(q * 100))
        n = 2000
        is_ood = rng.random(n) < q
        s = DetectionScores(rng.random(n), is_ood, np.zeros(n), np.where(is_ood, -1, 0))
        assert abs(aupr(s) - is_ood.mean()) < 0.05


class TestIO:
    def test_save_load_round_trip(self, tmp_path):
        s = random_scores(np.random.default_rng(0), 25)
        s.save(tmp_path / "s.tsv", header="score\tis_ood\tpred\ttrue")
        back = DetectionScores.load(tmp_path / "s.tsv")
        assert back.records() == s.records()

    def test_empty_file_rejected(self, tmp_path):
        (tmp_path / "s.tsv").write_text("# header only\n")
        with pytest.raises(MetricError):
            DetectionScores.load(tmp_path / "s.tsv")

    def test_report_files(self, tmp_path):
        s = random_scores(np.random.default_rng(1), 30)
        m = report(s)
        assert set(m) == {"auroc", "aupr", "fpr95", "fpr90", "ind_acc"}
        write_report(m, tmp_path / "m.txt", tmp_path / "m.json")
        lines = (tmp_path / "m.txt").read_text().splitlines()
        assert lines[0].startswith("auroc=") and len(lines) == 5
        assert not any(math.isnan(v) for v in m.values())
