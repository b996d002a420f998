import numpy as np
import pytest
import torch

from oodgan.classifier import Classifier, CnnClassifierModel
from oodgan.corpus import BOS, EOS, LabeledExample, TokenSequence
from oodgan.detector import Detector, epoch_order, fit, score_dataset
from oodgan.nn_utils import batches, flat_params


def seq(ids, max_len=8):
    return TokenSequence.from_ids(ids, max_len)


def new_model(seed=0, m=3, V=12):
    torch.manual_seed(seed)
    return CnnClassifierModel(V, m, 8, 4, (2, 3), 8, 0.5)


def toy(n=24, seed=0, m=3, V=12):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        label = i % m
        body = [4 + label] + rng.integers(4, V, 3).tolist()
        out.append(LabeledExample(seq([BOS, *body, EOS]), label))
    return out


OOD = [seq([BOS, 10, 11, 10, EOS]), seq([BOS, 11, 11, EOS]), seq([BOS, 10, EOS])]


class TestReduction:
    def test_lambda_zero_matches_plain_training(self):
        train = toy()
        torch.manual_seed(5)
        det = Detector(new_model(), lam=0.0, lr=1e-3)
        torch.manual_seed(5)
        det.train(train, OOD, max_epochs=3, batch_size=5, patience=None, seed=9)

        plain = Classifier(new_model(), lr=1e-3)
        torch.manual_seed(5)
        for epoch in range(1, 4):
            for b in batches(train, 5, epoch_order(len(train), 9, epoch)):
                plain.train_step(b)
        assert torch.equal(flat_params(det.model), flat_params(plain.model))

    def test_lambda_zero_ignores_ood_with_validation(self):
        train, valid = toy(24, 0), toy(9, 1)
        runs = []
        for ood in (OOD, ()):
            clf = Classifier(new_model(), lr=1e-3)
            torch.manual_seed(2)
            fit(clf, train, ood, 0.0, max_epochs=4, batch_size=6, seed=1, valid=valid, valid_ood=OOD, patience=2)
            runs.append(flat_params(clf.model))
        assert torch.equal(runs[0], runs[1])

    def test_positive_lambda_changes_training(self):
        train = toy()
        out = []
        for lam in (0.0, 1.0):
            clf = Classifier(new_model(), lr=1e-3)
            torch.manual_seed(2)
            fit(clf, train, OOD, lam, max_epochs=2, batch_size=6, seed=1, patience=None)
            out.append(flat_params(clf.model))
        assert not torch.equal(out[0], out[1])

    def test_requires_ood_for_positive_lambda(self):
        with pytest.raises(ValueError):
            fit(Classifier(new_model()), toy(), (), 1.0)

    def test_negative_lambda(self):
        with pytest.raises(ValueError):
            Detector(new_model(), lam=-0.1)


class TestScoring:
    def test_uniform_model(self):
        model = new_model(m=4)
        with torch.no_grad():
            model.out.weight.zero_()
            model.out.bias.zero_()
        s = score_dataset(Classifier(model), toy(6, m=4), OOD)
        np.testing.assert_array_equal(s.score, np.full(9, 0.25))

    def test_scores_in_unit_interval_and_layout(self):
        ind = toy(10)
        s = score_dataset(Classifier(new_model()), ind, OOD)
        assert len(s) == 13
        assert np.all((s.score > 0) & (s.score <= 1))
        assert s.is_ood.tolist() == [False] * 10 + [True] * 3
        assert s.true_label.tolist() == [ex.label for ex in ind] + [-1] * 3

    def test_permutation_equivariance(self):
        clf = Classifier(new_model())
        ind = toy(12)
        base = score_dataset(clf, ind)
        perm = np.random.default_rng(0).permutation(12)
        moved = score_dataset(clf, [ind[i] for i in perm])
        np.testing.assert_allclose(moved.score, base.score[perm], rtol=0, atol=1e-12)
        np.testing.assert_array_equal(moved.pred_label, base.pred_label[perm])

    def test_empty(self):
        assert len(score_dataset(Classifier(new_model()), [])) == 0


class TestTraining:
    def test_entropy_term_lowers_ood_scores(self):
        train = toy(30)
        ood = [seq([BOS, a, b, EOS]) for a in (10, 11) for b in (10, 11)] * 3
        det = Detector(new_model(), lam=1.0, lr=3e-3)
        torch.manual_seed(0)
        det.train(train, ood, max_epochs=30, batch_size=10, patience=None)
        s_ind = score_dataset(det.classifier, train).score.mean()
        s_ood = score_dataset(det.classifier, [], ood).score.mean()
        assert s_ood < s_ind

    def test_early_stopping_restores_best(self):
        clf = Classifier(new_model(), lr=5e-2)
        torch.manual_seed(0)
        res = fit(clf, toy(24), max_epochs=15, batch_size=6, valid=toy(9, 1), patience=3)
        objs = [h["valid_objective"] for h in res.history]
        assert res.best_epoch == int(np.argmin(objs)) + 1
        assert res.epochs_run <= 15

    def test_accuracy_ties_break_on_objective(self):
        clf = Classifier(new_model(), lr=1e-2)
        torch.manual_seed(0)
        res = fit(clf, toy(24), max_epochs=12, batch_size=6, valid=toy(24), patience=100,
                  criterion="accuracy")
        keyed = [(-h["valid_accuracy"], h["valid_objective"]) for h in res.history]
        assert res.best_epoch == keyed.index(min(keyed)) + 1

    def test_calibrate_sets_threshold(self):
        det = Detector(new_model(), lam=1.0, lr=1e-3)
        thr, acc = det.calibrate(toy(9, 3), OOD)
        assert det.threshold == thr and 0.0 <= acc <= 1.0

    def test_epoch_order_is_a_permutation(self):
        o = epoch_order(17, 3, 2)
        assert sorted(o) == list(range(17)) and o == epoch_order(17, 3, 2) and o != epoch_order(17, 3, 3)
