import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from oodgan.classifier import (
    Classifier,
    CnnClassifierModel,
    cross_entropy,
    negative_entropy,
    shannon_entropy,
)
from oodgan.corpus import BOS, EOS, LabeledExample, TokenSequence
from oodgan.nn_utils import to_tensor

from oracles.finite_diff import relative_error


def seq(ids, max_len=8):
    return TokenSequence.from_ids(ids, max_len)


def make(m=2, V=10, seed=0, lr=1e-2, dropout=0.5, widths=(2, 3, 4, 5)):
    torch.manual_seed(seed)
    return Classifier(CnnClassifierModel(V, m, 8, 6, widths, 8, dropout), lr=lr)


class TestEntropy:
    def test_one_hot(self):
        assert shannon_entropy(np.array([0.0, 1.0, 0.0])) == 0.0

    def test_uniform_four(self):
        assert shannon_entropy(np.full(4, 0.25)) == pytest.approx(math.log(4), abs=1e-12)

    def test_two_way(self):
        assert shannon_entropy(np.array([0.5, 0.5])) == pytest.approx(0.6931471805599453, abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(0.0, 1.0), min_size=2, max_size=20).filter(lambda v: sum(v) > 1e-6))
    def test_numpy_and_torch_agree(self, v):
        p = np.array(v) / sum(v)
        a = float(shannon_entropy(p))
        b = float(shannon_entropy(torch.tensor(p)))
        assert a == pytest.approx(b, abs=1e-12)
        assert -1e-12 <= a <= math.log(len(v)) + 1e-12

    def test_negative_entropy_is_minus_entropy(self):
        logits = torch.randn(5, 4, dtype=torch.float64)
        p = torch.softmax(logits, dim=1)
        assert negative_entropy(logits).item() == pytest.approx(-shannon_entropy(p).mean().item(), abs=1e-12)


class TestModel:
    def test_probabilities_valid(self):
        clf = make(m=5)
        probs = clf.predict_many([seq([BOS, 4, 5, EOS]), seq([BOS, EOS])])
        assert torch.all(probs >= 0)
        torch.testing.assert_close(probs.sum(1), torch.ones(2, dtype=torch.float64))

    def test_short_inputs_are_padded_for_wide_filters(self):
        clf = make()
        assert clf.predict(seq([BOS, EOS], 2)).shape == (2,)

    def test_predict_is_deterministic(self):
        clf = make()
        x = seq([BOS, 4, 6, EOS])
        np.testing.assert_array_equal(clf.predict(x), clf.predict(x))

    def test_padding_row_of_embedding_is_zero(self):
        assert torch.all(make().model.embedding.weight[0] == 0)

    def test_separable_toy(self):
        clf = make(m=2)
        data = [LabeledExample(seq([BOS, 4, 4, 5, EOS]), 0), LabeledExample(seq([BOS, 6, 7, EOS]), 1),
                LabeledExample(seq([BOS, 5, 4, EOS]), 0), LabeledExample(seq([BOS, 7, 6, 7, EOS]), 1)]
        for _ in range(100):
            clf.train_step(data)
        assert clf.accuracy(data) == 1.0

    def test_memorizes_single_example(self):
        clf = make(m=3, dropout=0.0)
        ex = [LabeledExample(seq([BOS, 4, 5, EOS]), 2)] * 4
        for _ in range(200):
            loss = clf.train_step(ex)
        assert loss < 1e-2

    def test_twelve_classes(self):
        clf = make(m=12, V=30)
        rng = np.random.default_rng(0)
        data = [LabeledExample(seq([BOS, *rng.integers(4, 30, 4).tolist(), EOS]), int(i % 12)) for i in range(48)]
        loss = clf.train_step(data)
        assert math.isfinite(loss)

    def test_label_out_of_range(self):
        with pytest.raises(ValueError):
            make(m=2).train_step([LabeledExample(seq([BOS, 4, EOS]), 2)])

    def test_freeze(self):
        clf = make()
        clf.freeze()
        assert clf.frozen and not any(p.requires_grad for p in clf.model.parameters())
        with pytest.raises(RuntimeError):
            clf.train_step([LabeledExample(seq([BOS, 4, EOS]), 0)])

    def test_entropy_reward_bounds(self):
        clf = make(m=4)
        r = clf.entropy_reward(seq([BOS, 4, 5, EOS]))
        assert 0.0 <= r <= math.log(4) + 1e-12


class TestGradients:
    def tiny(self):
        torch.manual_seed(0)
        return CnnClassifierModel(5, 3, emb_dim=3, num_filters=2, widths=(2, 3), dense_dim=3, dropout=0.0).double()

    def ids(self):
        return to_tensor([seq([BOS, 3, EOS], 3), seq([BOS, 4, 3], 3)])

    def test_cross_entropy(self):
        model = self.tiny()
        labels = torch.tensor([0, 2])
        assert relative_error(model, lambda: cross_entropy(model, self.ids(), labels)) < 1e-3

    def test_negative_entropy(self):
        model = self.tiny()
        assert relative_error(model, lambda: negative_entropy(model(self.ids()))) < 1e-3
