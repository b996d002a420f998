import math

import pytest
import torch

from oodgan.corpus import BOS, EOS, PAD, TokenSequence
from oodgan.generator import GenerationBatch, Generator, GeneratorModel, nll_loss, policy_loss
from oodgan.nn_utils import flat_params, to_tensor

from oracles.finite_diff import relative_error


def make_generator(V=8, max_len=6, seed=0, lr=1e-3, temperature=1.0, emb=8, hid=16):
    torch.manual_seed(seed)
    return Generator(GeneratorModel(V, emb, hid), max_len, lr=lr, temperature=temperature, seed=seed)


def seq(ids, max_len):
    return TokenSequence.from_ids(ids, max_len)


class TestSampling:
    def test_shapes_and_validity(self):
        g = make_generator(max_len=7)
        batch = g.sample(64)
        assert len(batch) == 64
        for s, lp in zip(batch.sequences, batch.step_log_probs):
            assert s.max_len == 7 and 2 <= s.length <= 7
            assert s.ids[0] == BOS
            body = s.ids[1 : s.length]
            assert BOS not in body and PAD not in body
            assert EOS not in body[:-1]  # EOS only as the final token
            assert len(lp) == s.length and lp[0] == 0.0
            assert all(v <= 0.0 for v in lp)

    def test_forced_eos(self):
        g = make_generator()
        with torch.no_grad():
            g.model.out.weight.zero_()
            g.model.out.bias.fill_(-50.0)
            g.model.out.bias[EOS] = 50.0
        s = g.sample(1).sequences[0]
        assert s.content == () and s.complete and s.ids[:2] == (BOS, EOS)

    def test_log_probs_match_teacher_forcing(self):
        g = make_generator(max_len=6)
        batch = g.sample(16)
        ids = to_tensor(batch.sequences)
        lp, _ = g.model(ids[:, :-1])
        picked = lp.gather(2, ids[:, 1:].unsqueeze(2)).squeeze(2)
        for i, s in enumerate(batch.sequences):
            want = picked[i, : s.length - 1].double()
            got = torch.tensor(batch.step_log_probs[i][1:], dtype=torch.float64)
            torch.testing.assert_close(got, want, atol=1e-5, rtol=1e-5)

    def test_reproducible_with_seed(self):
        a = make_generator(seed=3).sample(10).sequences
        b = make_generator(seed=3).sample(10).sequences
        assert a == b

    def test_bad_n(self):
        with pytest.raises(ValueError):
            make_generator().sample(0)


class TestLanguageModel:
    def test_untrained_loss_near_log_v(self):
        V = 60
        torch.manual_seed(0)
        g = Generator(GeneratorModel(V, 32, 64), 12)
        ids = torch.randint(4, V, (32, 12))
        ids[:, 0] = BOS
        loss = nll_loss(g.model, ids).item()
        assert abs(loss - math.log(V)) <= 0.1 * math.log(V)

    def test_memorizes_single_sentence(self):
        g = make_generator(V=7, max_len=6, lr=1e-2)
        a, b, c = 4, 5, 6
        target = seq([BOS, a, b, c, EOS], 6)
        for _ in range(300):
            loss = g.nll_step([target] * 8)
        assert loss < 0.01
        samples = g.sample(500).sequences
        hits = sum(s == target for s in samples)
        assert hits / 500 > 0.95

    def test_nll_ignores_padding(self):
        g = make_generator(max_len=8)
        short = seq([BOS, 4, 5, EOS], 5)
        longer = seq([BOS, 4, 5, EOS], 8)
        a = nll_loss(g.model, to_tensor([short])).item()
        b = nll_loss(g.model, to_tensor([longer])).item()
        assert a == pytest.approx(b, abs=1e-6)


class TestRollout:
    def test_full_prefix_adds_one_token(self):
        g = make_generator(max_len=5)
        prefix = seq([BOS, 4, 5, 6], 5)
        for c in g.rollout(prefix, 10):
            assert c.ids[:4] == prefix.ids[:4] and c.length == 5

    def test_greedy_rollout_equals_greedy_decode(self):
        g = make_generator(max_len=8, temperature=0.0)
        greedy = g.sample(1).sequences[0]
        if greedy.length < 3:
            pytest.skip("greedy decode ends immediately")
        prefix = seq(greedy.ids[:2], 8)
        assert g.rollout(prefix, 1)[0] == greedy

    def test_prefix_is_kept(self):
        g = make_generator(max_len=8)
        prefix = seq([BOS, 5, 6], 8)
        outs = g.rollout(prefix, 16)
        assert len(outs) == 16
        assert all(o.ids[:3] == (BOS, 5, 6) for o in outs)

    @pytest.mark.parametrize("ids", [[4, 5], [BOS, 4, EOS], [BOS, 4, 5, 6, 7, 4]])
    def test_invalid_prefix(self, ids):
        g = make_generator(max_len=6)
        with pytest.raises(ValueError):
            g.rollout(seq(ids, 6), 2)

    def test_k_must_be_positive(self):
        with pytest.raises(ValueError):
            make_generator().rollout(seq([BOS, 4], 6), 0)

    def test_rollout_batch_layout(self):
        g = make_generator(max_len=6)
        seqs = [seq([BOS, 4, 5, EOS], 6), seq([BOS, EOS], 6), seq([BOS, 4, 5, 6, 7, 4], 6)]
        out = g.rollout_batch(seqs, 3)
        assert [len(o) for o in out] == [2, 0, 4]
        for s, per_seq in zip(seqs, out):
            for t, group in enumerate(per_seq, start=1):
                assert len(group) == 3
                assert all(c.ids[: t + 1] == s.ids[: t + 1] for c in group)


def sampled_batch(g, n=8):
    return g.sample(n)


class TestReinforce:
    def test_zero_advantage_is_a_no_op(self):
        g = make_generator()
        batch = sampled_batch(g)
        before = flat_params(g.model).clone()
        rewards = [[0.3] * s.length for s in batch.sequences]
        assert g.reinforce_step(batch, rewards, baseline=0.3) == 0.0
        assert torch.equal(before, flat_params(g.model))

    def test_single_sequence_ascent(self):
        g = make_generator(lr=1e-4)
        batch = g.sample(1)
        before = g.mean_log_prob(batch.sequences)
        g.reinforce_step(batch, [[1.0] * batch.sequences[0].length], baseline=0.0)
        assert g.mean_log_prob(batch.sequences) > before

    def test_negative_advantage_descends(self):
        g = make_generator(lr=1e-4)
        batch = g.sample(4)
        before = g.mean_log_prob(batch.sequences)
        g.reinforce_step(batch, [[0.0] * s.length for s in batch.sequences], baseline=1.0)
        assert g.mean_log_prob(batch.sequences) < before

    def test_misaligned_rewards(self):
        g = make_generator()
        batch = g.sample(2)
        with pytest.raises(ValueError):
            g.reinforce_step(batch, [[1.0]], 0.0)
        with pytest.raises(ValueError):
            g.reinforce_step(batch, [[1.0] * (s.length + 1) for s in batch.sequences], 0.0)

    def test_bos_reward_column_ignored(self):
        g = make_generator()
        batch = sampled_batch(g, 4)
        ids = to_tensor(batch.sequences)
        r = torch.rand(ids.shape, dtype=torch.float64)
        r2 = r.clone()
        r2[:, 0] = 99.0
        assert policy_loss(g.model, ids, r, 0.1).item() == policy_loss(g.model, ids, r2, 0.1).item()


class TestGradients:
    def test_policy_loss_finite_differences(self):
        torch.manual_seed(0)
        model = GeneratorModel(3 + 2, 3, 4).double()  # vocab 5, three specials in use
        ids = torch.tensor([[BOS, 3, EOS], [BOS, 4, 3]])
        rewards = torch.tensor([[0.0, 0.7, 0.2], [0.0, -0.4, 1.3]], dtype=torch.float64)
        err = relative_error(model, lambda: policy_loss(model, ids, rewards, 0.25))
        assert err < 1e-3

    def test_nll_finite_differences(self):
        torch.manual_seed(1)
        model = GeneratorModel(5, 3, 4).double()
        ids = torch.tensor([[BOS, 3, EOS], [BOS, 4, 3]])
        assert relative_error(model, lambda: nll_loss(model, ids)) < 1e-3


def test_generation_batch_complete_flags():
    s1 = seq([BOS, 4, EOS], 4)
    s2 = seq([BOS, 4, 5, 6], 4)
    b = GenerationBatch([s1, s2], [[0.0, -1.0, -1.0], [0.0, -1.0, -1.0, -1.0]])
    assert b.complete == [True, False]
