"""GRU language-model generator trained by MLE and by REINFORCE."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import torch
import torch.nn.functional as F
from torch import nn

from oodgan.corpus import BOS, EOS, PAD, TokenSequence
from oodgan.nn_utils import init_embedding, to_tensor

# finite stand-in for -inf so masked entries never produce NaN gradients
_MASKED = -1e9


class GeneratorModel(nn.Module):
    """Embedding -> single-layer GRU -> projection over the vocabulary.

    PAD and BOS are masked out of every next-token distribution.
    """

    def __init__(self, vocab_size: int, emb_dim: int = 300, hidden_dim: int = 256, embeddings=None):
        super().__init__()
        self.vocab_size = vocab_size
        self.emb_dim = emb_dim
        self.hidden_dim = hidden_dim
        self.embedding = nn.Embedding(vocab_size, emb_dim)
        self.gru = nn.GRU(emb_dim, hidden_dim, num_layers=1, batch_first=True)
        self.out = nn.Linear(hidden_dim, vocab_size)
        init_embedding(self.embedding, embeddings)
        mask = torch.zeros(vocab_size, dtype=torch.bool)
        mask[[PAD, BOS]] = True
        self.register_buffer("banned", mask, persistent=False)

    def logits(self, hidden: torch.Tensor, temperature: float = 1.0) -> torch.Tensor:
        z = self.out(hidden)
        if temperature not in (0.0, 1.0):
            z = z / temperature
        return z.masked_fill(self.banned, _MASKED)

    def forward(self, inputs: torch.Tensor, h0: torch.Tensor | None = None):
        """Teacher-forced pass. Returns (log-probs ``[B, L, V]``, per-position hidden states)."""
        states, _ = self.gru(self.embedding(inputs), h0)
        return F.log_softmax(self.logits(states), dim=-1), states

    def advance(self, tokens: torch.Tensor, h: torch.Tensor | None) -> torch.Tensor:
        """Consume one token per row; returns the new hidden state ``[B, H]``."""
        _, h_new = self.gru(self.embedding(tokens).unsqueeze(1), None if h is None else h.unsqueeze(0))
        return h_new.squeeze(0)


@dataclass
class GenerationBatch:
    """Sampled sequences with the log-probability of each step.

    Entry 0 of every ``step_log_probs`` row belongs to the fixed BOS start
    and is 0.0, so each row has exactly ``sequence.length`` entries.
    """

    sequences: list[TokenSequence]
    step_log_probs: list[list[float]]

    @property
    def complete(self) -> list[bool]:
        return [s.complete for s in self.sequences]

    def __len__(self) -> int:
        return len(self.sequences)


def sequence_log_probs(model: GeneratorModel, ids: torch.Tensor) -> torch.Tensor:
    """Log-prob of each token given its prefix, ``[B, L-1]``; zero at PAD targets."""
    lp, _ = model(ids[:, :-1])
    tgt = ids[:, 1:]
    picked = lp.gather(2, tgt.unsqueeze(2)).squeeze(2)
    return picked.masked_fill(tgt == PAD, 0.0)


def nll_loss(model: GeneratorModel, ids: torch.Tensor) -> torch.Tensor:
    """Mean per-token negative log-likelihood over non-PAD targets."""
    picked = sequence_log_probs(model, ids)
    n = (ids[:, 1:] != PAD).sum()
    return -picked.sum() / n


def policy_loss(model: GeneratorModel, ids: torch.Tensor, rewards: torch.Tensor, baseline: float) -> torch.Tensor:
    """REINFORCE surrogate: -mean over sampled steps of log p(token) * (reward - baseline).

    ``rewards`` is ``[B, L]`` aligned with ``ids``; column 0 (BOS) is ignored.
    """
    picked = sequence_log_probs(model, ids)
    valid = ids[:, 1:] != PAD
    adv = (rewards[:, 1:] - baseline).to(picked.dtype)
    return -(picked * adv * valid).sum() / valid.sum()


class Generator:
    """Trainable sampling policy wrapping a :class:`GeneratorModel`."""

    def __init__(
        self,
        model: GeneratorModel,
        max_len: int,
        lr: float = 1e-3,
        temperature: float = 1.0,
        seed: int = 0,
    ):
        if max_len < 2:
            raise ValueError("max_len must be >= 2")
        self.model = model
        self.max_len = max_len
        self.temperature = temperature
        self.optimizer = torch.optim.Adam(model.parameters(), lr=lr)
        self.rng = torch.Generator().manual_seed(seed)

    def _draw(self, logp: torch.Tensor) -> torch.Tensor:
        if self.temperature == 0.0:
            return logp.argmax(dim=-1)
        return torch.multinomial(logp.exp(), 1, generator=self.rng).squeeze(1)

    def _continue(self, buf: torch.Tensor, cur: torch.Tensor, h: torch.Tensor, logps: torch.Tensor | None):
        """Extend each row of ``buf`` in place from position ``cur`` until EOS or max_len.

        ``h`` is the hidden state after consuming ``buf[r, cur[r] - 1]``.
        """
        rows = torch.arange(buf.shape[0])
        active = cur < self.max_len
        while bool(active.any()):
            idx = rows[active]
            logp = F.log_softmax(self.model.logits(h[idx], self.temperature or 1.0), dim=-1)
            tok = self._draw(logp)
            pos = cur[idx]
            buf[idx, pos] = tok
            if logps is not None:
                logps[idx, pos] = logp.gather(1, tok.unsqueeze(1)).squeeze(1).to(logps.dtype)
            cur[idx] = pos + 1
            still = (tok != EOS) & (pos + 1 < self.max_len)
            h_new = h.clone()
            if bool(still.any()):
                h_new[idx[still]] = self.model.advance(tok[still], h[idx[still]])
            h = h_new
            active = active.clone()
            active[idx[~still]] = False
        return buf

    def sample(self, n: int, max_len: int | None = None) -> GenerationBatch:
        if n < 1:
            raise ValueError("n must be >= 1")
        if max_len is not None and max_len != self.max_len:
            saved, self.max_len = self.max_len, max_len
            try:
                return self.sample(n)
            finally:
                self.max_len = saved
        self.model.eval()
        with torch.no_grad():
            buf = torch.full((n, self.max_len), PAD, dtype=torch.long)
            buf[:, 0] = BOS
            logps = torch.zeros(n, self.max_len, dtype=torch.float64)
            h = self.model.advance(buf[:, 0], None)
            self._continue(buf, torch.ones(n, dtype=torch.long), h, logps)
        seqs = [TokenSequence(tuple(row)) for row in buf.tolist()]
        step_lp = [logps[i, : s.length].tolist() for i, s in enumerate(seqs)]
        return GenerationBatch(seqs, step_lp)

    def rollout(self, prefix: TokenSequence, k: int, max_len: int | None = None) -> list[TokenSequence]:
        """Complete ``prefix`` k times under the current policy."""
        ids = prefix.ids[: prefix.length]
        if not ids or ids[0] != BOS:
            raise ValueError("prefix must start with BOS")
        if EOS in ids or len(ids) >= (max_len or self.max_len):
            raise ValueError("prefix is already complete")
        if max_len is not None and max_len != self.max_len:
            saved, self.max_len = self.max_len, max_len
            try:
                return self.rollout(prefix, k)
            finally:
                self.max_len = saved
        return self.rollout_prefixes([ids], k)

    def rollout_prefixes(self, prefixes: Sequence[Sequence[int]], k: int) -> list[TokenSequence]:
        """k completions per prefix, returned prefix-major (prefix 0's k first)."""
        if k < 1:
            raise ValueError("k must be >= 1")
        self.model.eval()
        with torch.no_grad():
            n = len(prefixes)
            buf = torch.full((n, self.max_len), PAD, dtype=torch.long)
            for i, p in enumerate(prefixes):
                buf[i, : len(p)] = torch.tensor(p, dtype=torch.long)
            cur = torch.tensor([len(p) for p in prefixes], dtype=torch.long)
            _, states = self.model(buf)
            h = states[torch.arange(n), cur - 1]
            buf = buf.repeat_interleave(k, dim=0)
            h = h.repeat_interleave(k, dim=0)
            cur = cur.repeat_interleave(k)
            self._continue(buf, cur, h, None)
        return [TokenSequence(tuple(row)) for row in buf.tolist()]

    def rollout_batch(self, seqs: Sequence[TokenSequence], k: int) -> list[list[list[TokenSequence]]]:
        """For every sequence and every proper prefix ending at an action,
        k completions: ``out[i][t - 1]`` holds those for prefix ``ids[: t + 1]``,
        t = 1 .. length - 2."""
        prefixes, owners = [], []
        for i, s in enumerate(seqs):
            for t in range(1, s.length - 1):
                prefixes.append(s.ids[: t + 1])
                owners.append(i)
        out: list[list[list[TokenSequence]]] = [[] for _ in seqs]
        if not prefixes:
            return out
        done = self.rollout_prefixes(prefixes, k)
        for j, owner in enumerate(owners):
            out[owner].append(done[j * k : (j + 1) * k])
        return out

    def nll_step(self, batch: Sequence[TokenSequence]) -> float:
        if not batch:
            raise ValueError("batch is empty")
        self.model.train()
        loss = nll_loss(self.model, to_tensor(batch))
        self.optimizer.zero_grad()
        loss.backward()
        self.optimizer.step()
        return loss.item()

    def perplexity(self, seqs: Sequence[TokenSequence], batch_size: int = 256) -> float:
        self.model.eval()
        total, count = 0.0, 0
        with torch.no_grad():
            for start in range(0, len(seqs), batch_size):
                ids = to_tensor(seqs[start : start + batch_size])
                total -= float(sequence_log_probs(self.model, ids).sum())
                count += int((ids[:, 1:] != PAD).sum())
        return float(torch.exp(torch.tensor(total / count)))

    def reinforce_step(self, batch: GenerationBatch, rewards: Sequence[Sequence[float]], baseline: float) -> float:
        """One Adam step on the REINFORCE loss; skipped when every advantage is zero."""
        if len(rewards) != len(batch.sequences):
            raise ValueError(f"{len(rewards)} reward vectors for {len(batch.sequences)} sequences")
        width = batch.sequences[0].max_len
        r = torch.zeros(len(rewards), width, dtype=torch.float64)
        for i, (seq, rv) in enumerate(zip(batch.sequences, rewards)):
            if len(rv) != seq.length:
                raise ValueError(f"reward vector {i} has {len(rv)} entries for a length-{seq.length} sequence")
            r[i, : len(rv)] = torch.as_tensor(list(rv), dtype=torch.float64)
        ids = to_tensor(batch.sequences)
        valid = ids[:, 1:] != PAD
        if not bool(((r[:, 1:] - baseline) * valid).ne(0).any()):
            return 0.0
        self.model.train()
        loss = policy_loss(self.model, ids, r, baseline)
        self.optimizer.zero_grad()
        loss.backward()
        self.optimizer.step()
        return loss.item()

    def mean_log_prob(self, seqs: Sequence[TokenSequence]) -> float:
        """Mean total log-probability per sequence under the current parameters."""
        self.model.eval()
        with torch.no_grad():
            return float(sequence_log_probs(self.model, to_tensor(seqs)).sum(dim=1).mean())
