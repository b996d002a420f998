"""Bidirectional GRU discriminator: probability that a sequence is real IND text."""

from __future__ import annotations

from typing import Sequence

import torch
import torch.nn.functional as F
from torch import nn
from torch.nn.utils.rnn import pack_padded_sequence

from oodgan.corpus import TokenSequence
from oodgan.nn_utils import init_embedding, lengths_of, to_tensor


class DiscriminatorModel(nn.Module):
    def __init__(self, vocab_size: int, emb_dim: int = 300, hidden_dim: int = 256, num_layers: int = 2, embeddings=None):
        super().__init__()
        self.vocab_size = vocab_size
        self.emb_dim = emb_dim
        self.hidden_dim = hidden_dim
        self.num_layers = num_layers
        self.embedding = nn.Embedding(vocab_size, emb_dim)
        self.gru = nn.GRU(emb_dim, hidden_dim, num_layers=num_layers, bidirectional=True, batch_first=True)
        self.hidden = nn.Linear(2 * hidden_dim, hidden_dim)
        self.head = nn.Linear(hidden_dim, 1)
        init_embedding(self.embedding, embeddings)

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        """Logit per row; trailing PAD is packed away and never read."""
        lengths = lengths_of(ids).clamp(min=1)
        packed = pack_padded_sequence(self.embedding(ids), lengths.cpu(), batch_first=True, enforce_sorted=False)
        _, h_n = self.gru(packed)
        # last layer, forward and backward final states
        final = torch.cat([h_n[-2], h_n[-1]], dim=1)
        return self.head(torch.tanh(self.hidden(final))).squeeze(1)


def bce_loss(model: DiscriminatorModel, real: torch.Tensor, fake: torch.Tensor) -> torch.Tensor:
    """Binary cross-entropy with real labelled 1 and generated labelled 0."""
    logits = model(torch.cat([real, fake], dim=0))
    target = torch.cat([torch.ones(len(real)), torch.zeros(len(fake))]).to(logits.dtype)
    return F.binary_cross_entropy_with_logits(logits, target)


class Discriminator:
    def __init__(self, model: DiscriminatorModel, lr: float = 0.1, init_acc: float = 0.1):
        self.model = model
        self.optimizer = torch.optim.Adagrad(model.parameters(), lr=lr, initial_accumulator_value=init_acc)

    def score_ids(self, ids: torch.Tensor, batch_size: int = 1024) -> torch.Tensor:
        self.model.eval()
        with torch.no_grad():
            parts = [torch.sigmoid(self.model(ids[i : i + batch_size])) for i in range(0, len(ids), batch_size)]
        return torch.cat(parts).double()

    def score_many(self, seqs: Sequence[TokenSequence]) -> list[float]:
        return self.score_ids(to_tensor(seqs)).tolist()

    def score(self, seq: TokenSequence) -> float:
        return self.score_many([seq])[0]

    def train_step(self, real: Sequence[TokenSequence], fake: Sequence[TokenSequence]) -> float:
        if not real or not fake:
            raise ValueError("real and fake batches must be non-empty")
        width = max(s.max_len for s in [*real, *fake])
        self.model.train()
        loss = bce_loss(self.model, to_tensor(real, width), to_tensor(fake, width))
        self.optimizer.zero_grad()
        loss.backward()
        self.optimizer.step()
        return loss.item()

    def accuracy(self, real: Sequence[TokenSequence], fake: Sequence[TokenSequence]) -> float:
        r = torch.tensor(self.score_many(real))
        f = torch.tensor(self.score_many(fake))
        return float(((r > 0.5).sum() + (f < 0.5).sum()) / (len(r) + len(f)))
