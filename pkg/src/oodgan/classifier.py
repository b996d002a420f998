"""CNN intent classifier and the Shannon-entropy reward built on it."""

from __future__ import annotations

from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from oodgan.corpus import LabeledExample, TokenSequence
from oodgan.nn_utils import init_embedding, to_tensor


class CnnClassifierModel(nn.Module):
    """Kim-style CNN: parallel conv banks, max-pool over time, two dense layers."""

    def __init__(
        self,
        vocab_size: int,
        num_classes: int,
        emb_dim: int = 300,
        num_filters: int = 256,
        widths: Sequence[int] = (2, 3, 4, 5),
        dense_dim: int = 256,
        dropout: float = 0.5,
        embeddings=None,
    ):
        super().__init__()
        if num_classes < 2:
            raise ValueError("need at least two intent classes")
        self.vocab_size = vocab_size
        self.num_classes = num_classes
        self.widths = tuple(widths)
        self.embedding = nn.Embedding(vocab_size, emb_dim, padding_idx=0)
        init_embedding(self.embedding, embeddings)
        with torch.no_grad():
            self.embedding.weight[0].zero_()
        self.convs = nn.ModuleList(nn.Conv1d(emb_dim, num_filters, w) for w in self.widths)
        self.dropout = nn.Dropout(dropout)
        self.dense = nn.Linear(num_filters * len(self.widths), dense_dim)
        self.out = nn.Linear(dense_dim, num_classes)

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        """Class logits ``[B, m]``."""
        widest = max(self.widths)
        if ids.shape[1] < widest:
            ids = F.pad(ids, (0, widest - ids.shape[1]))
        x = self.embedding(ids).transpose(1, 2)
        pooled = [F.leaky_relu(conv(x)).amax(dim=2) for conv in self.convs]
        h = self.dropout(torch.cat(pooled, dim=1))
        h = self.dropout(F.leaky_relu(self.dense(h)))
        return self.out(h)


def shannon_entropy(probs) -> np.ndarray | torch.Tensor:
    """-sum p ln p along the last axis, with 0 ln 0 = 0."""
    if isinstance(probs, torch.Tensor):
        return -torch.special.xlogy(probs, probs).sum(dim=-1)
    p = np.asarray(probs, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    return -terms.sum(axis=-1)


def negative_entropy(logits: torch.Tensor) -> torch.Tensor:
    """Mean over rows of sum p ln p (minimizing it flattens the distribution)."""
    logp = F.log_softmax(logits, dim=-1)
    return (logp.exp() * logp).sum(dim=-1).mean()


def cross_entropy(model: CnnClassifierModel, ids: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    return F.cross_entropy(model(ids), labels)


class Classifier:
    """Trainable wrapper; ``predict`` and ``entropy_reward`` run in eval mode."""

    def __init__(self, model: CnnClassifierModel, lr: float = 1e-4):
        self.model = model
        self.optimizer = torch.optim.Adam(model.parameters(), lr=lr)
        self.frozen = False

    @property
    def num_classes(self) -> int:
        return self.model.num_classes

    def freeze(self) -> None:
        self.frozen = True
        for p in self.model.parameters():
            p.requires_grad_(False)

    def predict_ids(self, ids: torch.Tensor, batch_size: int = 1024) -> torch.Tensor:
        self.model.eval()
        with torch.no_grad():
            parts = [
                F.softmax(self.model(ids[i : i + batch_size]).double(), dim=-1) for i in range(0, len(ids), batch_size)
            ]
        return torch.cat(parts)

    def predict_many(self, seqs: Sequence[TokenSequence]) -> torch.Tensor:
        return self.predict_ids(to_tensor(seqs))

    def predict(self, seq: TokenSequence) -> np.ndarray:
        return self.predict_many([seq])[0].numpy()

    def entropy_ids(self, ids: torch.Tensor) -> torch.Tensor:
        return shannon_entropy(self.predict_ids(ids))

    def entropy_reward(self, seq: TokenSequence) -> float:
        return float(shannon_entropy(self.predict(seq)))

    def train_step(self, batch: Sequence[LabeledExample]) -> float:
        if self.frozen:
            raise RuntimeError("classifier is frozen")
        labels = torch.tensor([ex.label for ex in batch], dtype=torch.long)
        if bool((labels >= self.num_classes).any()) or bool((labels < 0).any()):
            raise ValueError("label out of range")
        self.model.train()
        loss = cross_entropy(self.model, to_tensor([ex.sequence for ex in batch]), labels)
        self.optimizer.zero_grad()
        loss.backward()
        self.optimizer.step()
        return loss.item()

    def accuracy(self, examples: Sequence[LabeledExample]) -> float:
        if not examples:
            return 0.0
        probs = self.predict_many([ex.sequence for ex in examples])
        labels = torch.tensor([ex.label for ex in examples])
        return float((probs.argmax(dim=1) == labels).double().mean())
