"""Small torch helpers shared by the three networks."""

from __future__ import annotations

import hashlib
import io
import logging
from pathlib import Path
from typing import Sequence

import torch
from torch import nn

from oodgan.corpus import PAD, TokenSequence, Vocabulary

logger = logging.getLogger(__name__)


class CheckpointError(ValueError):
    pass


def to_tensor(seqs: Sequence[TokenSequence], width: int | None = None) -> torch.Tensor:
    """Stack padded sequences into a LongTensor ``[batch, width]``."""
    if width is None:
        width = max(s.max_len for s in seqs)
    out = torch.full((len(seqs), width), PAD, dtype=torch.long)
    for i, s in enumerate(seqs):
        ids = s.ids[:width]
        out[i, : len(ids)] = torch.tensor(ids, dtype=torch.long)
    return out


def lengths_of(ids: torch.Tensor) -> torch.Tensor:
    return (ids != PAD).sum(dim=1)


def batches(items: Sequence, size: int, order: Sequence[int] | None = None):
    idx = range(len(items)) if order is None else order
    idx = list(idx)
    for start in range(0, len(idx), size):
        yield [items[i] for i in idx[start : start + size]]


def load_word_vectors(path: str | Path, vocab: Vocabulary, dim: int, seed: int = 0) -> torch.Tensor:
    """Read ``word v1 ... vD`` lines (fastText ``.vec`` header tolerated).

    Words missing from the file, specials included, get uniform(-0.1, 0.1).
    """
    gen = torch.Generator().manual_seed(seed)
    weights = torch.empty(vocab.size, dim).uniform_(-0.1, 0.1, generator=gen)
    found = 0
    with open(path, encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip().split(" ")
            if lineno == 1 and len(parts) == 2:
                continue
            if len(parts) != dim + 1:
                raise CheckpointError(f"{path}:{lineno}: expected a word and {dim} values")
            idx = vocab.token_to_id.get(parts[0])
            if idx is None:
                continue
            weights[idx] = torch.tensor([float(v) for v in parts[1:]])
            found += 1
    logger.info("pretrained vectors cover %d / %d vocabulary entries", found, vocab.size)
    return weights


def init_embedding(emb: nn.Embedding, vectors: torch.Tensor | None = None) -> None:
    with torch.no_grad():
        if vectors is not None:
            if tuple(vectors.shape) != tuple(emb.weight.shape):
                raise ValueError(f"embedding shape {tuple(vectors.shape)} != {tuple(emb.weight.shape)}")
            emb.weight.copy_(vectors)
        else:
            emb.weight.uniform_(-0.1, 0.1)


def flat_params(model: nn.Module) -> torch.Tensor:
    return torch.cat([p.detach().reshape(-1).clone() for p in model.parameters()])


def state_digest(model: nn.Module) -> str:
    h = hashlib.sha256()
    for name, t in model.state_dict().items():
        h.update(name.encode())
        h.update(t.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


def save_checkpoint(path: str | Path, model: nn.Module, vocab: Vocabulary, hparams: dict, config_hash: str = "") -> None:
    """Parameters plus the vocabulary fingerprint and model hyperparameters."""
    payload = {
        "state_dict": model.state_dict(),
        "hparams": dict(hparams),
        "vocab_hash": vocab.fingerprint(),
        "config_hash": config_hash,
    }
    buf = io.BytesIO()
    torch.save(payload, buf)
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path: str | Path, vocab: Vocabulary | None = None) -> dict:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    if vocab is not None and payload["vocab_hash"] != vocab.fingerprint():
        raise CheckpointError(f"{path}: checkpoint was built with a different vocabulary")
    return payload
