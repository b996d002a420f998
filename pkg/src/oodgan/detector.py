"""Threshold-based OOD detector trained with an OOD flattening term."""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch

from oodgan.classifier import Classifier, CnnClassifierModel, cross_entropy, negative_entropy
from oodgan.corpus import LabeledExample, TokenSequence
from oodgan.metrics import DetectionScores, select_threshold
from oodgan.nn_utils import to_tensor

logger = logging.getLogger(__name__)


def epoch_order(n: int, seed: int, epoch: int) -> list[int]:
    """Shuffled index order for one epoch, reproducible from (seed, epoch)."""
    return np.random.default_rng([seed, epoch]).permutation(n).tolist()


@dataclass
class FitResult:
    epochs_run: int
    best_epoch: int
    history: list[dict]


def fit(
    clf: Classifier,
    train: Sequence[LabeledExample],
    ood: Sequence[TokenSequence] = (),
    lam: float = 0.0,
    *,
    max_epochs: int = 50,
    batch_size: int = 64,
    seed: int = 0,
    valid: Sequence[LabeledExample] = (),
    valid_ood: Sequence[TokenSequence] = (),
    patience: int | None = 5,
    criterion: str = "objective",
) -> FitResult:
    """Minimize CE(IND) + lam * mean_OOD sum p ln p with 1:1 interleaved batches.

    With ``lam == 0`` no OOD forward pass is made, so the parameter trajectory
    is exactly that of plain cross-entropy training. Early stopping watches
    ``criterion`` on the validation data ("objective": lower is better,
    "accuracy": higher is better, ties broken by the objective) and restores
    the best parameters.
    """
    if lam < 0:
        raise ValueError("lam must be >= 0")
    if not train:
        raise ValueError("no IND training data")
    if lam > 0 and not ood:
        raise ValueError("lam > 0 needs OOD training data")
    use_ood = lam > 0
    model = clf.model
    history = []
    best_val, best_state, best_epoch, stale = None, None, 0, 0
    track = patience is not None and bool(valid)
    ood_rng = np.random.default_rng([seed, 7919])
    ood_ptr, ood_order = 0, []

    for epoch in range(1, max_epochs + 1):
        order = epoch_order(len(train), seed, epoch)
        losses = []
        for start in range(0, len(order), batch_size):
            batch = [train[i] for i in order[start : start + batch_size]]
            ids = to_tensor([ex.sequence for ex in batch])
            labels = torch.tensor([ex.label for ex in batch], dtype=torch.long)
            model.train()
            loss = cross_entropy(model, ids, labels)
            if use_ood:
                ood_batch = []
                while len(ood_batch) < len(batch):
                    if ood_ptr >= len(ood_order):
                        ood_order = ood_rng.permutation(len(ood)).tolist()
                        ood_ptr = 0
                    ood_batch.append(ood[ood_order[ood_ptr]])
                    ood_ptr += 1
                loss = loss + lam * negative_entropy(model(to_tensor(ood_batch)))
            clf.optimizer.zero_grad()
            loss.backward()
            clf.optimizer.step()
            losses.append(loss.item())

        record = {"epoch": epoch, "train_loss": float(np.mean(losses))}
        if track:
            objective = validation_objective(clf, valid, valid_ood, lam)
            record["valid_objective"] = objective
            if criterion == "accuracy":
                record["valid_accuracy"] = clf.accuracy(valid)
                # accuracy saturates early on easy data; break ties on the objective
                val = (-record["valid_accuracy"], objective)
            else:
                val = objective
            better = best_val is None or val < best_val
            if better:
                best_val, best_epoch, stale = val, epoch, 0
                best_state = copy.deepcopy(model.state_dict())
            else:
                stale += 1
        history.append(record)
        logger.debug("fit epoch %s", record)
        if track and stale >= patience:
            break

    if best_state is not None:
        model.load_state_dict(best_state)
    return FitResult(epochs_run=len(history), best_epoch=best_epoch or len(history), history=history)


def validation_objective(
    clf: Classifier, valid: Sequence[LabeledExample], valid_ood: Sequence[TokenSequence], lam: float
) -> float:
    model = clf.model
    model.eval()
    with torch.no_grad():
        ids = to_tensor([ex.sequence for ex in valid])
        labels = torch.tensor([ex.label for ex in valid], dtype=torch.long)
        val = float(cross_entropy(model, ids, labels))
        if lam > 0 and valid_ood:
            val += lam * float(negative_entropy(model(to_tensor(list(valid_ood)))))
    return val


class Detector:
    """CNN intent classifier plus the weight of its OOD flattening term."""

    def __init__(self, model: CnnClassifierModel, lam: float = 1.0, lr: float = 1e-4):
        if lam < 0:
            raise ValueError("lam must be >= 0")
        self.classifier = Classifier(model, lr=lr)
        self.lam = lam
        self.threshold: float | None = None

    @property
    def model(self) -> CnnClassifierModel:
        return self.classifier.model

    def train(
        self,
        ind: Sequence[LabeledExample],
        ood: Sequence[TokenSequence],
        *,
        valid: Sequence[LabeledExample] = (),
        valid_ood: Sequence[TokenSequence] = (),
        max_epochs: int = 50,
        batch_size: int = 64,
        patience: int | None = 5,
        seed: int = 0,
    ) -> FitResult:
        return fit(
            self.classifier,
            ind,
            ood,
            self.lam,
            max_epochs=max_epochs,
            batch_size=batch_size,
            seed=seed,
            valid=valid,
            valid_ood=valid_ood,
            patience=patience,
            criterion="objective",
        )

    def score_dataset(self, ind: Sequence[LabeledExample], ood: Sequence[TokenSequence] = ()) -> DetectionScores:
        return score_dataset(self.classifier, ind, ood)

    def calibrate(self, valid: Sequence[LabeledExample], valid_ood: Sequence[TokenSequence]) -> tuple[float, float]:
        """Pick the joint-accuracy-maximizing threshold on validation data."""
        self.threshold, acc = select_threshold(self.score_dataset(valid, valid_ood))
        return self.threshold, acc


def score_dataset(
    clf: Classifier, ind: Sequence[LabeledExample], ood: Sequence[TokenSequence] = ()
) -> DetectionScores:
    """One record per input, IND first then OOD, in input order."""
    seqs = [ex.sequence for ex in ind] + list(ood)
    if not seqs:
        return DetectionScores.from_records([])
    probs = clf.predict_many(seqs).numpy()
    true = np.array([ex.label for ex in ind] + [-1] * len(ood), dtype=np.int64)
    return DetectionScores(
        score=probs.max(axis=1),
        is_ood=true < 0,
        pred_label=probs.argmax(axis=1),
        true_label=true,
    )
