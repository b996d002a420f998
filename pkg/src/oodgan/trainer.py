"""Four-step OodGAN training: classifier, LM generator, discriminator, adversarial."""

from __future__ import annotations

import copy
import json
import logging
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch

from oodgan.classifier import Classifier, CnnClassifierModel
from oodgan.config import ClassifierConfig, TrainConfig
from oodgan.corpus import EOS, UNK, DatasetSplit, TokenSequence, Vocabulary, decode_tokens, encode
from oodgan.detector import Detector, epoch_order, fit, score_dataset
from oodgan.discriminator import Discriminator, DiscriminatorModel
from oodgan.filtering import FilterConfig, FilterReport, filter_generated
from oodgan.generator import GenerationBatch, Generator, GeneratorModel
from oodgan.metrics import fpr_at_tpr
from oodgan.nn_utils import batches, to_tensor

logger = logging.getLogger(__name__)

SOURCES = ("discriminator", "classifier")


class PhaseError(RuntimeError):
    """A training phase was requested before its prerequisites ran."""


class GeneratorCollapse(RuntimeError):
    """The generator keeps emitting the same few sequences."""


class QuotaError(RuntimeError):
    def __init__(self, message: str, report: FilterReport):
        super().__init__(message)
        self.report = report


@dataclass
class RewardVector:
    values: list[float]
    source: str

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"unknown reward source {self.source!r}")

    def __len__(self) -> int:
        return len(self.values)


def duplicate_fraction(seqs: Sequence[TokenSequence]) -> float:
    return 1.0 - len({s.ids for s in seqs}) / len(seqs)


def build_classifier(cfg: ClassifierConfig, vocab_size: int, num_classes: int, lr: float, embeddings=None) -> Classifier:
    model = CnnClassifierModel(
        vocab_size,
        num_classes,
        emb_dim=cfg.emb_dim,
        num_filters=cfg.num_filters,
        widths=cfg.widths,
        dense_dim=cfg.dense_dim,
        dropout=cfg.dropout,
        embeddings=embeddings,
    )
    return Classifier(model, lr=lr)


def classifier_hparams(cfg: ClassifierConfig, vocab_size: int, num_classes: int) -> dict:
    return {
        "vocab_size": vocab_size,
        "num_classes": num_classes,
        "emb_dim": cfg.emb_dim,
        "num_filters": cfg.num_filters,
        "widths": list(cfg.widths),
        "dense_dim": cfg.dense_dim,
        "dropout": cfg.dropout,
    }


class OodGanTrainer:
    """Owns the three networks and runs the training phases in order."""

    def __init__(self, cfg: TrainConfig, data: DatasetSplit, embeddings: torch.Tensor | None = None, log_path=None):
        if data.num_classes < 2:
            raise ValueError("need at least two IND intent classes")
        self.cfg = cfg
        self.data = data
        self.vocab: Vocabulary = data.vocab
        self.log_path = Path(log_path) if log_path else None
        self.log: list[dict] = []
        seed = cfg.seed
        V = data.vocab.size
        emb = cfg.generator.emb_dim

        torch.manual_seed(seed)
        self.classifier = build_classifier(
            cfg.classifier, V, data.num_classes, cfg.classifier.lr,
            embeddings if embeddings is not None and cfg.classifier.emb_dim == embeddings.shape[1] else None,
        )
        torch.manual_seed(seed + 1)
        gen_model = GeneratorModel(
            V, emb, cfg.generator.hidden_dim,
            embeddings=embeddings if embeddings is not None and emb == embeddings.shape[1] else None,
        )
        self.generator = Generator(
            gen_model, data.max_len, lr=cfg.generator.lr, temperature=cfg.generator.temperature, seed=seed + 2
        )
        torch.manual_seed(seed + 3)
        disc_model = DiscriminatorModel(
            V, cfg.discriminator.emb_dim, cfg.discriminator.hidden_dim, cfg.discriminator.num_layers,
            embeddings=embeddings if embeddings is not None and cfg.discriminator.emb_dim == embeddings.shape[1] else None,
        )
        self.discriminator = Discriminator(disc_model, lr=cfg.discriminator.lr, init_acc=cfg.discriminator.initial_accumulator)

        self.ready = {"classifier": False, "generator": False, "discriminator": False}
        self.baselines = {s: deque(maxlen=cfg.adversarial.baseline_window) for s in SOURCES}
        self.adv_epochs_done = 0
        self._train_seqs = [ex.sequence for ex in data.train]

    # -- bookkeeping -------------------------------------------------------
    def _record(self, **entry) -> None:
        self.log.append(entry)
        logger.info("%s", entry)
        if self.log_path is not None:
            with open(self.log_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")

    # -- step 1 ------------------------------------------------------------
    def pretrain_classifier(self) -> Classifier:
        c = self.cfg.classifier
        torch.manual_seed(self.cfg.seed + 10)
        valid = self.data.valid or self.data.train
        res = fit(
            self.classifier,
            self.data.train,
            max_epochs=c.max_epochs,
            batch_size=c.batch_size,
            seed=self.cfg.seed + 10,
            valid=valid,
            patience=c.patience,
            criterion="accuracy",
        )
        for h in res.history:
            self._record(phase="classifier", **h)
        self.classifier.freeze()
        self.ready["classifier"] = True
        return self.classifier

    # -- step 2 ------------------------------------------------------------
    def pretrain_generator(self) -> Generator:
        g = self.cfg.generator
        valid = [ex.sequence for ex in self.data.valid] or self._train_seqs
        best, best_state, stale = None, None, 0
        self._record(phase="generator", epoch=0, valid_ppl=self.generator.perplexity(valid))
        for epoch in range(1, g.pretrain_epochs + 1):
            order = epoch_order(len(self._train_seqs), self.cfg.seed + 20, epoch)
            losses = [self.generator.nll_step(b) for b in batches(self._train_seqs, g.batch_size, order)]
            ppl = self.generator.perplexity(valid)
            self._record(phase="generator", epoch=epoch, train_nll=float(np.mean(losses)), valid_ppl=ppl)
            if best is None or ppl < best:
                best, stale = ppl, 0
                best_state = copy.deepcopy(self.generator.model.state_dict())
            else:
                stale += 1
                if stale >= g.patience:
                    break
        self.generator.model.load_state_dict(best_state)
        self.ready["generator"] = True
        return self.generator

    # -- step 3 ------------------------------------------------------------
    def pretrain_discriminator(self) -> Discriminator:
        if not self.ready["generator"]:
            raise PhaseError("pretrain the generator before the discriminator")
        d = self.cfg.discriminator
        for epoch in range(1, d.pretrain_epochs + 1):
            order = epoch_order(len(self._train_seqs), self.cfg.seed + 30, epoch)
            losses = []
            for real in batches(self._train_seqs, d.batch_size, order):
                fake = self.generator.sample(len(real)).sequences
                losses.append(self.discriminator.train_step(real, fake))
            self._record(phase="discriminator", epoch=epoch, loss=float(np.mean(losses)))
        self.ready["discriminator"] = True
        return self.discriminator

    # -- rewards -----------------------------------------------------------
    def terminal_scorer(self, source: str) -> Callable[[torch.Tensor], torch.Tensor]:
        if source == "discriminator":
            return self.discriminator.score_ids
        if source == "classifier":
            return self.classifier.entropy_ids
        raise ValueError(f"unknown reward source {source!r}")

    def compute_rewards(
        self, batch: GenerationBatch, source: str, k: int | None = None, mode: str | None = None
    ) -> list[RewardVector]:
        return compute_rewards(
            self.generator,
            self.terminal_scorer(source),
            batch,
            source,
            self.cfg.adversarial.rollouts if k is None else k,
            mode or self.cfg.adversarial.reward_mode,
        )

    def _baseline(self, source: str, rewards: Sequence[RewardVector]) -> float:
        vals = [v for rv in rewards for v in rv.values[1:]]
        self.baselines[source].append(float(np.mean(vals)))
        return float(np.mean(self.baselines[source]))

    def _check_collapse(self, batch: GenerationBatch) -> float:
        frac = duplicate_fraction(batch.sequences)
        if frac > self.cfg.adversarial.collapse_threshold:
            top = max(set(s.ids for s in batch.sequences), key=lambda ids: sum(s.ids == ids for s in batch.sequences))
            example = " ".join(self.vocab.id_to_token[i] for i in top if i > EOS)
            raise GeneratorCollapse(
                f"duplicate fraction {frac:.2f} exceeds {self.cfg.adversarial.collapse_threshold}; "
                f"most frequent sample: {example!r}"
            )
        return frac

    # -- step 4 ------------------------------------------------------------
    def adversarial_epoch(self) -> dict:
        """Per real batch: generator step on discriminator reward, generator
        step on entropy reward, discriminator step. Rewards are never summed."""
        missing = [k for k, v in self.ready.items() if not v]
        if missing:
            raise PhaseError(f"adversarial training needs pretrained {', '.join(missing)}")
        a = self.cfg.adversarial
        self.adv_epochs_done += 1
        epoch = self.adv_epochs_done
        order = epoch_order(len(self._train_seqs), self.cfg.seed + 40, epoch)
        stats = {"g_loss_disc": [], "g_loss_ent": [], "d_loss": [], "reward_disc": [], "reward_ent": [], "dup": []}
        for real in batches(self._train_seqs, a.batch_size, order):
            n = len(real)
            s1 = self.generator.sample(n)
            stats["dup"].append(self._check_collapse(s1))
            r1 = self.compute_rewards(s1, "discriminator")
            stats["g_loss_disc"].append(self.generator.reinforce_step(s1, [r.values for r in r1], self._baseline("discriminator", r1)))
            stats["reward_disc"].append(float(np.mean([r.values[-1] for r in r1])))

            s2 = self.generator.sample(n)
            stats["dup"].append(self._check_collapse(s2))
            r2 = self.compute_rewards(s2, "classifier")
            stats["g_loss_ent"].append(self.generator.reinforce_step(s2, [r.values for r in r2], self._baseline("classifier", r2)))
            stats["reward_ent"].append(float(np.mean([r.values[-1] for r in r2])))

            fake = self.generator.sample(n).sequences
            stats["d_loss"].append(self.discriminator.train_step(real, fake))
        summary = {k: float(np.mean(v)) for k, v in stats.items()}
        self._record(phase="adversarial", epoch=epoch, **summary)
        return summary

    def adversarial_training(self, epochs: int | None = None) -> list[dict]:
        a = self.cfg.adversarial
        epochs = a.epochs if epochs is None else epochs
        can_eval = a.eval_every > 0 and bool(self.data.valid_ood) and bool(self.data.valid)
        best, best_state, stale = None, None, 0
        out = []
        for _ in range(epochs):
            out.append(self.adversarial_epoch())
            if can_eval and self.adv_epochs_done % a.eval_every == 0:
                fpr = self.downstream_fpr95()
                self._record(phase="adversarial_eval", epoch=self.adv_epochs_done, valid_fpr95=fpr)
                if best is None or fpr < best:
                    best, stale = fpr, 0
                    best_state = (
                        copy.deepcopy(self.generator.model.state_dict()),
                        copy.deepcopy(self.discriminator.model.state_dict()),
                    )
                else:
                    stale += 1
                    if stale >= a.eval_patience:
                        break
        if best_state is not None:
            self.generator.model.load_state_dict(best_state[0])
            self.discriminator.model.load_state_dict(best_state[1])
        return out

    def downstream_fpr95(self) -> float:
        """Validation FPR0.95 of a detector trained on freshly generated OOD."""
        n = len(self.data.train)
        try:
            ood_tokens, _ = generate_ood(
                self.generator, self.vocab, self.data.train_tokens, n,
                filter_cfg(self.cfg), max_rounds=self.cfg.generation.max_rounds,
            )
        except QuotaError as exc:
            logger.warning("downstream evaluation skipped: %s", exc)
            return float("inf")
        ood = [encode(t, self.vocab, self.data.max_len) for t in ood_tokens]
        det = train_detector(self.cfg, self.data, ood)
        scores = score_dataset(det.classifier, self.data.valid, self.data.valid_ood)
        return fpr_at_tpr(scores, 0.95)

    def train(self) -> None:
        self.pretrain_classifier()
        self.pretrain_generator()
        self.pretrain_discriminator()
        self.adversarial_training()


def compute_rewards(
    generator: Generator,
    scorer: Callable[[torch.Tensor], torch.Tensor],
    batch: GenerationBatch,
    source: str,
    k: int,
    mode: str = "rollout",
) -> list[RewardVector]:
    """Per-step rewards for each sampled sequence.

    The action at position t < T is worth the mean terminal score of k
    rollouts from the prefix ending at t; the final action gets the score of
    the sequence itself. ``terminal_only`` gives every step that final score.
    Position 0 (the fixed BOS) copies the value of position 1.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if mode not in ("rollout", "terminal_only"):
        raise ValueError(f"unknown reward mode {mode!r}")
    seqs = batch.sequences
    direct = scorer(to_tensor(seqs)).tolist()
    if mode == "terminal_only":
        return [RewardVector([direct[i]] * s.length, source) for i, s in enumerate(seqs)]

    completions = generator.rollout_batch(seqs, k)
    flat = [c for per_seq in completions for group in per_seq for c in group]
    scores = scorer(to_tensor(flat)).tolist() if flat else []
    out, pos = [], 0
    for i, s in enumerate(seqs):
        vals = []
        for _ in completions[i]:
            vals.append(float(np.mean(scores[pos : pos + k])))
            pos += k
        vals.append(direct[i])
        out.append(RewardVector([vals[0]] + vals, source))
    return out


def filter_cfg(cfg: TrainConfig) -> FilterConfig:
    return FilterConfig(metric=cfg.filter.metric, threshold=cfg.filter.threshold, dedupe=cfg.filter.dedupe)


def generate_ood(
    generator: Generator,
    vocab: Vocabulary,
    ind_tokens: Sequence[Sequence[str]],
    n: int,
    fcfg: FilterConfig,
    max_rounds: int = 20,
    round_size: int = 0,
) -> tuple[list[list[str]], FilterReport]:
    """Sample, filter, repeat until ``n`` utterances are accepted.

    Raises QuotaError (carrying the rejection report) after ``max_rounds``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    accepted: list[list[str]] = []
    report = FilterReport()
    seen: set = set()
    size = round_size or n
    for round_no in range(1, max_rounds + 1):
        batch = generator.sample(size)
        cand = []
        for seq in batch.sequences:
            if UNK in seq.content:
                report.total += 1
                report.rejected_examples.append((" ".join(decode_tokens(seq, vocab)), "contains_unk"))
                continue
            toks = decode_tokens(seq, vocab)
            if not toks:
                report.total += 1
                report.rejected_examples.append(("", "empty"))
                continue
            cand.append(toks)
        got, rep = filter_generated(cand, ind_tokens, fcfg, seen=seen)
        rep.rejected_examples = rep.rejected_examples[:50]
        report.merge(rep)
        accepted.extend(got)
        logger.info("generation round %d: %d/%d accepted so far", round_no, min(len(accepted), n), n)
        if len(accepted) >= n:
            report.accepted = n
            return accepted[:n], report
    report.accepted = len(accepted)
    raise QuotaError(
        f"only {len(accepted)} of {n} generated utterances passed the filter after {max_rounds} rounds "
        f"(rejections: {json.dumps(report.as_dict())})",
        report,
    )


def split_generated(ood: Sequence[TokenSequence], fraction: float, seed: int):
    """Hold out a deterministic slice of generated OOD for validation."""
    n_val = int(round(len(ood) * fraction))
    order = np.random.default_rng([seed, 99]).permutation(len(ood)).tolist()
    val = [ood[i] for i in order[:n_val]]
    train = [ood[i] for i in order[n_val:]]
    return train, val


def train_detector(
    cfg: TrainConfig, data: DatasetSplit, ood: Sequence[TokenSequence], lam: float | None = None, seed: int | None = None
) -> Detector:
    """Train the downstream detector; ``lam=0`` (or no OOD) is the no-OOD baseline."""
    d = cfg.detector
    lam = d.lam if lam is None else lam
    seed = cfg.seed if seed is None else seed
    ood_train, ood_valid = split_generated(ood, d.valid_fraction, seed) if ood else ([], [])
    if not ood_train:
        lam = 0.0
    torch.manual_seed(seed + 50)
    clf = build_classifier(cfg.classifier, data.vocab.size, data.num_classes, d.lr)
    det = Detector(clf.model, lam=lam, lr=d.lr)
    torch.manual_seed(seed + 51)
    det.train(
        data.train,
        ood_train,
        valid=data.valid,
        valid_ood=ood_valid,
        max_epochs=d.max_epochs,
        batch_size=d.batch_size,
        patience=d.patience,
        seed=seed + 52,
    )
    if data.valid and ood_valid:
        det.calibrate(data.valid, ood_valid)
    return det

