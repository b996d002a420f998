"""Command-line pipeline: train, generate, evaluate, plot."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import torch

from oodgan.config import ConfigError, TrainConfig
from oodgan.corpus import (
    GENERATED_OOD_LABEL,
    OOD_LABEL,
    DatasetError,
    DatasetSplit,
    TokenSequence,
    Vocabulary,
    encode,
    load_dataset,
    read_generic_tsv,
    tokenize,
    write_generic_tsv,
)
from oodgan.generator import Generator, GeneratorModel
from oodgan.metrics import METRIC_KEYS, DetectionScores, MetricError, joint_accuracy, report, write_report
from oodgan.nn_utils import CheckpointError, load_checkpoint, load_word_vectors, save_checkpoint
from oodgan.plotting import PLOT_KINDS, render
from oodgan.trainer import (
    GeneratorCollapse,
    OodGanTrainer,
    PhaseError,
    QuotaError,
    classifier_hparams,
    filter_cfg,
    generate_ood,
    train_detector,
)

logger = logging.getLogger("oodgan")

CONFIG_FILE = "config.yaml"
VOCAB_FILE = "vocab.txt"
LABELS_FILE = "labels.txt"
LOG_FILE = "train_log.jsonl"


class CliError(RuntimeError):
    pass


# -- run directory helpers -------------------------------------------------

def _load_config(path: str, overrides: list[str], seed: int | None) -> TrainConfig:
    cfg = TrainConfig.load(path)
    extra = list(overrides or [])
    if seed is not None:
        extra.append(f"seed={seed}")
    return cfg.override(extra) if extra else cfg


def _run_config(run_dir: Path, overrides: list[str] | None = None, seed: int | None = None) -> TrainConfig:
    path = run_dir / CONFIG_FILE
    if not path.exists():
        raise CliError(f"{run_dir}: not a training run directory (missing {CONFIG_FILE})")
    return _load_config(str(path), overrides or [], seed)


def _load_data(cfg: TrainConfig, vocab: Vocabulary | None = None, labels=None) -> DatasetSplit:
    path = Path(cfg.data.path)
    if not cfg.data.path or not path.exists():
        raise CliError(f"dataset not found: {cfg.data.path!r} (set data.path)")
    return load_dataset(path, cfg.data.format, cfg.data.max_len, cfg.data.min_count, vocab=vocab, labels=labels)


def _run_data(run_dir: Path, cfg: TrainConfig) -> DatasetSplit:
    vocab = Vocabulary.load(run_dir / VOCAB_FILE)
    labels = (run_dir / LABELS_FILE).read_text(encoding="utf-8").splitlines()
    return _load_data(cfg, vocab=vocab, labels=labels)


def load_generator(run_dir: Path, cfg: TrainConfig, vocab: Vocabulary, seed: int) -> Generator:
    ckpt = load_checkpoint(run_dir / "generator.pt", vocab)
    hp = ckpt["hparams"]
    model = GeneratorModel(hp["vocab_size"], hp["emb_dim"], hp["hidden_dim"])
    model.load_state_dict(ckpt["state_dict"])
    return Generator(model, hp["max_len"], temperature=cfg.generator.temperature, seed=seed)


def save_run(trainer: OodGanTrainer, out: Path, cfg: TrainConfig) -> None:
    h = cfg.hash()
    data = trainer.data
    V = data.vocab.size
    g, d = cfg.generator, cfg.discriminator
    save_checkpoint(out / "classifier.pt", trainer.classifier.model, data.vocab,
                    classifier_hparams(cfg.classifier, V, data.num_classes), h)
    save_checkpoint(out / "generator.pt", trainer.generator.model, data.vocab,
                    {"vocab_size": V, "emb_dim": g.emb_dim, "hidden_dim": g.hidden_dim, "max_len": data.max_len}, h)
    save_checkpoint(out / "discriminator.pt", trainer.discriminator.model, data.vocab,
                    {"vocab_size": V, "emb_dim": d.emb_dim, "hidden_dim": d.hidden_dim, "num_layers": d.num_layers}, h)


def _write_config(cfg: TrainConfig, path: Path) -> None:
    cfg.save(path)
    text = path.read_text(encoding="utf-8")
    path.write_text(f"# config_hash: {cfg.hash()}\n{text}", encoding="utf-8")


def read_ood_file(path: str | Path, vocab: Vocabulary, max_len: int) -> list[TokenSequence]:
    """Encode the utterances of a generated-OOD file."""
    rows = read_generic_tsv(path)
    out = []
    for text, label in rows:
        if label not in (GENERATED_OOD_LABEL, OOD_LABEL):
            raise DatasetError(f"{path}: unexpected label {label!r} in an OOD file")
        out.append(encode(tokenize(text), vocab, max_len))
    return out


# -- commands --------------------------------------------------------------

def cmd_train(args) -> int:
    cfg = _load_config(args.config, args.set, args.seed)
    out = Path(args.output_dir or cfg.output_dir)
    data = _load_data(cfg)
    out.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(cfg.seed)
    embeddings = None
    if cfg.data.embeddings:
        embeddings = load_word_vectors(cfg.data.embeddings, data.vocab, cfg.generator.emb_dim, seed=cfg.seed)
    log_path = out / LOG_FILE
    log_path.write_text("", encoding="utf-8")
    _write_config(cfg, out / CONFIG_FILE)
    data.vocab.save(out / VOCAB_FILE)
    (out / LABELS_FILE).write_text("".join(lab + "\n" for lab in data.labels), encoding="utf-8")

    trainer = OodGanTrainer(cfg, data, embeddings=embeddings, log_path=log_path)
    trainer.train()
    save_run(trainer, out, cfg)
    print(f"checkpoints written to {out} (config {cfg.hash()})")
    return 0


def cmd_generate(args) -> int:
    run_dir = Path(args.run_dir)
    cfg = _run_config(run_dir, args.set, args.seed)
    data = _run_data(run_dir, cfg)
    n = args.n or cfg.generation.count or len(data.train)
    gen = load_generator(run_dir, cfg, data.vocab, seed=cfg.seed + 60)
    try:
        ood, rep = generate_ood(
            gen, data.vocab, data.train_tokens, n, filter_cfg(cfg),
            max_rounds=cfg.generation.max_rounds, round_size=cfg.generation.round_size,
        )
    except QuotaError as exc:
        raise CliError(str(exc)) from exc
    out = Path(args.out) if args.out else run_dir / "generated_ood.tsv"
    write_generic_tsv(out, [(" ".join(t), GENERATED_OOD_LABEL) for t in ood], header=f"config_hash: {cfg.hash()}")
    stats = rep.as_dict()
    stats.pop("rejected_examples", None)
    print(f"wrote {len(ood)} utterances to {out}; filter report {json.dumps(stats, sort_keys=True)}")
    return 0


def cmd_evaluate(args) -> int:
    run_dir = Path(args.run_dir)
    cfg = _run_config(run_dir, args.set, args.seed)
    data = _run_data(run_dir, cfg)
    if not data.test or not data.test_ood:
        raise CliError("the test split needs both IND and OOD rows")
    ood = read_ood_file(args.ood, data.vocab, data.max_len) if args.ood else []
    lam = args.lam if args.lam is not None else (cfg.detector.lam if ood else 0.0)
    det = train_detector(cfg, data, ood, lam=lam)
    scores = det.score_dataset(data.test, data.test_ood)

    out = Path(args.out_dir) if args.out_dir else run_dir / ("eval" if lam > 0 else "eval_baseline")
    out.mkdir(parents=True, exist_ok=True)
    metrics = report(scores)
    metrics["lam"] = float(det.lam)
    if det.threshold is not None:
        metrics["threshold"] = float(det.threshold)
        metrics["joint_acc"] = joint_accuracy(scores, det.threshold)
    metrics["config_hash"] = cfg.hash()
    write_report(metrics, out / "metrics.txt", out / "metrics.json")
    scores.save(out / "scores.tsv", header=f"score\tis_ood\tpred\ttrue\tconfig_hash={cfg.hash()}")
    save_checkpoint(out / "detector.pt", det.model, data.vocab,
                    classifier_hparams(cfg.classifier, data.vocab.size, data.num_classes), cfg.hash())
    for k in METRIC_KEYS:
        print(f"{k}\t{metrics[k]:.4f}")
    return 0


def _provenance(path: Path) -> str:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
    if first.startswith("#") and "config_hash=" in first:
        return "config_hash=" + first.split("config_hash=", 1)[1].strip()
    return ""


def cmd_plot(args) -> int:
    path = Path(args.scores)
    if not path.exists():
        raise CliError(f"scores file not found: {path}")
    scores = DetectionScores.load(path)
    out = Path(args.out) if args.out else path.with_name(f"{args.kind}.png")
    data = render(scores, args.kind, out, provenance=_provenance(path))
    if args.kind == "threshold_curve":
        print(f"best threshold {data['best_threshold']:.4f} (joint accuracy {data['best_accuracy']:.4f})")
    print(f"wrote {out}")
    return 0


# -- entry point -----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="oodgan", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def overrides(sp):
        sp.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override a config field (repeatable)")
        sp.add_argument("--seed", type=int, help="override the config seed")

    t = sub.add_parser("train", help="run all training phases and write checkpoints")
    t.add_argument("config")
    t.add_argument("--output-dir")
    overrides(t)
    t.set_defaults(func=cmd_train)

    g = sub.add_parser("generate", help="sample and filter pseudo-OOD utterances")
    g.add_argument("run_dir")
    g.add_argument("-n", type=int, default=0, help="number of utterances (default: IND training size)")
    g.add_argument("--out")
    overrides(g)
    g.set_defaults(func=cmd_generate)

    e = sub.add_parser("evaluate", help="train the detector and score the test split")
    e.add_argument("run_dir")
    e.add_argument("--ood", help="generated OOD file; omit for the no-OOD baseline")
    e.add_argument("--lam", type=float, help="weight of the OOD entropy term")
    e.add_argument("--out-dir")
    overrides(e)
    e.set_defaults(func=cmd_evaluate)

    pl = sub.add_parser("plot", help="draw a score histogram or threshold curve")
    pl.add_argument("scores")
    pl.add_argument("--kind", choices=PLOT_KINDS, default="histogram")
    pl.add_argument("--out")
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (CliError, ConfigError, DatasetError, MetricError, CheckpointError, PhaseError, GeneratorCollapse,
            FileNotFoundError, ValueError) as exc:
        print(f"oodgan {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
