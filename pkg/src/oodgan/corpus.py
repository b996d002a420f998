"""Dataset ingestion, tokenization and vocabulary handling."""

from __future__ import annotations

import hashlib
import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

logger = logging.getLogger(__name__)

PAD_TOKEN = "<pad>"
BOS_TOKEN = "<bos>"
EOS_TOKEN = "<eos>"
UNK_TOKEN = "<unk>"
SPECIAL_TOKENS = (PAD_TOKEN, BOS_TOKEN, EOS_TOKEN, UNK_TOKEN)
PAD, BOS, EOS, UNK = 0, 1, 2, 3

OOD_LABEL = "__ood__"
GENERATED_OOD_LABEL = "__generated_ood__"
ROSTD_OOD_LABEL = "outOfDomain"
FORMATS = ("rostd_tsv", "osq_json", "generic_tsv")

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


class DatasetError(ValueError):
    """Raised for malformed or inconsistent dataset files."""


def tokenize(text: str) -> list[str]:
    """Lowercase ``text`` and split it into word and punctuation tokens."""
    text = text.strip()
    if not text:
        raise ValueError("cannot tokenize empty text")
    return _TOKEN_RE.findall(text.lower())


class Vocabulary:
    """Bidirectional token/id map with PAD, BOS, EOS and UNK at ids 0-3."""

    pad_id = PAD
    bos_id = BOS
    eos_id = EOS
    unk_id = UNK

    def __init__(self, tokens: Iterable[str]):
        self.id_to_token: list[str] = list(SPECIAL_TOKENS)
        for tok in tokens:
            if tok in SPECIAL_TOKENS:
                continue
            self.id_to_token.append(tok)
        self.token_to_id: dict[str, int] = {t: i for i, t in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise ValueError("duplicate tokens in vocabulary")

    @property
    def size(self) -> int:
        return len(self.id_to_token)

    def __len__(self) -> int:
        return self.size

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocabulary) and self.id_to_token == other.id_to_token

    def lookup(self, token: str) -> int:
        return self.token_to_id.get(token, UNK)

    def to_text(self) -> str:
        return "".join(t + "\n" for t in self.id_to_token)

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if tuple(lines[:4]) != SPECIAL_TOKENS:
            raise DatasetError(f"{path}: vocabulary must start with {SPECIAL_TOKENS}")
        return cls(lines[4:])


def build_vocabulary(corpus: Sequence[Sequence[str]], min_count: int = 1) -> Vocabulary:
    """Keep tokens seen at least ``min_count`` times.

    Ids are assigned by descending frequency, ties broken lexicographically,
    so the result does not depend on corpus iteration order.
    """
    if not corpus:
        raise ValueError("corpus is empty")
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts = Counter(tok for toks in corpus for tok in toks)
    kept = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
    return Vocabulary(kept)


@dataclass(frozen=True)
class TokenSequence:
    """Padded id sequence. ``ids`` always has ``max_len`` entries."""

    ids: tuple[int, ...]

    def __post_init__(self):
        n = self.length
        if n < 1:
            raise ValueError("sequence must contain at least one token")
        if PAD in self.ids[:n]:
            raise ValueError("PAD must only appear as trailing padding")

    @property
    def length(self) -> int:
        n = len(self.ids)
        while n > 0 and self.ids[n - 1] == PAD:
            n -= 1
        return n

    @property
    def max_len(self) -> int:
        return len(self.ids)

    @property
    def content(self) -> tuple[int, ...]:
        """Ids without BOS/EOS/PAD."""
        return tuple(i for i in self.ids if i >= UNK)

    @property
    def complete(self) -> bool:
        return EOS in self.ids

    @classmethod
    def from_ids(cls, ids: Sequence[int], max_len: int) -> "TokenSequence":
        ids = list(ids)[:max_len]
        return cls(tuple(ids + [PAD] * (max_len - len(ids))))


def encode(tokens: Sequence[str], vocab: Vocabulary, max_len: int) -> TokenSequence:
    """BOS + tokens + EOS, padded to ``max_len``.

    Over-long inputs lose their tail tokens; EOS is always kept so every
    encoded sequence is complete.
    """
    if max_len < 2:
        raise ValueError("max_len must be >= 2")
    body = [vocab.lookup(t) for t in tokens][: max_len - 2]
    return TokenSequence.from_ids([BOS, *body, EOS], max_len)


def decode(seq: TokenSequence | Sequence[int], vocab: Vocabulary) -> str:
    ids = seq.ids if isinstance(seq, TokenSequence) else seq
    out = []
    for i in ids:
        if i == EOS or i == PAD:
            break
        if i == BOS:
            continue
        out.append(vocab.id_to_token[i])
    return " ".join(out)


def decode_tokens(seq: TokenSequence, vocab: Vocabulary) -> list[str]:
    text = decode(seq, vocab)
    return text.split(" ") if text else []


@dataclass(frozen=True)
class LabeledExample:
    sequence: TokenSequence
    label: int


@dataclass
class RawSplit:
    """Untokenized (text, label) pairs per split; OOD texts are kept apart."""

    train: list[tuple[str, str]] = field(default_factory=list)
    valid: list[tuple[str, str]] = field(default_factory=list)
    test: list[tuple[str, str]] = field(default_factory=list)
    valid_ood: list[str] = field(default_factory=list)
    test_ood: list[str] = field(default_factory=list)


@dataclass
class DatasetSplit:
    """Encoded dataset. Immutable by convention once built."""

    vocab: Vocabulary
    labels: list[str]
    max_len: int
    train: list[LabeledExample]
    valid: list[LabeledExample]
    test: list[LabeledExample]
    valid_ood: list[TokenSequence] = field(default_factory=list)
    test_ood: list[TokenSequence] = field(default_factory=list)
    train_tokens: list[list[str]] = field(default_factory=list)

    @property
    def num_classes(self) -> int:
        return len(self.labels)


def _read_lines(path: Path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip() or line.startswith("# "):
                continue
            yield lineno, line


def read_generic_tsv(path: str | Path) -> list[tuple[str, str]]:
    """Read ``label<TAB>text`` rows. Lines starting with ``# `` are comments."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    rows = []
    for lineno, line in _read_lines(path):
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0].strip() or not parts[1].strip():
            raise DatasetError(f"{path}:{lineno}: expected 'label<TAB>text'")
        rows.append((parts[1].strip(), parts[0].strip()))
    if not rows:
        raise DatasetError(f"{path}: file has no rows")
    return rows


def write_generic_tsv(path: str | Path, rows: Iterable[tuple[str, str]], header: str | None = None) -> None:
    """Write (text, label) rows."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if header:
            fh.write(f"# {header}\n")
        for text, label in rows:
            if "\t" in text or "\n" in text:
                raise ValueError(f"text contains tab or newline: {text!r}")
            fh.write(f"{label}\t{text}\n")


def _read_rostd(path: Path) -> list[tuple[str, str]]:
    rows = []
    for lineno, line in _read_lines(path):
        parts = line.split("\t")
        if len(parts) < 3 or not parts[0].strip() or not parts[2].strip():
            raise DatasetError(f"{path}:{lineno}: expected 'label<TAB>annotation<TAB>text'")
        label = parts[0].strip()
        rows.append((parts[2].strip(), OOD_LABEL if label == ROSTD_OOD_LABEL else label))
    if not rows:
        raise DatasetError(f"{path}: file has no rows")
    return rows


def _first_existing(root: Path, names: Sequence[str]) -> Path:
    for name in names:
        if (root / name).exists():
            return root / name
    raise FileNotFoundError(f"none of {list(names)} found in {root}")


def _split_ood(rows, allow_ood: bool, where: str):
    ind, ood = [], []
    for text, label in rows:
        if label == OOD_LABEL:
            if not allow_ood:
                raise DatasetError(f"{where}: OOD rows are not allowed in the training split")
            ood.append(text)
        else:
            ind.append((text, label))
    return ind, ood


def read_raw(path: str | Path, fmt: str) -> RawSplit:
    """Load text-level splits for one of the supported on-disk formats."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown dataset format {fmt!r}; expected one of {FORMATS}")
    root = Path(path)
    if not root.exists():
        raise FileNotFoundError(root)

    if fmt == "osq_json":
        file = root if root.is_file() else _first_existing(root, ["data_full.json", "data.json"])
        with open(file, encoding="utf-8") as fh:
            data = json.load(fh)
        try:
            raw = RawSplit(
                train=[(t, lab) for t, lab in data["train"]],
                valid=[(t, lab) for t, lab in data["val"]],
                test=[(t, lab) for t, lab in data["test"]],
                valid_ood=[t for t, _ in data.get("oos_val", [])],
                test_ood=[t for t, _ in data.get("oos_test", [])],
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise DatasetError(f"{file}: malformed OSQ json ({exc})") from exc
        # oos_train is ignored on purpose: no real OOD is used for training
        return raw

    reader = read_generic_tsv if fmt == "generic_tsv" else _read_rostd
    train_f = _first_existing(root, ["train.tsv"])
    valid_f = _first_existing(root, ["valid.tsv", "eval.tsv", "dev.tsv"])
    test_f = _first_existing(root, ["test.tsv"])
    raw = RawSplit()
    raw.train, _ = _split_ood(reader(train_f), False, str(train_f))
    raw.valid, raw.valid_ood = _split_ood(reader(valid_f), True, str(valid_f))
    raw.test, raw.test_ood = _split_ood(reader(test_f), True, str(test_f))
    return raw


def load_dataset(
    path: str | Path,
    fmt: str,
    max_len: int = 28,
    min_count: int = 1,
    vocab: Vocabulary | None = None,
    labels: Sequence[str] | None = None,
) -> DatasetSplit:
    """Read, tokenize and encode a dataset.

    The vocabulary and label set come from the training split unless given.
    """
    raw = read_raw(path, fmt)
    if not raw.train:
        raise DatasetError(f"{path}: training split is empty")
    return encode_raw(raw, max_len=max_len, min_count=min_count, vocab=vocab, labels=labels, where=str(path))


def encode_raw(
    raw: RawSplit,
    max_len: int = 28,
    min_count: int = 1,
    vocab: Vocabulary | None = None,
    labels: Sequence[str] | None = None,
    where: str = "<memory>",
) -> DatasetSplit:
    train_tok = [tokenize(t) for t, _ in raw.train]
    if vocab is None:
        vocab = build_vocabulary(train_tok, min_count)
    if labels is None:
        labels = sorted({lab for _, lab in raw.train})
    label_ids = {lab: i for i, lab in enumerate(labels)}

    def enc_labeled(rows, name):
        out = []
        for text, lab in rows:
            if lab not in label_ids:
                raise DatasetError(f"{where}: label {lab!r} in {name} split is not a training label")
            out.append(LabeledExample(encode(tokenize(text), vocab, max_len), label_ids[lab]))
        return out

    seen = {t for t, _ in raw.train}
    overlap = sum(t in seen for t, _ in raw.valid + raw.test)
    if overlap:
        logger.warning("%s: %d valid/test utterances also occur in train", where, overlap)

    lengths = [len(t) + 2 for t in train_tok]
    covered = sum(n <= max_len for n in lengths) / len(lengths)
    logger.info("max_len=%d covers %.2f%% of training utterances", max_len, 100 * covered)
    if covered < 0.99:
        logger.warning("max_len=%d truncates %.2f%% of training utterances", max_len, 100 * (1 - covered))

    return DatasetSplit(
        vocab=vocab,
        labels=list(labels),
        max_len=max_len,
        train=enc_labeled(raw.train, "train"),
        valid=enc_labeled(raw.valid, "valid"),
        test=enc_labeled(raw.test, "test"),
        valid_ood=[encode(tokenize(t), vocab, max_len) for t in raw.valid_ood],
        test_ood=[encode(tokenize(t), vocab, max_len) for t in raw.test_ood],
        train_tokens=train_tok,
    )
