"""Removes generated utterances that duplicate each other or sit too close to IND data."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

from oodgan import simkernel

METRICS = ("jaccard", "edit")


@dataclass(frozen=True)
class FilterConfig:
    metric: str = "jaccard"
    threshold: float = 0.8
    dedupe: bool = True

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"unknown similarity metric {self.metric!r}; expected one of {METRICS}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must lie in [0, 1]")


@dataclass
class FilterReport:
    total: int = 0
    accepted: int = 0
    duplicate: int = 0
    identical_to_ind: int = 0
    similar_to_ind: int = 0
    rejected_examples: list[tuple[str, str]] = field(default_factory=list)

    def merge(self, other: "FilterReport") -> None:
        self.total += other.total
        self.accepted += other.accepted
        self.duplicate += other.duplicate
        self.identical_to_ind += other.identical_to_ind
        self.similar_to_ind += other.similar_to_ind
        self.rejected_examples.extend(other.rejected_examples)

    def as_dict(self) -> dict:
        return {
            "total": self.total,
            "accepted": self.accepted,
            "duplicate": self.duplicate,
            "identical_to_ind": self.identical_to_ind,
            "similar_to_ind": self.similar_to_ind,
        }


def jaccard(a: Sequence[str], b: Sequence[str]) -> float:
    """Multiset Jaccard overlap: sum of min counts over sum of max counts."""
    ca, cb = Counter(a), Counter(b)
    union = sum((ca | cb).values())
    if union == 0:
        return 1.0
    return sum((ca & cb).values()) / union


def edit_similarity(a: Sequence[str], b: Sequence[str]) -> float:
    """1 - token-level Levenshtein distance / longer length."""
    if not a and not b:
        return 1.0
    row = list(range(len(b) + 1))
    for i in range(1, len(a) + 1):
        prev, row[0] = row[0], i
        for j in range(1, len(b) + 1):
            cur = row[j]
            row[j] = min(prev + (a[i - 1] != b[j - 1]), row[j] + 1, row[j - 1] + 1)
            prev = cur
    return 1.0 - row[-1] / max(len(a), len(b))


def similarity(a: Sequence[str], b: Sequence[str], metric: str = "jaccard") -> float:
    if metric == "jaccard":
        return jaccard(a, b)
    if metric == "edit":
        return edit_similarity(a, b)
    raise ValueError(f"unknown similarity metric {metric!r}")


class _Interner(dict):
    def __missing__(self, key):
        self[key] = len(self)
        return self[key]


def max_similarity(
    queries: Sequence[Sequence[str]],
    corpus: Sequence[Sequence[str]],
    metric: str = "jaccard",
    stop_at: float = 2.0,
):
    """Per query, the highest similarity to any corpus item.

    With ``stop_at <= 1`` a query's scan ends at the first hit ``>= stop_at``,
    so returned values are exact only below that level.
    """
    intern = _Interner()
    q = [[intern[t] for t in s] for s in queries]
    c = [[intern[t] for t in s] for s in corpus]
    sort = metric == "jaccard"
    q_ids, q_off = simkernel.pack(q, sort=sort)
    c_ids, c_off = simkernel.pack(c, sort=sort)
    scan = simkernel.max_jaccard if sort else simkernel.max_edit_similarity
    return scan(q_ids, q_off, c_ids, c_off, stop_at)


def filter_generated(
    generated: Sequence[Sequence[str]],
    ind_corpus: Sequence[Sequence[str]],
    cfg: FilterConfig = FilterConfig(),
    seen: set | None = None,
) -> tuple[list[list[str]], FilterReport]:
    """Drop in-batch duplicates (first occurrence wins) and near-IND items.

    ``seen`` carries already accepted items across repeated calls; it is
    updated in place.
    """
    if not ind_corpus:
        raise ValueError("ind_corpus must be non-empty")
    report = FilterReport(total=len(generated))
    seen = set() if seen is None else seen
    ind_exact = {tuple(s) for s in ind_corpus}

    unique = []
    for toks in generated:
        key = tuple(toks)
        if cfg.dedupe and key in seen:
            report.duplicate += 1
            report.rejected_examples.append((" ".join(toks), "duplicate"))
            continue
        seen.add(key)
        unique.append(list(toks))

    accepted = []
    exact = [tuple(t) in ind_exact for t in unique]
    rest = [t for t, e in zip(unique, exact) if not e]
    sims = iter(max_similarity(rest, ind_corpus, cfg.metric, stop_at=cfg.threshold)) if rest else iter(())
    for toks, is_exact in zip(unique, exact):
        if is_exact:
            report.identical_to_ind += 1
            report.rejected_examples.append((" ".join(toks), "identical_to_ind"))
            continue
        if next(sims) >= cfg.threshold:
            report.similar_to_ind += 1
            report.rejected_examples.append((" ".join(toks), "similar_to_ind"))
            continue
        accepted.append(toks)
    report.accepted = len(accepted)
    return accepted, report
