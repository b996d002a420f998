"""OOD detection and intent accuracy metrics.

OOD is the positive class. Detection scores are maximum intent
probabilities, so a *lower* score means *more* OOD.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class MetricError(ValueError):
    pass


@dataclass
class DetectionScores:
    """Column-oriented detection records.

    ``true_label`` is -1 for OOD rows; ``pred_label`` is the argmax intent.
    """

    score: np.ndarray
    is_ood: np.ndarray
    pred_label: np.ndarray
    true_label: np.ndarray

    def __post_init__(self):
        self.score = np.asarray(self.score, dtype=np.float64)
        self.is_ood = np.asarray(self.is_ood, dtype=bool)
        self.pred_label = np.asarray(self.pred_label, dtype=np.int64)
        self.true_label = np.asarray(self.true_label, dtype=np.int64)
        n = len(self.score)
        if not (len(self.is_ood) == len(self.pred_label) == len(self.true_label) == n):
            raise MetricError("detection score columns differ in length")

    def __len__(self) -> int:
        return len(self.score)

    @classmethod
    def from_records(cls, records: Iterable[tuple[float, bool, int, int]]) -> "DetectionScores":
        rows = list(records)
        if not rows:
            return cls(np.zeros(0), np.zeros(0, bool), np.zeros(0, int), np.zeros(0, int))
        s, o, p, t = zip(*rows)
        return cls(np.array(s), np.array(o), np.array(p), np.array(t))

    def records(self):
        return list(zip(self.score.tolist(), self.is_ood.tolist(), self.pred_label.tolist(), self.true_label.tolist()))

    def subset(self, idx) -> "DetectionScores":
        return DetectionScores(self.score[idx], self.is_ood[idx], self.pred_label[idx], self.true_label[idx])

    def save(self, path: str | Path, header: str | None = None) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            if header:
                fh.write(f"# {header}\n")
            for s, o, p, t in self.records():
                fh.write(f"{s!r}\t{int(o)}\t{p}\t{t}\n")

    @classmethod
    def load(cls, path: str | Path) -> "DetectionScores":
        rows = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip() or line.startswith("#"):
                    continue
                parts = line.rstrip("\n").split("\t")
                if len(parts) != 4:
                    raise MetricError(f"{path}:{lineno}: expected 4 tab-separated fields")
                try:
                    rows.append((float(parts[0]), parts[1] == "1", int(parts[2]), int(parts[3])))
                except ValueError as exc:
                    raise MetricError(f"{path}:{lineno}: {exc}") from exc
        if not rows:
            raise MetricError(f"{path}: no detection records")
        return cls.from_records(rows)


def _check_both(scores: DetectionScores) -> tuple[int, int]:
    n_pos = int(scores.is_ood.sum())
    n_neg = len(scores) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("need at least one OOD and one IND record")
    return n_pos, n_neg


def _roc_counts(scores: DetectionScores):
    """Cumulative (tp, fp) when flagging everything with score <= s as OOD,
    for each distinct score s in ascending order."""
    order = np.argsort(scores.score, kind="mergesort")
    s = scores.score[order]
    pos = scores.is_ood[order]
    last = np.r_[np.flatnonzero(np.diff(s)), len(s) - 1]
    tp = np.cumsum(pos)[last]
    fp = np.cumsum(~pos)[last]
    return s[last], tp, fp


def auroc(scores: DetectionScores) -> float:
    """P(random OOD scores lower than random IND), ties counted one half."""
    n_pos, n_neg = _check_both(scores)
    s = scores.score
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(len(s), dtype=np.float64)
    sorted_s = s[order]
    # average ranks over ties, descending orientation: higher rank = more OOD
    starts = np.r_[0, np.flatnonzero(np.diff(sorted_s)) + 1]
    ends = np.r_[starts[1:], len(s)]
    avg = (starts + ends + 1) / 2.0
    ranks[order] = np.repeat(avg, ends - starts)
    ranks = len(s) + 1 - ranks
    rank_sum = ranks[scores.is_ood].sum()
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def aupr(scores: DetectionScores) -> float:
    """Area under the OOD-positive precision/recall curve.

    Operating points are every distinct score; precision at each achieved
    recall is replaced by its envelope (best precision at that or higher
    recall) and summed over recall increments.
    """
    n_pos, _ = _check_both(scores)
    _, tp, fp = _roc_counts(scores)
    recall = tp / n_pos
    precision = tp / (tp + fp)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    dr = np.diff(np.r_[0.0, recall])
    return float(np.sum(dr * envelope))


def fpr_at_tpr(scores: DetectionScores, target_tpr: float) -> float:
    """Smallest FPR over thresholds whose TPR is at least ``target_tpr``."""
    if not 0.0 < target_tpr <= 1.0:
        raise MetricError("target_tpr must lie in (0, 1]")
    n_pos, n_neg = _check_both(scores)
    _, tp, fp = _roc_counts(scores)
    ok = tp >= np.ceil(target_tpr * n_pos - 1e-9)
    return float(fp[ok].min() / n_neg)


def ind_accuracy(scores: DetectionScores) -> float:
    ind = ~scores.is_ood
    if not ind.any():
        raise MetricError("no IND records")
    return float(np.mean(scores.pred_label[ind] == scores.true_label[ind]))


def _joint_correct(scores: DetectionScores, threshold: float) -> int:
    below = scores.score < threshold
    ood_ok = scores.is_ood & below
    ind_ok = ~scores.is_ood & ~below & (scores.pred_label == scores.true_label)
    return int(ood_ok.sum() + ind_ok.sum())


def joint_accuracy(scores: DetectionScores, threshold: float) -> float:
    """OOD below the threshold and IND at/above it with the right intent count as correct."""
    if len(scores) == 0:
        raise MetricError("no records")
    return _joint_correct(scores, threshold) / len(scores)


def joint_accuracy_curve(scores: DetectionScores, thresholds: Sequence[float]) -> list[tuple[float, float]]:
    if len(scores) == 0:
        raise MetricError("no records")
    s = scores.score
    order = np.argsort(s, kind="mergesort")
    s_sorted = s[order]
    ood = scores.is_ood[order]
    ind_ok = (~scores.is_ood & (scores.pred_label == scores.true_label))[order]
    ood_below = np.r_[0, np.cumsum(ood)]
    ind_ok_below = np.r_[0, np.cumsum(ind_ok)]
    th = np.asarray(thresholds, dtype=np.float64)
    k = np.searchsorted(s_sorted, th, side="left")  # records strictly below each threshold
    correct = ood_below[k] + (ind_ok_below[-1] - ind_ok_below[k])
    return [(float(t), float(c) / len(s)) for t, c in zip(th, correct)]


def threshold_grid(scores: DetectionScores) -> np.ndarray:
    """Candidate thresholds: lowest score (all IND), midpoints of adjacent
    distinct scores, and just above the highest score (all OOD)."""
    u = np.unique(scores.score)
    return np.r_[u[0], (u[:-1] + u[1:]) / 2.0, np.nextafter(u[-1], np.inf)]


def select_threshold(scores: DetectionScores) -> tuple[float, float]:
    """Threshold maximizing joint accuracy, ties resolved to the lowest one.

    Returns ``(threshold, joint_accuracy)``.
    """
    _check_both(scores)
    grid = threshold_grid(scores)
    curve = joint_accuracy_curve(scores, grid)
    best = max(range(len(curve)), key=lambda i: (curve[i][1], -i))
    return curve[best]


METRIC_KEYS = ("auroc", "aupr", "fpr95", "fpr90", "ind_acc")


def report(scores: DetectionScores) -> dict[str, float]:
    return {
        "auroc": auroc(scores),
        "aupr": aupr(scores),
        "fpr95": fpr_at_tpr(scores, 0.95),
        "fpr90": fpr_at_tpr(scores, 0.90),
        "ind_acc": ind_accuracy(scores),
    }


def write_report(metrics: dict, txt_path: str | Path, json_path: str | Path) -> None:
    """Flat ``key=value`` text plus the same content as JSON."""
    with open(txt_path, "w", encoding="utf-8", newline="\n") as fh:
        for k, v in metrics.items():
            fh.write(f"{k}={v}\n")
    with open(json_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
        fh.write("\n")
