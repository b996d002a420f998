"""Pure-Python twin of ``_simkernel``; same signatures and results."""

import numpy as np


def _jaccard(a, b):
    if not a and not b:
        return 1.0
    i = j = inter = 0
    while i < len(a) and j < len(b):
        if a[i] == b[j]:
            inter += 1
            i += 1
            j += 1
        elif a[i] < b[j]:
            i += 1
        else:
            j += 1
    return inter / (len(a) + len(b) - inter)


def _edit_sim(a, b):
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


def _segments(ids, off):
    ids = np.asarray(ids).tolist()
    off = np.asarray(off).tolist()
    return [ids[off[k]:off[k + 1]] for k in range(len(off) - 1)]


def _scan(sim, bound, q_ids, q_off, c_ids, c_off, stop_at):
    queries = _segments(q_ids, q_off)
    corpus = _segments(c_ids, c_off)
    out = np.zeros(len(queries), dtype=np.float64)
    for qi, a in enumerate(queries):
        best = 0.0
        for b in corpus:
            if bound(len(a), len(b)) <= best:
                continue
            s = sim(a, b)
            if s > best:
                best = s
                if best >= stop_at:
                    break
        out[qi] = best
    return out


def _jaccard_bound(la, lb):
    hi = max(la, lb)
    return 1.0 if hi == 0 else min(la, lb) / hi


def _edit_bound(la, lb):
    hi = max(la, lb)
    return 1.0 if hi == 0 else 1.0 - (hi - min(la, lb)) / hi


def max_jaccard(q_ids, q_off, c_ids, c_off, stop_at=2.0):
    return _scan(_jaccard, _jaccard_bound, q_ids, q_off, c_ids, c_off, stop_at)


def max_edit_similarity(q_ids, q_off, c_ids, c_off, stop_at=2.0):
    return _scan(_edit_sim, _edit_bound, q_ids, q_off, c_ids, c_off, stop_at)
