# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled pairwise similarity scans used by the generated-sample filter.

Every collection is passed in CSR layout: a flat int32 id array plus an
int64 offsets array of length n + 1. Jaccard inputs must be sorted within
each segment; edit-distance inputs keep their original order.
"""

import numpy as np

from libc.stdlib cimport malloc, free


cdef inline double _jaccard(const int[::1] a, long long a0, long long a1,
                            const int[::1] b, long long b0, long long b1) noexcept nogil:
    cdef long long i = a0, j = b0, inter = 0
    cdef long long na = a1 - a0, nb = b1 - b0
    if na + nb == 0:
        return 1.0
    while i < a1 and j < b1:
        if a[i] == b[j]:
            inter += 1
            i += 1
            j += 1
        elif a[i] < b[j]:
            i += 1
        else:
            j += 1
    return <double>inter / <double>(na + nb - inter)


def max_jaccard(const int[::1] q_ids, const long long[::1] q_off,
                const int[::1] c_ids, const long long[::1] c_off,
                double stop_at=2.0):
    """Max multiset Jaccard of each query against the corpus.

    A query's scan stops early once a value >= ``stop_at`` is found.
    """
    cdef Py_ssize_t nq = q_off.shape[0] - 1, nc = c_off.shape[0] - 1
    out_arr = np.zeros(nq, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t qi, ci
    cdef long long la, lb, lo, hi
    cdef double best, s, bound
    with nogil:
        for qi in range(nq):
            best = 0.0
            la = q_off[qi + 1] - q_off[qi]
            for ci in range(nc):
                lb = c_off[ci + 1] - c_off[ci]
                # |a n b| / |a u b| <= min / max
                if la < lb:
                    lo, hi = la, lb
                else:
                    lo, hi = lb, la
                bound = 1.0 if hi == 0 else <double>lo / <double>hi
                if bound <= best:
                    continue
                s = _jaccard(q_ids, q_off[qi], q_off[qi + 1], c_ids, c_off[ci], c_off[ci + 1])
                if s > best:
                    best = s
                    if best >= stop_at:
                        break
            out[qi] = best
    return out_arr


cdef inline double _edit_sim(const int[::1] a, long long a0, long long a1,
                             const int[::1] b, long long b0, long long b1,
                             long long* row) noexcept nogil:
    cdef long long na = a1 - a0, nb = b1 - b0
    cdef long long i, j, prev, cur, sub
    if na == 0 and nb == 0:
        return 1.0
    for j in range(nb + 1):
        row[j] = j
    for i in range(1, na + 1):
        prev = row[0]
        row[0] = i
        for j in range(1, nb + 1):
            cur = row[j]
            sub = prev + (0 if a[a0 + i - 1] == b[b0 + j - 1] else 1)
            if row[j] + 1 < sub:
                sub = row[j] + 1
            if row[j - 1] + 1 < sub:
                sub = row[j - 1] + 1
            row[j] = sub
            prev = cur
    return 1.0 - <double>row[nb] / <double>(na if na > nb else nb)


def max_edit_similarity(const int[::1] q_ids, const long long[::1] q_off,
                        const int[::1] c_ids, const long long[::1] c_off,
                        double stop_at=2.0):
    """Max of 1 - levenshtein / max_len of each query against the corpus."""
    cdef Py_ssize_t nq = q_off.shape[0] - 1, nc = c_off.shape[0] - 1
    out_arr = np.zeros(nq, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t qi, ci
    cdef long long la, lb, hi, longest = 0
    cdef double best, s, bound
    for ci in range(nc):
        if c_off[ci + 1] - c_off[ci] > longest:
            longest = c_off[ci + 1] - c_off[ci]
    cdef long long* row = <long long*> malloc((longest + 1) * sizeof(long long))
    if row == NULL:
        raise MemoryError()
    try:
        with nogil:
            for qi in range(nq):
                best = 0.0
                la = q_off[qi + 1] - q_off[qi]
                for ci in range(nc):
                    lb = c_off[ci + 1] - c_off[ci]
                    hi = la if la > lb else lb
                    # levenshtein >= |la - lb|
                    bound = 1.0 if hi == 0 else 1.0 - <double>(hi - (lb if la > lb else la)) / <double>hi
                    if bound <= best:
                        continue
                    s = _edit_sim(q_ids, q_off[qi], q_off[qi + 1], c_ids, c_off[ci], c_off[ci + 1], row)
                    if s > best:
                        best = s
                        if best >= stop_at:
                            break
                out[qi] = best
    finally:
        free(row)
    return out_arr
