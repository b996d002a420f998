"""Backend selection for the similarity scans.

The compiled extension is used when it was built; set ``OODGAN_PURE_PYTHON=1``
to force the pure-Python implementation.
"""

import os

import numpy as np

if os.environ.get("OODGAN_PURE_PYTHON", "") not in ("", "0"):
    from oodgan import _simkernel_py as _impl

    BACKEND = "python"
else:
    try:
        from oodgan import _simkernel as _impl

        BACKEND = "cython"
    except ImportError:
        from oodgan import _simkernel_py as _impl

        BACKEND = "python"

from oodgan import _simkernel_py as python_impl  # noqa: E402

__all__ = ["BACKEND", "python_impl", "max_jaccard", "max_edit_similarity", "pack"]

max_jaccard = _impl.max_jaccard
max_edit_similarity = _impl.max_edit_similarity


def pack(seqs, sort=False):
    """Pack integer sequences into (ids, offsets) CSR arrays."""
    lengths = np.fromiter((len(s) for s in seqs), dtype=np.int64, count=len(seqs))
    off = np.zeros(len(seqs) + 1, dtype=np.int64)
    np.cumsum(lengths, out=off[1:])
    ids = np.empty(int(off[-1]), dtype=np.int32)
    for k, s in enumerate(seqs):
        ids[off[k]:off[k + 1]] = sorted(s) if sort else s
    return ids, off
