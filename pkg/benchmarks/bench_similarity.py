"""Compare the compiled and pure-Python similarity scans.

    python benchmarks/bench_similarity.py --queries 500 --corpus 5000
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from oodgan import simkernel


def make_corpus(rng, n, vocab, lo=3, hi=20):
    return [rng.integers(0, vocab, size=int(rng.integers(lo, hi + 1))).tolist() for _ in range(n)]


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--queries", type=int, default=100)
    ap.add_argument("--corpus", type=int, default=2000)
    ap.add_argument("--vocab", type=int, default=2000)
    ap.add_argument("--repeats", type=int, default=2)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    queries = make_corpus(rng, args.queries, args.vocab)
    corpus = make_corpus(rng, args.corpus, args.vocab)
    # plant some near copies so the early-stop path is exercised too
    for i in range(0, args.queries, 10):
        queries[i] = list(corpus[i])

    print(f"active backend: {simkernel.BACKEND}")
    print(f"{args.queries} queries x {args.corpus} corpus items")
    impls = {"python": simkernel.python_impl}
    try:
        from oodgan import _simkernel

        impls["cython"] = _simkernel
    except ImportError:
        print("compiled extension not built; only the Python backend is timed")

    for metric in ("jaccard", "edit"):
        sort = metric == "jaccard"
        q = simkernel.pack(queries, sort=sort)
        c = simkernel.pack(corpus, sort=sort)
        results = {}
        for name, impl in impls.items():
            fn = impl.max_jaccard if sort else impl.max_edit_similarity
            for stop in (2.0, 0.8):
                t, out = best_of(lambda: fn(*q, *c, stop), args.repeats)
                results[(name, stop)] = (t, out)
                print(f"{metric:8s} {name:7s} stop_at={stop:<4} {t * 1e3:10.1f} ms")
        if "cython" in impls:
            for stop in (2.0, 0.8):
                tp, op = results[("python", stop)]
                tc, oc = results[("cython", stop)]
                same = np.allclose(op, oc, rtol=0, atol=1e-12)
                print(f"{metric:8s} speedup stop_at={stop:<4} {tp / tc:8.1f}x  outputs equal: {same}")


if __name__ == "__main__":
    main()
