#!/usr/bin/env python3
"""Compare the numba and pure-numpy search kernels on one synthetic index.

The index layout, scoring, and ranking are identical for both; only the
posting-list accumulation kernel changes (see asmsieve/_kernels.py). The
same comparison can be forced process-wide with ASMSIEVE_BACKEND=numpy.

Example:
    python benchmarks/bench_search.py --docs 100000 --queries 100
"""

import argparse
import random
import statistics
import time

from asmsieve import _kernels
from asmsieve.index import InvertedIndex


def build_index(rng: random.Random, n_docs: int, vocab_size: int, tokens_per_doc: int):
    vocab = [f"token{i:06d}" for i in range(vocab_size)]
    ix = InvertedIndex()
    started = time.perf_counter()
    for i in range(n_docs):
        ix.add(f"doc{i:07d}", rng.sample(vocab, tokens_per_doc))
    build_seconds = time.perf_counter() - started
    return ix, vocab, build_seconds


def time_queries(ix, queries, k):
    latencies = []
    for query in queries:
        t0 = time.perf_counter()
        ix.search(query, k)
        latencies.append(time.perf_counter() - t0)
    return latencies


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--docs", type=int, default=100_000)
    parser.add_argument("--vocab", type=int, default=4000)
    parser.add_argument("--tokens", type=int, default=30)
    parser.add_argument("--queries", type=int, default=100)
    parser.add_argument("-k", type=int, default=10)
    parser.add_argument("--seed", type=int, default=1)
    args = parser.parse_args()

    rng = random.Random(args.seed)
    ix, vocab, build_seconds = build_index(rng, args.docs, args.vocab, args.tokens)
    queries = [frozenset(rng.sample(vocab, args.tokens)) for _ in range(args.queries)]

    print(f"index: {args.docs} docs x {args.tokens} tokens "
          f"(vocab {args.vocab}), built in {build_seconds:.2f}s")
    print(f"{'backend':<8} {'median ms':>10} {'p90 ms':>10} {'max ms':>10}")

    baseline = None
    for backend in sorted(_kernels._BACKENDS):
        _kernels.use_backend(backend)
        ix.search(queries[0], args.k)  # warm-up (JIT compile on numba)
        latencies = time_queries(ix, queries, args.k)
        median = statistics.median(latencies) * 1000
        p90 = statistics.quantiles(latencies, n=10)[-1] * 1000
        peak = max(latencies) * 1000
        note = ""
        if baseline is None:
            baseline = median
        elif median > 0:
            note = f"  ({baseline / median:.2f}x vs {sorted(_kernels._BACKENDS)[0]})"
        print(f"{backend:<8} {median:>10.3f} {p90:>10.3f} {peak:>10.3f}{note}")

    _kernels.use_backend("auto")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
