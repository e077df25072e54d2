"""Sweep ef_search and report recall@k against exhaustive search.

Builds one seeded random corpus, then reuses it for every ef value, so
rows differ only in the search-time beam width. Typical output:

    ef_search  recall@10  mean query ms
           10      0.871           0.22
           50      0.987           0.61
          ...

Run: python3 scripts/hnsw_recall_sweep.py --n 1000 --dim 64
"""

import argparse
import time

import numpy as np

from docintel.hnsw import HnswIndex, HnswParams


def exact_topk(normed, q, k):
    sims = normed @ (q / np.linalg.norm(q))
    return sorted(range(len(normed)), key=lambda i: (-sims[i], i))[:k]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=1000, help="corpus size")
    ap.add_argument("--dim", type=int, default=64)
    ap.add_argument("--queries", type=int, default=100)
    ap.add_argument("--k", type=int, default=10)
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--ef", type=int, nargs="+",
                    default=[10, 25, 50, 100, 200])
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    vecs = rng.standard_normal((args.n, args.dim)).astype(np.float32)
    queries = rng.standard_normal((args.queries, args.dim)).astype(np.float32)

    t0 = time.monotonic()
    index = HnswIndex(args.dim, HnswParams())
    for i, v in enumerate(vecs):
        index.add(i, v)
    print(f"built {args.n} x {args.dim} in {time.monotonic() - t0:.2f}s "
          f"(m={index.params.m}, ef_construction="
          f"{index.params.ef_construction})")

    normed = vecs / np.linalg.norm(vecs, axis=1, keepdims=True)
    oracle = [exact_topk(normed, q, args.k) for q in queries]

    print(f"\n{'ef_search':>9}  {'recall@' + str(args.k):>9}  "
          f"{'mean query ms':>13}")
    for ef in args.ef:
        overlap = 0
        t0 = time.monotonic()
        for q, want in zip(queries, oracle):
            got = {i for i, _ in index.search(q, args.k, ef=ef)}
            overlap += len(got & set(want))
        elapsed = time.monotonic() - t0
        recall = overlap / (args.k * args.queries)
        print(f"{ef:>9}  {recall:>9.3f}  "
              f"{1000 * elapsed / args.queries:>13.2f}")


if __name__ == "__main__":
    main()
