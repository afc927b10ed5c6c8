"""Time the compiled kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py --repeat 5
"""

import argparse
import time

import numpy as np

from provgraph import _fallback
from provgraph.datagen.textures import seed_raster

try:
    from provgraph import _kernels
except ImportError:
    _kernels = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def workloads(rng):
    img = np.ascontiguousarray(seed_raster(rng, 512))
    a = rng.integers(0, 2**63, (500, 4), dtype=np.uint64)
    b = rng.integers(0, 2**63, (500, 4), dtype=np.uint64)
    cells, m, ksub, postings, nq = 1024, 32, 256, 200_000, 200
    codes = rng.integers(0, ksub, (postings, m), dtype=np.uint8)
    owners = rng.integers(0, 2000, postings).astype(np.int32)
    cell_start = np.concatenate([[0], np.sort(rng.integers(0, postings, cells - 1)), [postings]]).astype(np.int64)
    tables = rng.uniform(0, 64, (nq, m, ksub))
    probes = rng.integers(0, cells, (nq, 4)).astype(np.int32)
    return {
        "fast_score_map 512x512": ("fast_score_map", (img, 20, 16)),
        "hamming_matrix 500x500": ("hamming_matrix", (a, b)),
        "adc_scores 200 queries": ("adc_scores", (codes, owners, cell_start, tables, probes, 2000)),
    }


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<26}{'numpy s':>10}{'compiled s':>12}{'speedup':>9}")
    for label, (name, call_args) in workloads(rng).items():
        slow = best_of(lambda: getattr(_fallback, name)(*call_args), args.repeat)
        if _kernels is None:
            print(f"{label:<26}{slow:>10.4f}{'n/a':>12}{'':>9}")
            continue
        fast = best_of(lambda: getattr(_kernels, name)(*call_args), args.repeat)
        print(f"{label:<26}{slow:>10.4f}{fast:>12.4f}{slow / fast:>8.1f}x")


if __name__ == "__main__":
    main()
