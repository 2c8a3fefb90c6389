"""Bootstrap AUC: compiled kernel vs numpy fallback.

    python3 benchmarks/bench_auc.py [--n 2000] [--classes 8] [--resamples 1000] [--repeats 5]

Both backends must return bit-identical results; the script checks that
before timing anything.
"""

import argparse
import timeit

import numpy as np

from fedsim import _auc_py
from fedsim.metrics.auc import _rank_layout, _resample_indices

try:
    from fedsim import _auc_ext
except ImportError:  # extension not built
    _auc_ext = None


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--classes", type=int, default=8)
    ap.add_argument("--resamples", type=int, default=1000)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    labels = np.eye(args.classes, dtype=np.uint8)[rng.integers(0, args.classes, args.n)]
    # rounded scores so the tie path is exercised too
    scores = np.round(labels + rng.normal(size=labels.shape), 2)
    order, groups = _rank_layout(scores)
    idx = _resample_indices(args.n, args.resamples, seed=0)

    backends = {"numpy": _auc_py}
    if _auc_ext is not None:
        backends["cython"] = _auc_ext
    else:
        print("compiled kernel not available; timing the numpy fallback only")

    results = {name: mod.bootstrap_auc(order, groups, labels, idx) for name, mod in backends.items()}
    if len(results) == 2:
        same = np.array_equal(results["numpy"], results["cython"], equal_nan=True)
        print(f"outputs bit-identical: {same}")
        if not same:
            raise SystemExit(1)

    print(f"n={args.n} classes={args.classes} resamples={args.resamples} (best of {args.repeats})")
    times = {}
    for name, mod in backends.items():
        t = timeit.repeat(lambda m=mod: m.bootstrap_auc(order, groups, labels, idx), number=1, repeat=args.repeats)
        times[name] = min(t)
        print(f"  {name:7s} {times[name] * 1e3:9.1f} ms")
    if len(times) == 2:
        print(f"  speedup {times['numpy'] / times['cython']:.1f}x")


if __name__ == "__main__":
    main()
