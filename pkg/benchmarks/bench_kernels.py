"""Benchmark the compiled coin kernels against the NumPy fallback.

Run from the repository root after an editable install:

    python benchmarks/bench_kernels.py

Reports per-call timings for the folding primitives and for full-population
sampling at simulation-realistic sizes, plus one protocol-shaped workload
(every process drawing its per-round gossip sample).
"""

from __future__ import annotations

import argparse
import importlib
import time


def _load(name: str):
    if name == "cython":
        try:
            return importlib.import_module("qscale._kernels")
        except ImportError:
            return None
    return importlib.import_module("qscale._kernels_py")


def bench(fn, *args, repeat: int = 5, inner: int = 1000) -> float:
    """Best-of-repeat mean seconds per call."""
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        for _ in range(inner):
            fn(*args)
        best = min(best, (time.perf_counter() - t0) / inner)
    return best


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=500, help="population size")
    ap.add_argument("--inner", type=int, default=1000, help="calls per timing loop")
    args = ap.parse_args()

    impls = {}
    for name in ("cython", "numpy"):
        mod = _load(name)
        if mod is not None:
            impls[name] = mod
    if "cython" not in impls:
        print("compiled extension not available; benchmarking numpy only")

    seed = b"\x12\x34" * 16 + b"/bench"
    n = args.n
    thresh = int(0.134164 * (1 << 64))
    rows = []
    for name, mod in impls.items():
        prefix, plen = mod.fold_prefix(seed)
        rows.append((name, "fold_digest(38B)", bench(mod.fold_digest, seed, inner=args.inner)))
        rows.append(
            (name, "coin_one", bench(mod.coin_one, prefix, plen, 7, thresh, inner=args.inner))
        )
        rows.append(
            (
                name,
                f"sample_pids(n={n})",
                bench(mod.sample_pids, prefix, plen, n, thresh, inner=args.inner),
            )
        )

        def round_of_sampling(mod=mod, prefix=prefix, plen=plen):
            # one gossip draw per process, the simulator's hot loop
            for pid in range(1, n + 1):
                mod.sample_pids(prefix ^ pid, plen, n, thresh)

        rows.append(
            (name, f"{n} samples/round", bench(round_of_sampling, inner=max(1, args.inner // 100)))
        )

    width = max(len(r[1]) for r in rows)
    print(f"{'impl':<8}{'operation':<{width + 2}}{'per call':>12}")
    for name, op, sec in rows:
        if sec >= 1e-3:
            shown = f"{sec * 1e3:.3f} ms"
        else:
            shown = f"{sec * 1e6:.2f} us"
        print(f"{name:<8}{op:<{width + 2}}{shown:>12}")

    if len(impls) == 2:
        print()
        by_op: dict = {}
        for name, op, sec in rows:
            by_op.setdefault(op, {})[name] = sec
        for op, vals in by_op.items():
            if len(vals) == 2:
                ratio = vals["numpy"] / vals["cython"]
                print(f"{op}: compiled is {ratio:.1f}x the numpy fallback")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
