"""Compare the compiled kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Each kernel is timed on representative inputs, then one training epoch and
one exact Wilcoxon batch are timed end to end with each backend swapped in.
"""

import argparse
import time
import timeit

import numpy as np

from workload_forecast import kernels
from workload_forecast.data import WorkloadComponent
from workload_forecast.mlp import TrainConfig, train_early_stopping
from workload_forecast.stats import wilcoxon_signed_rank
from workload_forecast.synth import SynthParams, synthesize_cohort
from workload_forecast.windows import ForecastMode, HorizonConfig, ModeKind, WindowBatch, build_window_batch

NAMES = ("average_ranks", "signed_rank_counts", "adam_update", "gather_windows")


def kernel_cases(rng):
    p = rng.normal(size=60_000)
    g = rng.normal(size=60_000)
    m, v = np.zeros_like(p), np.zeros_like(p)
    series = rng.normal(size=(7, 630))
    ranks = rng.integers(0, 50, 2_000).astype(float)
    doubled = 2 * np.arange(1, 21, dtype=np.int64)
    return {
        "average_ranks (n=2000, ties)": lambda k: k.average_ranks(ranks),
        "signed_rank_counts (n=20)": lambda k: k.signed_rank_counts(doubled),
        "adam_update (60k params)": lambda k: k.adam_update(p, g, m, v, 1e-4, 0.9, 0.999, 1e-8, 0.1, 0.001),
        "gather_windows (7x630, lag 48)": lambda k: k.gather_windows(series, series[0], 48, 12),
    }


def use(backend):
    for name in NAMES:
        setattr(kernels, name, getattr(backend, name))


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    impls = kernels.backends()
    if "cython" not in impls:
        print("compiled kernels not built; run `python3 setup.py build_ext --inplace`")
    rng = np.random.default_rng(0)

    print(f"{'kernel':34s}" + "".join(f"{n:>12s}" for n in impls) + "     speedup")
    for label, fn in kernel_cases(rng).items():
        times = {n: best(lambda: fn(k), args.repeat) for n, k in impls.items()}
        row = "".join(f"{t * 1e3:10.3f}ms" for t in times.values())
        speed = f"{times['python'] / times['cython']:8.1f}x" if "cython" in times else ""
        print(f"{label:34s}{row}  {speed}")

    cohort = synthesize_cohort(16, SynthParams.default())
    mode = ForecastMode(ModeKind.MULTIVARIATE, WorkloadComponent.OVERALL)
    hcfg = HorizonConfig(120, 60)
    cfg = TrainConfig(max_epochs=1, seed=1)
    pairs = [(rng.normal(size=16), rng.normal(size=16)) for _ in range(200)]

    print()
    for name, impl in impls.items():
        use(impl)
        t0 = time.perf_counter()
        batch = WindowBatch.concat(build_window_batch(s, hcfg, mode) for s in cohort)
        t1 = time.perf_counter()
        train_early_stopping(batch, cfg, batch.features.shape[1])
        t2 = time.perf_counter()
        for a, b in pairs:
            wilcoxon_signed_rank(a, b, method="exact")
        t3 = time.perf_counter()
        print(f"{name:8s} windows {t1 - t0:6.3f}s   one epoch ({len(batch)} windows) {t2 - t1:6.3f}s   "
              f"200 exact Wilcoxon (n=16) {t3 - t2:6.3f}s")
    use(impls["cython"] if "cython" in impls else impls["python"])


if __name__ == "__main__":
    main()
