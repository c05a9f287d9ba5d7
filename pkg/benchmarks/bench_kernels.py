"""Compare the compiled kernels with the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints per-call timings for each kernel and the wall time of a fixed PSOPP
run with each backend swapped in.
"""
import argparse
import importlib
import random
import time
import timeit

from sotest import _kernels_py, kernels, psopp
from sotest.clock import SimulatedClock
from sotest.domain import PartitioningConstraints
from sotest.generation import PsoppParams, random_partitioning

NAMES = ("as_vector", "partition_means", "mean_spread", "homogeneity_fitness", "sample_row")


def backends():
    out = {"python": _kernels_py}
    try:
        out["cython"] = importlib.import_module("sotest._kernels")
    except ImportError:
        pass
    return out


def kernel_cases(rng):
    n = 200
    acc = [rng.random() for _ in range(n)]
    parts = random_partitioning(range(n), PartitioningConstraints(2, 20, 10, 100), rng)
    row = [1 / 25] * 25
    return acc, parts, row


def time_kernels(impl, acc, parts, row, repeat):
    vec = impl.as_vector(acc)
    calls = {
        "partition_means": lambda: impl.partition_means(parts, vec),
        "mean_spread": lambda: impl.mean_spread(parts, vec),
        "homogeneity_fitness": lambda: impl.homogeneity_fitness(parts, vec),
        "sample_row": lambda: impl.sample_row(row, 0.97),
    }
    res = {}
    for name, fn in calls.items():
        number = 2000
        best = min(timeit.repeat(fn, number=number, repeat=repeat))
        res[name] = best / number * 1e6
    return res


def time_psopp(impl, repeat):
    saved = {name: getattr(kernels, name) for name in NAMES}
    try:
        for name in NAMES:
            setattr(kernels, name, getattr(impl, name))
        best = float("inf")
        for _ in range(repeat):
            rng = random.Random(1)
            acc = [rng.random() for _ in range(150)]
            c = PartitioningConstraints(2, 40, 4, 40)
            t = time.perf_counter()
            psopp.run_psopp(None, c, PsoppParams(4, 0, 0.4, 0.3, 0.3, 1.0), acc, rng, SimulatedClock(),
                            agents=range(150))
            best = min(best, time.perf_counter() - t)
        return best
    finally:
        for name, fn in saved.items():
            setattr(kernels, name, fn)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    impls = backends()
    acc, parts, row = kernel_cases(random.Random(0))
    print(f"default backend: {kernels.BACKEND}")
    table = {name: time_kernels(impl, acc, parts, row, args.repeat) for name, impl in impls.items()}
    print(f"{'kernel':<22}" + "".join(f"{n + ' (us)':>16}" for n in impls) + ("   speedup" if len(impls) > 1 else ""))
    for k in table["python"]:
        line = f"{k:<22}" + "".join(f"{table[n][k]:>16.2f}" for n in impls)
        if "cython" in table:
            line += f"{table['python'][k] / table['cython'][k]:>9.1f}x"
        print(line)
    runs = {name: time_psopp(impl, args.repeat) for name, impl in impls.items()}
    print("psopp run, 150 agents, 4 particles, 500 clock ticks: "
          + ", ".join(f"{n} {t * 1e3:.1f} ms" for n, t in runs.items()))


if __name__ == "__main__":
    main()
