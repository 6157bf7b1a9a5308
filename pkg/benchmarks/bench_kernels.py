"""Compare the compiled and numpy derivative kernels.

Run with ``python benchmarks/bench_kernels.py``. Timings are the median of
several repeats of a block of calls, reported per call.
"""

from __future__ import annotations

import argparse
import statistics
import timeit

import numpy as np

from gemtransfer import _kernels_py

try:
    from gemtransfer import _ckernels
except ImportError:
    _ckernels = None


def _gem_case(m, rng):
    at = rng.normal(size=m) + 1j * rng.normal(size=m)
    xi = np.linspace(-20.0, 20.0, m)
    out = np.empty(m, complex)
    return lambda mod: mod.gem_rhs(at, xi, -1.0, 0.37, 2.0, xi[1] - xi[0], 0.3 - 0.1j, out)


def _bloch_case(k, rng):
    x, y, z = rng.normal(size=(3, k))
    deltas = np.linspace(-50.0, 50.0, k)
    w = rng.random(k)
    outs = [np.empty(k) for _ in range(3)]
    return lambda mod: mod.bloch_rhs(x, y, z, deltas, w, 1.0, 0.1, 0.4 + 0.9j, *outs)


def time_call(fn, number, repeat):
    runs = timeit.repeat(fn, number=number, repeat=repeat)
    return statistics.median(runs) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--number", type=int, default=200)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    backends = [("python", _kernels_py)]
    if _ckernels is not None:
        backends.append(("cython", _ckernels))
    else:
        print("compiled kernels not built; timing the python fallback only")

    print(f"{'kernel':<10} {'size':>6} " + " ".join(f"{name + ' us':>11}" for name, _ in backends) + "  speedup")
    for label, make, sizes in (("gem_rhs", _gem_case, (512, 4096, 16384)), ("bloch_rhs", _bloch_case, (1, 257, 2049))):
        for size in sizes:
            case = make(size, rng)
            times = [time_call(lambda mod=mod: case(mod), args.number, args.repeat) for _, mod in backends]
            speed = f"{times[0] / times[-1]:7.1f}x" if len(times) > 1 else ""
            print(f"{label:<10} {size:>6} " + " ".join(f"{1e6 * t:11.2f}" for t in times) + "  " + speed)


if __name__ == "__main__":
    main()
