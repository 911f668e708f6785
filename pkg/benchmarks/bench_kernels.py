"""Numba vs numpy timings for the hot loops.

Each kernel is called through both ``_kernels.numpy_impl`` and
``_kernels.numba_impl`` on the same inputs; outputs are cross-checked and
the best of ``--repeat`` wall times is reported.  ``--end-to-end`` also
times a full semiclassical run of the elliptic preset in two subprocesses,
one with ``WIGNERPROP_DISABLE_NUMBA=1``.

    python3 benchmarks/bench_kernels.py --repeat 3 --end-to-end
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from wignerprop import _kernels
from wignerprop.model import CUBIC_WELL, PhasePoint
from wignerprop.vanvleck import seed_pairs


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def _max_diff(a, b):
    if isinstance(a, tuple):
        return max(_max_diff(x, y) for x, y in zip(a, b))
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape:
        return np.inf
    fin = np.isfinite(a) & np.isfinite(b)
    if not np.array_equal(fin, np.isfinite(a) | np.isfinite(b)):
        return np.inf
    return float(np.max(np.abs(a[fin] - b[fin]), initial=0.0))


def cases(n_pairs, n_points, rng):
    c = [CUBIC_WELL.derivative_coefficients(k) for k in range(3)]
    r0 = PhasePoint(0.636, 0.0)
    n_ang = 64
    d = seed_pairs(r0, max(n_pairs // n_ang, 1), n_ang, 0.4)
    plus = r0.as_array() + d / 2
    minus = r0.as_array() - d / 2
    pair_args = (plus[:, 0].copy(), plus[:, 1].copy(), minus[:, 0].copy(), minus[:, 1].copy(),
                 c[0], c[1], c[2], 1.0, 1e-3, 1800, 0.0, 1e3)
    track_args = (0.636, 0.0, c[1], c[2], 1.0, 1e-4, 18000, 0.0, 1e3)
    x, y = rng.uniform(-1, 1, (2, n_points))
    vals = rng.normal(size=(n_points, 2))
    shep_args = (x, y, vals, -1.0, -1.0, 2 / 256, 2 / 256, 256, 256, 3 * 2 / 256)
    fi, fj = rng.uniform(-1, 256, (2, n_points))
    cic_args = (fi, fj, rng.normal(size=n_points), 256, 256)
    return [
        ("rk4_pairs", f"{len(plus)} pairs x 1800 steps", pair_args),
        ("rk4_track", "1 orbit x 18000 steps", track_args),
        ("shepard_accumulate", f"{n_points} samples, 256^2 grid", shep_args),
        ("cic_deposit", f"{n_points} samples, 256^2 grid", cic_args),
    ]


def kernel_table(repeat, n_pairs, n_points):
    rng = np.random.default_rng(0)
    impls = [_kernels.numpy_impl] + ([_kernels.numba_impl] if _kernels.numba_impl else [])
    print(f"{'kernel':20s} {'workload':32s} " + " ".join(f"{i.name:>10s}" for i in impls)
          + f" {'speedup':>8s} {'max |diff|':>11s}")
    for name, label, args in cases(n_pairs, n_points, rng):
        timings, outs = [], []
        for impl in impls:
            fn = getattr(impl, name)
            if impl.name == "numba":
                fn(*args)      # compile outside the timing
            t, out = best_of(lambda: fn(*args), repeat)
            timings.append(t)
            outs.append(out)
        speed = timings[0] / timings[-1] if len(timings) > 1 else float("nan")
        diff = _max_diff(outs[0], outs[-1]) if len(outs) > 1 else 0.0
        print(f"{name:20s} {label:32s} " + " ".join(f"{t:9.4f}s" for t in timings)
              + f" {speed:7.1f}x {diff:11.2e}")


_E2E = ("from wignerprop.harness import load_preset, run_scenario\n"
        "import time\n"
        "cfg = load_preset('fig3-elliptic').with_overrides(method='vanvleck')\n"
        "run_scenario(cfg, emit=False)\n"
        "t0 = time.perf_counter(); run_scenario(cfg, emit=False)\n"
        "print(time.perf_counter() - t0)\n")


def end_to_end():
    print("\nvanvleck level of fig3-elliptic, second run in a fresh process")
    for disabled in ("0", "1"):
        env = dict(os.environ, WIGNERPROP_DISABLE_NUMBA=disabled)
        out = subprocess.run([sys.executable, "-c", _E2E], env=env, capture_output=True, text=True, check=True)
        backend = "numpy" if disabled == "1" else "numba"
        print(f"  {backend:6s} {float(out.stdout.split()[-1]):8.2f} s")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--pairs", type=int, default=64 * 64)
    ap.add_argument("--points", type=int, default=200_000)
    ap.add_argument("--end-to-end", action="store_true")
    args = ap.parse_args(argv)
    print(f"numba available: {_kernels.HAS_NUMBA}; active backend: {_kernels.BACKEND}\n")
    kernel_table(args.repeat, args.pairs, args.points)
    if args.end_to_end:
        end_to_end()


if __name__ == "__main__":
    main()
