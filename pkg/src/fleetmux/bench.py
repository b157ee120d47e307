"""Benchmark the compiled grid kernels against the pure-Python fallback.

Run via `fleetmux bench` or `python -m fleetmux.bench`. The same seeded
inputs go through both backends; outputs are compared for exact equality
while timing, so the benchmark doubles as a parity smoke check.
"""

from __future__ import annotations

import time

import numpy as np

from fleetmux.grid import FREE, OCCUPIED, UNKNOWN
from fleetmux.kernels import pure

try:
    from fleetmux.kernels import _gridcore as compiled
except ImportError:
    compiled = None


def _random_world(size: int, seed: int = 7):
    rng = np.random.default_rng(seed)
    cells = np.full((size, size), FREE, dtype=np.uint8)
    cells[0, :] = OCCUPIED
    cells[-1, :] = OCCUPIED
    cells[:, 0] = OCCUPIED
    cells[:, -1] = OCCUPIED
    n_blobs = size // 10
    for _ in range(n_blobs):
        r = int(rng.integers(2, size - 2))
        c = int(rng.integers(2, size - 2))
        cells[r : r + 2, c : c + 2] = OCCUPIED
    return cells


def _time(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run(size: int = 200, repeat: int = 20) -> None:
    truth = _random_world(size)
    res = 0.1
    px = py = size * res / 2

    cases = []

    def scan(impl):
        known = np.full_like(truth, UNKNOWN)
        impl.integrate_scan(truth, known, px, py, 0.0, 0.0, res, 240, 8.0)
        return known

    cases.append(("integrate_scan (240 rays x 8 m)", scan))
    cases.append(("inflate (r=4 cells)", lambda impl: impl.inflate(truth, 4.0)))
    cases.append(
        ("frontier_mask", lambda impl: impl.frontier_mask(scan(pure)))
    )
    known_for_frontier = scan(pure)
    cases[-1] = ("frontier_mask", lambda impl: impl.frontier_mask(known_for_frontier))
    cases.append(
        ("reachable_mask", lambda impl: impl.reachable_mask(truth, size // 2, size // 2))
    )

    print(f"grid {size}x{size}, best of {repeat}")
    header = f"{'kernel':<32} {'pure':>10} {'compiled':>10} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for name, fn in cases:
        t_pure = _time(lambda: fn(pure), repeat)
        if compiled is None:
            print(f"{name:<32} {t_pure * 1e3:>8.2f}ms {'n/a':>10} {'':>8}")
            continue
        t_comp = _time(lambda: fn(compiled), repeat)
        out_p = fn(pure)
        out_c = fn(compiled)
        assert np.array_equal(np.asarray(out_p), np.asarray(out_c)), f"parity broke: {name}"
        print(
            f"{name:<32} {t_pure * 1e3:>8.2f}ms {t_comp * 1e3:>8.2f}ms {t_pure / t_comp:>7.1f}x"
        )
    if compiled is None:
        print("compiled backend unavailable; build it with: pip install -e . --no-build-isolation")


if __name__ == "__main__":
    run()
