"""Compiled versus numpy wave kernel.

    python3 benchmarks/bench_core.py [--repeat N]

Times one predictor window (``wave_window``) and one upwind transport step
for both backends on the grids and delays the bundled scenarios use, and
checks that the two backends agree before timing them.
"""

import argparse
import timeit

import numpy as np

from delaywave._core import _fallback

try:
    from delaywave._core import _wave
except ImportError:
    _wave = None


def _window_case(n, tau, cfl=0.5):
    rng = np.random.default_rng(0)
    h = 1.0 / n
    dt = cfl * h
    steps = int(round(tau / dt))
    w, v = rng.standard_normal(n + 1), rng.standard_normal(n + 1)
    b = np.zeros(steps + 1)
    g = rng.standard_normal(steps + 1)
    return w, v, h, dt, b, g


def _time(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def bench(repeat):
    rows = []
    for n in (100, 200, 400):
        for tau in (0.1, 0.5, 1.0):
            w, v, h, dt, b, g = _window_case(n, tau)
            call = lambda mod: mod.wave_window(w.copy(), v.copy(), h, dt, -1.0, b, g, 0.25)
            py = _time(lambda: call(_fallback), repeat)
            if _wave is not None:
                a = (w.copy(), v.copy())
                c = (w.copy(), v.copy())
                _fallback.wave_window(*a, h, dt, -1.0, b, g, 0.25)
                _wave.wave_window(*c, h, dt, -1.0, b, g, 0.25)
                assert np.allclose(a[0], c[0], atol=1e-12, rtol=0)
                cy = _time(lambda: call(_wave), repeat)
            else:
                cy = float("nan")
            rows.append((f"wave_window n={n} tau={tau}", len(g) - 1, py, cy))
    for n in (200, 400):
        f = np.random.default_rng(1).standard_normal(n + 1)
        py = _time(lambda: _fallback.upwind_shift(f.copy(), 0.3, 0.5), 20 * repeat)
        cy = (_time(lambda: _wave.upwind_shift(f.copy(), 0.3, 0.5), 20 * repeat)
              if _wave is not None else float("nan"))
        rows.append((f"upwind_shift n={n}", 1, py, cy))
    return rows


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args()
    print(f"{'case':<30} {'steps':>6} {'numpy [ms]':>11} {'cython [ms]':>12} {'speed-up':>9}")
    for name, steps, py, cy in bench(args.repeat):
        print(f"{name:<30} {steps:>6} {1e3 * py:>11.3f} {1e3 * cy:>12.3f} {py / cy:>8.1f}x")
    if _wave is None:
        print("compiled kernel not built; only the numpy path was timed")


if __name__ == "__main__":
    main()
