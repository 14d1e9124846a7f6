"""Compiled versus pure-Python flow kernels.

Times one right-hand-side evaluation and one short integration on radial and
Cartesian grids for a power and a tabulated generator, then prints a table of
median wall times and speedups.  Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5] [--cells 512]
"""

from __future__ import annotations

import argparse
import statistics
import timeit

import numpy as np

from phiexp import deformed, perturbed_power, power
from phiexp import kernels


def radial_case(n):
    edges = np.linspace(0.0, 16.0, n + 1)
    r = 0.5 * (edges[:-1] + edges[1:])
    rho = np.exp(-r * r / 8.0) / (8.0 * np.pi)
    return edges, rho


def cartesian_case(n):
    e = np.linspace(-8.0, 8.0, n + 1)
    xc = 0.5 * (e[:-1] + e[1:])
    X, Y = np.meshgrid(xc, xc)
    rho = np.exp(-(X * X / 2.0 + Y * Y / 0.5) / 2.0)
    rho /= rho.sum() * (e[1] - e[0]) ** 2
    return xc, e[1] - e[0], rho


def workloads(be, kp, n_radial, n_cart):
    edges, rho_r = radial_case(n_radial)
    xc, h, rho_c = cartesian_case(n_cart)
    floor_r, floor_c = 1e-14 * rho_r.max(), 1e-14 * rho_c.max()
    return {
        f"rhs radial ({n_radial})": lambda: be.rhs_radial(rho_r, edges, 2, 0.5, floor_r, kp),
        f"advance radial ({n_radial}, t=0.05)": lambda: be.advance_radial(
            rho_r.copy(), edges, 2, 0.5, floor_r, 0.4, 0.0, 0.05, kp
        ),
        f"rhs cartesian ({n_cart}^2)": lambda: be.rhs_cartesian(rho_c, xc, xc, h, h, 0.5, floor_c, kp),
        f"advance cartesian ({n_cart}^2, t=0.01)": lambda: be.advance_cartesian(
            rho_c.copy(), xc, xc, h, h, 0.5, floor_c, 0.4, 0.0, 0.01, kp
        ),
    }


def median_time(fn, repeat):
    fn()  # warm-up
    return statistics.median(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--cells", type=int, default=512, help="radial cells (Cartesian uses cells/8 per axis)")
    args = ap.parse_args(argv)
    if kernels.compiled_backend is None:
        raise SystemExit("compiled kernels are not built; run pip install -e . --no-build-isolation")

    gens = {"power(0.8)": power(0.8), "perturbed(1,0.2)": perturbed_power(1.0, 0.2)}
    print(f"{'generator':<18} {'workload':<34} {'python [ms]':>12} {'compiled [ms]':>14} {'speedup':>8}")
    for label, spec in gens.items():
        kp = kernels.pack_params(deformed(spec).kernel_params())
        slow = workloads(kernels.python_backend, kp, args.cells, args.cells // 8)
        fast = workloads(kernels.compiled_backend, kp, args.cells, args.cells // 8)
        for name in slow:
            ts = median_time(slow[name], args.repeat)
            tf = median_time(fast[name], args.repeat)
            print(f"{label:<18} {name:<34} {1e3 * ts:12.3f} {1e3 * tf:14.3f} {ts / tf:8.1f}")


if __name__ == "__main__":
    main()
