#!/usr/bin/env python3
"""Convergence-order study for both scheme families.

Solves u' = -u + cos t over four dyadic step refinements for several
polynomial orders, fits the end-point error slopes, and prints one table row
per (family, order).  The continuous family converges at order 2q, the
discontinuous one at 2q + 1.
"""

import argparse
import time

import numpy as np

from mgode.partition import build_partition
from mgode.solver import OdeProblem, SolveSettings, solve


def exact(t):
    return 0.5 * np.exp(-t) + 0.5 * (np.cos(t) + np.sin(t))


def rhs(u, t):
    return -u + np.cos(t)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--base-step", type=float, default=0.2)
    parser.add_argument("--refinements", type=int, default=4)
    parser.add_argument("--horizon", type=float, default=1.0)
    args = parser.parse_args()

    print(f"{'scheme':>8} {'order':>6} "
          + " ".join(f"{'err(k/' + str(2**r) + ')':>12}" for r in range(args.refinements))
          + f" {'slope':>7} {'expected':>9}")
    start = time.time()
    for method, orders in (("mcG", (1, 2, 3)), ("mdG", (0, 1, 2))):
        for q in orders:
            errs, ks = [], []
            for r in range(args.refinements):
                k = args.base_step / 2**r
                prob = OdeProblem(rhs=rhs, u0=[1.0], T=args.horizon,
                                  methods=method, vectorized=True)
                part = build_partition(k, q, args.horizon, methods=prob.methods)
                traj = solve(prob, part,
                             SolveSettings(tolerance=1e-14, max_sweeps=400,
                                           quad_depth=2))
                errs.append(abs(traj.end_state()[0] - exact(args.horizon)))
                ks.append(k)
            slope = np.polyfit(np.log(ks), np.log(errs), 1)[0]
            expected = 2 * q if method == "mcG" else 2 * q + 1
            print(f"{method:>8} {q:>6} "
                  + " ".join(f"{e:12.3e}" for e in errs)
                  + f" {slope:7.3f} {expected:9d}")
    print(f"\ntotal time: {time.time() - start:.1f} s")


if __name__ == "__main__":
    main()
