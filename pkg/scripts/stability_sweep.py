#!/usr/bin/env python3
"""Randomised closed-loop convergence sweep over 2-4 area systems."""
import argparse
import time

from agcsim.agc import AgcVariant
from agcsim.sim import stability_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--count", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--variant", choices=[v.value for v in AgcVariant], default="simplified")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    t0 = time.perf_counter()
    runs = stability_sweep(args.count, args.seed, AgcVariant(args.variant), args.jobs)
    for r in runs:
        flag = "ok  " if r["converged"] else "FAIL"
        print(f"{flag} seed={r['seed']:4d} N={r['n_areas']} horizon={r['horizon']:8.0f} s "
              f"|ACE| full={r['ace_full']:.1e} reduced={r['ace_reduced']:.1e}")
    n_ok = sum(r["converged"] for r in runs)
    print(f"{n_ok}/{len(runs)} converged in {time.perf_counter() - t0:.1f} s")


if __name__ == "__main__":
    main()
