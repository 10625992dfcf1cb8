#!/usr/bin/env python3
"""Cross-response peak of eta_1 vs overbias O_1 in a two-area system.

Prints the closed-form estimate next to the exact step-response extremum.
"""
import argparse

import numpy as np

from agcsim.analysis import peak_eta, peak_eta_step


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--lo", type=float, default=-0.5)
    ap.add_argument("--hi", type=float, default=0.5)
    ap.add_argument("--step", type=float, default=0.05)
    args = ap.parse_args()

    print(f"{'O_1':>7} {'estimate':>10} {'exact':>10}")
    for o in np.arange(args.lo, args.hi + args.step / 2, args.step):
        o = round(float(o), 12)
        if o == 0.0:
            print(f"{o:7.3f} {0.0:10.5f} {0.0:10.5f}")
            continue
        print(f"{o:7.3f} {peak_eta([o, 0.0]):10.5f} {peak_eta_step([o, 0.0]):10.5f}")


if __name__ == "__main__":
    main()
