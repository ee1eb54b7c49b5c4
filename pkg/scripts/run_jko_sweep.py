#!/usr/bin/env python3
"""Time-step sweep of the minimizing-movement scheme against the forward flow.

Runs the jko experiment for a list of tau values and prints the sup-L1
gap per tau; the gaps should decrease as tau shrinks.
"""

import argparse
import json
import os

from boltzflow.cli import run
from boltzflow.config import parse_config_dict


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/jko_sweep")
    ap.add_argument("--taus", type=float, nargs="+", default=[0.2, 0.1, 0.05])
    ap.add_argument("--T", type=float, default=1.0)
    args = ap.parse_args()
    for tau in args.taus:
        out = os.path.join(args.out, f"tau_{tau:g}")
        cfg = parse_config_dict({
            "experiment": {"type": "jko", "tau": tau, "T": args.T},
            "out": out,
        })
        run(cfg)
        with open(os.path.join(out, "comparison.json")) as fh:
            comp = json.load(fh)
        print(f"tau {tau:g}: max_l1 {comp['max_l1']:.6g}  max_w1 {comp['max_w1']:.6g}")


if __name__ == "__main__":
    main()
