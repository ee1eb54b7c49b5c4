#!/usr/bin/env python3
"""Relaxation to equilibrium: forward flow with entropy/dissipation report."""

import argparse

from boltzflow.cli import run
from boltzflow.config import parse_config_dict


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/forward")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--T", type=float, default=10.0)
    args = ap.parse_args()
    cfg = parse_config_dict({
        "experiment": {"type": "forward", "T": args.T},
        "out": args.out,
        "seed": args.seed,
    })
    manifest = run(cfg)
    print(f"done in {manifest.wall_clock:.2f}s; outputs in {cfg.out}")


if __name__ == "__main__":
    main()
