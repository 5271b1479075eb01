#!/usr/bin/env python3
"""Full-scale experiment matrix at the default configuration (100x60 cells at
50 m, ~14-day double-peak event, 75 members, 18 h windows sliding by 12 h):
FR, IDA, IWDA and IHDA against one synthetic truth.

This is the real thing: expect several core-hours. Pass an INI file to run a
reduced variant (see scripts/run_demo_twin.py for a quick one).

Usage: python scripts/run_full_experiment.py [--config PATH] [--out DIR]
"""

import argparse
import sys
import time

from floodtwin.cli import main

parser = argparse.ArgumentParser()
parser.add_argument("--config", default=None)
parser.add_argument("--out", default="out/full")
args = parser.parse_args()

base = ["--out", args.out]
if args.config:
    base = ["--config", args.config] + base


def run(extra):
    code = main(base + extra)
    if code != 0:
        sys.exit(code)


t0 = time.time()
run(["truth"])
run(["synthesize"])
for mode in ("fr", "ida", "iwda", "ihda"):
    t1 = time.time()
    run(["--mode", mode, "run"])
    run(["--mode", mode, "verify"])
    print(f"{mode}: {time.time() - t1:.0f} s")
print(f"total: {time.time() - t0:.0f} s; reports under {args.out}/verify/")
