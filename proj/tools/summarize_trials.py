#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
"""Recompute per-strategy final regret from trials.csv and compare with summary.json.

Usage: summarize_trials.py RUN_DIR [--tol 1e-12]
Exit status 0 when every mean and standard error agrees within the tolerance.
"""
import argparse
import csv
import json
import math
import statistics
import sys
from pathlib import Path


def final_rows(trials_path):
    last = {}
    order = []
    with open(trials_path, newline="") as f:
        for row in csv.DictReader(f):
            if row["run_id"] not in last:
                order.append(row["run_id"])
            last[row["run_id"]] = row
    return [last[r] for r in order]


def recompute(rows):
    groups = {}
    for row in rows:
        groups.setdefault(row["strategy"], []).append(row)
    out = {}
    for name, members in groups.items():
        regrets = [float(r["regret"]) for r in members if r["regret"] != ""]
        if len(regrets) != len(members):
            out[name] = (None, None)
            continue
        mean = sum(regrets) / len(regrets)
        se = statistics.stdev(regrets) / math.sqrt(len(regrets)) if len(regrets) > 1 else None
        out[name] = (mean, se)
    return out


def close(a, b, tol):
    if a is None or b is None:
        return a is None and b is None
    return abs(a - b) <= tol


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("run_dir", type=Path)
    parser.add_argument("--tol", type=float, default=1e-12)
    args = parser.parse_args()

    ours = recompute(final_rows(args.run_dir / "trials.csv"))
    summary = json.loads((args.run_dir / "summary.json").read_text())
    if summary.get("schema") != 1:
        print("summary.json: unsupported schema", file=sys.stderr)
        return 1
    ok = True
    for s in summary["strategies"]:
        name = s["strategy"]
        mean, se = ours.get(name, (None, None))
        agree = close(mean, s["final_regret_mean"], args.tol) and close(se, s["final_regret_se"], args.tol)
        ok = ok and agree
        print(f"{name}: mean {mean} vs {s['final_regret_mean']}, se {se} vs {s['final_regret_se']}"
              f" -> {'ok' if agree else 'MISMATCH'}")
    if set(ours) != {s["strategy"] for s in summary["strategies"]}:
        print("strategy sets differ", file=sys.stderr)
        ok = False
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
