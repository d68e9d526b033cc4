#!/usr/bin/env python3
"""Render trace-curve SVGs and summaries for every builtin scenario.

Runs the chain pipeline (plus the welding atlas where it applies) on each
registry entry and collects the artifacts under one gallery directory.

Usage: python scripts/scenario_gallery.py [--out gallery]
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from loewnerqc.scenarios import builtin_scenario, scenario_names
from loewnerqc.cli import run_pipeline


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", type=str, default="gallery")
    args = ap.parse_args()
    root = Path(args.out)

    for name in scenario_names():
        for command in ("chain", "range"):
            cfg = builtin_scenario(name)
            code, summary = run_pipeline(cfg, command, root / name / command)
            state = "ok" if code == 0 else "FAIL"
            print(f"{name:>16} {command:>6}: {state} ({summary['runtime_ms']:.0f} ms)")
        if name in ("becker", "sector", "exponential", "chordal", "step-tau"):
            cfg = builtin_scenario(name)
            code, summary = run_pipeline(cfg, "extend", root / name / "extend")
            state = "ok" if code == 0 else "FAIL"
            print(f"{name:>16} extend: {state} ({summary['runtime_ms']:.0f} ms)")
    print(f"artifacts under {root}/")


if __name__ == "__main__":
    main()
