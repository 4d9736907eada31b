"""Run every shipped preset, write CSVs and report wall time per preset.

usage: python3 scripts/run_presets.py [OUT_DIR] [--only NAME ...]
"""
import argparse
import time
from importlib import resources
from pathlib import Path

from secirs.harness.config import load_config
from secirs.harness.emit import emit
from secirs.harness.experiments import run_experiment


def preset_paths():
    root = resources.files("secirs.harness") / "presets"
    return sorted(Path(str(p)) for p in root.iterdir() if p.name.endswith(".json"))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out", nargs="?", default="results")
    ap.add_argument("--only", nargs="*")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for p in preset_paths():
        if args.only and p.stem not in args.only:
            continue
        cfg = load_config(p)
        t0 = time.perf_counter()
        rows = run_experiment(cfg).rows
        dt = time.perf_counter() - t0
        emit(rows, "csv", out / f"{p.stem}.csv")
        print(f"{p.stem:12s} {len(rows):5d} rows  {dt:7.1f} s")


if __name__ == "__main__":
    main()
