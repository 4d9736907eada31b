"""Command-line entry point: ``simulate <config.json> [--out PATH] [--format csv|json]``."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .emit import emit, raw_to_csv
from .experiments import run_experiment, with_seed

OUT_DIR_ENV = "SECIRS_OUT_DIR"


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="simulate", description=__doc__)
    p.add_argument("config", help="experiment config (JSON)")
    p.add_argument("--out", help="output file; default <id>.<format> in $%s or ." % OUT_DIR_ENV)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--seed", type=_u64, help="override the master seed")
    p.add_argument("--emit-raw", action="store_true",
                   help="also write per-trial records next to the output (.raw.csv)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def resolve_out(args, exp_id: str) -> Path:
    if args.out:
        out = Path(args.out)
        if not out.is_absolute() and os.environ.get(OUT_DIR_ENV):
            out = Path(os.environ[OUT_DIR_ENV]) / out
        return out
    return Path(os.environ.get(OUT_DIR_ENV, ".")) / f"{exp_id}.{args.format}"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
    except FileNotFoundError as e:
        print(f"simulate: cannot read config: {e}", file=sys.stderr)
        return 2
    except ConfigError as e:
        print(f"simulate: invalid config: {e}", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg = with_seed(cfg, args.seed)
    result = run_experiment(cfg, emit_raw=args.emit_raw)
    out = resolve_out(args, cfg.id)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        emit(result.rows, args.format, out)
        if args.emit_raw:
            out.with_suffix(".raw.csv").write_text(raw_to_csv(result.raw))
    except OSError as e:
        print(f"simulate: cannot write output: {e}", file=sys.stderr)
        return 3
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
