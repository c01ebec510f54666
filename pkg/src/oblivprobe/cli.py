"""Command-line entry point: ``oblivprobe <experiment> --seed N [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from .experiments import KINDS, ConfigError, ExperimentConfig, attack_csv, dumps_record, run, session_trace_text

log = logging.getLogger("oblivprobe")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oblivprobe", description=__doc__)
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind)
        p.add_argument("--config", type=Path, help="JSON config; flags override its fields")
        p.add_argument("--seed", type=int, required=True)
        p.add_argument("--trials", type=int)
        p.add_argument("--out", type=Path, help="result JSON path (stdout when omitted)")
        p.add_argument("--threshold", type=int, help="distinguisher threshold (default: calibrated median)")
        p.add_argument("--floor", type=int, help="epoch size floor override")
        p.add_argument("--trace-out", type=Path, help="also dump the first session's trace (oblivcheck)")
        p.add_argument("--timing", action="store_true", help="record wall-clock seconds in the result")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    data = {}
    if args.config is not None:
        data = json.loads(args.config.read_text())
        if data.get("kind", args.kind) != args.kind:
            raise ConfigError(f"kind: config says {data['kind']!r}, command is {args.kind!r}")
    data["kind"] = args.kind
    data["seed"] = args.seed
    for name in ("trials", "threshold", "floor"):
        value = getattr(args, name)
        if value is not None:
            data[name] = value
    return ExperimentConfig.from_dict(data)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args)
    except (ConfigError, TypeError, json.JSONDecodeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    start = time.perf_counter()
    try:
        record = run(cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    elapsed = time.perf_counter() - start
    log.info("%s finished in %.2fs", cfg.kind, elapsed)
    if args.timing:
        record["wall_clock_s"] = elapsed
    text = dumps_record(record)
    if args.out is None:
        sys.stdout.write(text)
    else:
        args.out.write_text(text)
        if cfg.kind == "attack":
            for structure in record["structures"]:
                args.out.with_suffix(f".{structure}.csv").write_text(attack_csv(record, structure))
    if args.trace_out is not None:
        args.trace_out.write_text(session_trace_text(cfg))
    return 0


if __name__ == "__main__":
    sys.exit(main())
