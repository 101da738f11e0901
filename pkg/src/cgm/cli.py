"""Command line entry point: ``cgm <experiment> --config FILE``."""

from __future__ import annotations

import argparse
import json
import sys

from . import harness
from .errors import InstabilityError, ResourceLimitError


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cgm", description="Run a corner-growth experiment.")
    p.add_argument("experiment", choices=harness.EXPERIMENTS + ("schema",),
                   help="experiment to run, or 'schema' to print the config schema")
    p.add_argument("--config", help="JSON config file (defaults are used when omitted)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--replicates", type=int, help="override the replicate count")
    p.add_argument("--workers", type=int, help="worker processes")
    p.add_argument("--out", help="output directory")
    p.add_argument("--format", choices=("csv", "json"), help="output format")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.experiment == "schema":
        print(json.dumps(harness.CONFIG_SCHEMA, indent=2))
        return 0
    overrides = {"seed": args.seed, "replicates": args.replicates, "workers": args.workers,
                 "out": args.out, "format": args.format}
    try:
        if args.config:
            cfg = harness.load_config(args.config, args.experiment, **overrides)
        else:
            cfg = harness.parse_config({"experiment": args.experiment}, **overrides)
        if cfg.experiment != args.experiment:
            raise harness.ConfigError(
                f"experiment: config names {cfg.experiment!r} but {args.experiment!r} was requested")
        bundle = harness.run(cfg)
        paths = harness.emit(bundle, cfg["format"], cfg.get("out", "."))
    except harness.ConfigError as e:
        print(f"cgm: invalid config: {e}", file=sys.stderr)
        return 2
    except (ResourceLimitError, InstabilityError, OSError) as e:
        print(f"cgm: {e}", file=sys.stderr)
        return 2
    for v in bundle.verdicts:
        print(f"{'PASS' if v.passed else 'FAIL'} {v.name}: {v.value:.6g} ({v.detail})")
    for path in paths:
        print(f"wrote {path}")
    return 0 if bundle.passed else 1


if __name__ == "__main__":
    sys.exit(main())
