"""Command-line entry point: one subcommand per experiment kind.

    kpzlab <kind> --config spec.json [--out DIR] [--threads N] [--seed S]

The config file holds {"kind": ..., "parameters": {...}, "replicas": ...,
"master_seed": ...}; the kind subcommand must match the file (or the file may
omit it).  Thread count falls back to the KPZLAB_THREADS environment
variable.  Exit codes: 0 success, 2 validation error, 3 numeric abort.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import jsonschema

from .experiments import EXIT_VALIDATION, EXPERIMENT_KINDS, ExperimentSpec, run


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kpzlab", description=__doc__)
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in EXPERIMENT_KINDS:
        p = sub.add_parser(kind, help=f"run the {kind} experiment")
        p.add_argument("--config", required=True, help="JSON experiment spec")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--seed", type=int, default=None, help="override master seed")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    threads = args.threads
    if threads is None:
        threads = int(os.environ.get("KPZLAB_THREADS", "1"))
    try:
        with open(args.config) as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"validation error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    if "kind" in obj and obj["kind"] != args.kind:
        print(
            f"validation error: config kind {obj['kind']!r} does not match subcommand {args.kind!r}",
            file=sys.stderr,
        )
        return EXIT_VALIDATION
    obj["kind"] = args.kind
    try:
        spec = ExperimentSpec.from_json(obj, threads=threads, seed_override=args.seed)
    except jsonschema.ValidationError as exc:
        print(f"validation error: {exc.message}", file=sys.stderr)
        return EXIT_VALIDATION
    return run(spec, args.out)


if __name__ == "__main__":
    sys.exit(main())
