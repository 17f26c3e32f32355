"""``momentctl`` command-line front end."""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import DescriptorError, MomentError
from .pipeline import COMMANDS, JobDescriptor, render_report, run, write_outputs


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="momentctl",
                                     description="Decide whether a moment functional has a representing measure.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--job", required=True, help="path to the JSON job descriptor")
    parser.add_argument("--out", default="momentctl-out", help="output directory (default: %(default)s)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--dump-matrices", action="store_true", help="write moment/localizing matrices as CSV")
    parser.add_argument("--psd-tol", type=float, help="override the relative PSD tolerance")
    parser.add_argument("--rank-tol", type=float, help="override the relative rank tolerance")
    parser.add_argument("--carleman-threshold", type=float, help="override the Carleman divergence threshold")
    parser.add_argument("--quiet", action="store_true", help="do not print the report")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        job = JobDescriptor.load(args.job)
        overrides = {"psd": args.psd_tol, "rank": args.rank_tol, "carleman_threshold": args.carleman_threshold}
        overrides = {k: v for k, v in overrides.items() if v is not None}
        if overrides:
            job.tolerances = type(job.tolerances).from_json({**job.tolerances.to_json(), **overrides})
        if args.threads < 1:
            raise DescriptorError("--threads must be >= 1")
        verdict = run(job, args.command, seed=args.seed, threads=args.threads, keep_matrices=args.dump_matrices)
        write_outputs(verdict, args.out, args.dump_matrices)
    except DescriptorError as exc:
        print(f"momentctl: invalid job: {exc}", file=sys.stderr)
        return 1
    except MomentError as exc:
        stage = f"[{exc.stage}] " if getattr(exc, "stage", None) else ""
        print(f"momentctl: {stage}{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    if not args.quiet:
        print(render_report(verdict), end="")
    return verdict.exit_code


if __name__ == "__main__":
    sys.exit(main())
