"""``riscatter <kind> --spec FILE --out DIR [--seed N] [--threads N]``.

Exit status is 0 on success, 2 when the spec or arguments fail validation and
1 on any other failure. ``RISCATTER_LOG_LEVEL`` (``DEBUG``, ``INFO``, ...) sets
log verbosity; the default is ``WARNING``.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import __version__
from ._validation import ParameterError
from .experiment import KINDS, ExperimentSpec, SpecError, run

LOG_ENV = "RISCATTER_LOG_LEVEL"
EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION = 0, 1, 2

log = logging.getLogger("riscatter")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="riscatter", description="Run a seeded RIS scattering experiment.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("kind", choices=KINDS)
    parser.add_argument("--spec", required=True, help="JSON experiment spec")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="master seed (overrides the spec)")
    parser.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
    return parser


def _configure_logging():
    level_name = os.environ.get(LOG_ENV, "WARNING").upper()
    level = logging.getLevelName(level_name)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv=None):
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        try:
            spec = ExperimentSpec.load(args.spec)
        except OSError as exc:
            raise SpecError(f"--spec: cannot read {args.spec!r} ({exc.strerror})") from None
        if spec.kind != args.kind:
            raise SpecError(f"kind: spec declares {spec.kind!r} but {args.kind!r} was requested")
        if args.seed is not None:
            spec.seed = args.seed
        if args.threads < 1:
            raise SpecError(f"--threads must be >= 1, got {args.threads}")
        manifest = run(spec, args.out, threads=args.threads)
    except ParameterError as exc:
        print(f"riscatter: validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001
        log.debug("failure", exc_info=True)
        print(f"riscatter: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(manifest.result_digest())
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
