"""Command line entry point: quantRelax {run,compare,quantize,verify}"""

import sys
import json
import argparse
import logging

from . import Defaults

from . import Harness

from . import verify

from .utilities import setup_logging

from .exceptions import (ConfigurationError, DatasetError, InvalidInputError, OracleSizeError,
                         QuantRelaxError)

logger = logging.getLogger(__name__)

VALIDATION_ERRORS = (ConfigurationError, DatasetError, InvalidInputError, OracleSizeError)


def _parse_levels(text):
    return tuple(float(tok) for tok in text.replace(',', ' ').split())


def build_parser():
    """Build the argument parser with one sub-parser per command"""
    parser = argparse.ArgumentParser(prog='quantRelax',
                                     description='Quantized training by relaxed projection')
    parser.add_argument("-v", "--verbose", action='store_true', default=Defaults.VERBOSE,
                        help="Log at DEBUG level")
    subparsers = parser.add_subparsers(dest='command', required=True)

    def add_run_args(sub):
        sub.add_argument("-c", "--config", default=None,
                         help="JSON run configuration, the built-in defaults if omitted")
        sub.add_argument("--set", dest='overrides', action='append', default=[], metavar='KEY=VALUE',
                         help="Override a config entry, e.g. relax.rho=1.02 (repeatable)")
        sub.add_argument("-o", "--out", default=None,
                         help="Output directory, defaults to $QUANTRELAX_OUT")
        sub.add_argument("--seed", type=int, default=None,
                         help="Master seed, replaces the config seed")
        sub.add_argument("--warm-start", default=None, metavar='PATH',
                         help="Start from the weights of a float checkpoint")

    run = subparsers.add_parser('run', help="Run one training job")
    add_run_args(run)
    run.add_argument("--iterations", action='store_true', default=False,
                     help="Also write one metrics row per iteration")

    compare = subparsers.add_parser('compare', help="Compare optimizers over seeds")
    add_run_args(compare)
    compare.add_argument("--optimizers", nargs='+', default=None,
                         help="Optimizers to compare, the config optimizer if omitted")
    compare.add_argument("--seeds", nargs='+', type=int, default=None,
                         help="Explicit run seeds")
    compare.add_argument("--num-seeds", type=int, default=None,
                         help="Number of seeds derived from the master seed")
    compare.add_argument("-j", "--jobs", type=int, default=1,
                         help="Number of concurrent runs")

    quantize = subparsers.add_parser('quantize', help="Quantize a vector read from a file")
    quantize.add_argument("vector_file", help="Whitespace or comma separated reals")
    quantize.add_argument("--scheme", default=None,
                          help="Named scheme, one of %s" % ', '.join(Harness.SCHEME_LIBRARY.keys()))
    quantize.add_argument("--solver", default='ternary',
                          help="Solver: binary, ternary, twn or lloyd")
    quantize.add_argument("--levels", type=_parse_levels, default=None,
                          help="Quantization levels, e.g. '0,1,2,3'")
    quantize.add_argument("--bits", type=int, default=None, help="Bit width")
    quantize.add_argument("--max-iters", type=int, default=None, help="Lloyd iterations")
    quantize.add_argument("--codes", action='store_true', default=False,
                          help="Print the full code vector")
    quantize.add_argument("--oracle", action='store_true', default=False,
                          help="Cross-check against the brute force oracle")

    check = subparsers.add_parser('verify', help="Run the fast acceptance properties")
    check.add_argument("--filter", default=None,
                       help="Property or module name, options are %s" % ', '.join(verify.PROPERTIES.keys()))
    check.add_argument("--inject-fault", default=None, choices=sorted(verify.FAULTS.keys()),
                       help=argparse.SUPPRESS)
    return parser


def dispatch(args):
    """Run the selected command and return its exit code"""
    if getattr(args, 'warm_start', None) is not None:
        args.overrides.append("warm_start=%s" % json.dumps(args.warm_start))
    if args.command == 'run':
        return Harness.cmd_run(args.config, args.overrides, args.out, args.seed, args.iterations)
    if args.command == 'compare':
        return Harness.cmd_compare(args.config, args.optimizers, args.seeds, args.num_seeds,
                                   args.overrides, args.out, args.seed, args.jobs)
    if args.command == 'quantize':
        scheme = Harness.build_quantize_scheme(args.scheme, args.solver, args.levels, args.bits, args.max_iters)
        return Harness.cmd_quantize(args.vector_file, scheme, args.codes, args.oracle)
    return verify.run_properties(args.filter, args.inject_fault)


def main(argv=None):
    """Parse the command line, run the command and map errors to exit codes

    0 success, 1 validation error, 2 runtime failure, 3 property failure
    """
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)
    try:
        return dispatch(args)
    except VALIDATION_ERRORS as err:
        errors = err.errors if isinstance(err, ConfigurationError) else [str(err)]
        for msg in errors:
            logger.error(msg)
        return Defaults.EXIT_VALIDATION
    except QuantRelaxError as err:
        logger.error(str(err))
        return Defaults.EXIT_RUNTIME


if __name__ == '__main__':
    sys.exit(main())
