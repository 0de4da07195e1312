"""Desk-scale comparison families: quantization scheme x optimizer over seeds"""

import os
import sys
import argparse
import logging

from KIPAC.quantRelax import Defaults
from KIPAC.quantRelax import Harness
from KIPAC.quantRelax.utilities import setup_logging

logger = logging.getLogger(__name__)

SCHEMES = ['binary', 'ternary']
OPTIMIZERS = ['psgd', 'binaryconnect', 'binaryrelax', 'float']


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)

    parser.add_argument("-c", "--config", default='desk_blobs',
                        help="Run configuration, file path or shipped config name")
    parser.add_argument("-o", "--output", default=os.path.join(Defaults.QUANTRELAX_OUT, 'desk_experiments'),
                        help="Output directory")
    parser.add_argument("--schemes", nargs='+', default=SCHEMES,
                        help="Quantization solvers")
    parser.add_argument("--optimizers", nargs='+', default=OPTIMIZERS,
                        help="Optimizers to compare")
    parser.add_argument("--num-seeds", type=int, default=10,
                        help="Seeds per optimizer")
    parser.add_argument("-j", "--jobs", type=int, default=1,
                        help="Number of concurrent runs")
    parser.add_argument("-v", "--verbose", action='store_true', default=False)

    args = parser.parse_args(argv)
    setup_logging(args.verbose)

    status = Defaults.EXIT_OK
    for solver in args.schemes:
        out_dir = os.path.join(args.output, solver)
        logger.info("Scheme %s -> %s", solver, out_dir)
        code = Harness.cmd_compare(args.config, args.optimizers, num_seeds=args.num_seeds,
                                   overrides=['quant.solver=%s' % solver], out=out_dir, jobs=args.jobs)
        status = max(status, code)
    return status


if __name__ == '__main__':
    sys.exit(main())
