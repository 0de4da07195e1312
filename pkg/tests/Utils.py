import numpy as np

from KIPAC.quantRelax.Dataset import gen_blobs

from KIPAC.quantRelax.Objective import make_quadratic

from KIPAC.quantRelax.Quantizer import QuantScheme

from KIPAC.quantRelax.Optimizer import WeightQuantizer

# Shorter versions of the acceptance runs, the full ones are in verify.py
FAST_TESTS = True


def objective(point, y):
    """||s Q - y||^2"""
    return float(np.sum((point.materialized - np.asarray(y))**2))


def quadratic_problem(n=4, seed=0, solver='ternary'):
    """Random quadratic oracle with its quantizer"""
    rng = np.random.default_rng(seed)
    oracle = make_quadratic(rng.standard_normal(n), rng.uniform(0.5, 2., n))
    return oracle, WeightQuantizer(QuantScheme(solver), oracle.quant_groups)


def small_blobs(n_samples=60, dim=2, num_classes=3, seed=0):
    """Small train / validation split for fast tests"""
    return gen_blobs(n_samples, dim, num_classes, 0.3, seed)


def write_text(path, text):
    with open(str(path), 'wt') as fout:
        fout.write(text)
    return str(path)
