"""Fast acceptance properties, run by the verify command"""

import sys
import time
import logging
from unittest import mock

import numpy as np

from . import Defaults

from . import Relaxation

from . import diagnostics

from .Quantizer import (QuantScheme, binarize, ternarize_exact, ternarize_threshold, lloyd_quantize,
                        brute_force_quantize, project, dist_to_Q, enumerate_lines)

from .Dataset import gen_blobs

from .Objective import MlpLayout, make_quadratic, make_logistic, make_mlp

from .Optimizer import (LearningRateSchedule, OptimizerState, WeightQuantizer, Trainer,
                        binaryconnect_step, binaryrelax_step, float_step)

logger = logging.getLogger(__name__)


class PropertyFailure(AssertionError):
    """A verified property does not hold"""


class PropertyRegistry:
    """Named properties, each tagged with the module it checks"""

    def __init__(self):
        self._props = {}

    def register(self, name, module):
        """Decorator adding a property function"""
        def wrapper(func):
            self._props[name] = (module, func)
            return func
        return wrapper

    def keys(self):
        """Return the property names, in registration order"""
        return self._props.keys()

    def select(self, name_filter=None):
        """Properties whose name or module matches the filter"""
        return [(name, module, func) for name, (module, func) in self._props.items()
                if name_filter is None or name_filter in (name, module)]


PROPERTIES = PropertyRegistry()


def _check(condition, message):
    if not condition:
        raise PropertyFailure(message)


def _objective(point, y):
    return float(np.sum((point.materialized - y)**2))


@PROPERTIES.register('quantizer-oracle', 'quantizer')
def check_quantizer_oracle(num=1000, n=8, seed=1):
    """binarize and ternarize_exact reach the brute force objective"""
    rng = np.random.default_rng(seed)
    for _ in range(num):
        y = rng.standard_normal(n)
        for quantize, levels in ((binarize, (1.,)), (ternarize_exact, (0., 1.))):
            ours = _objective(quantize(y), y)
            best = _objective(brute_force_quantize(y, levels), y)
            _check(abs(ours - best) <= Defaults.ORACLE_RTOL * max(1., best),
                   "%s objective %.17g != brute force %.17g" % (quantize.__name__, ours, best))


@PROPERTIES.register('twn-gap', 'quantizer')
def check_twn_gap(num=1000, n=8, seed=2):
    """Thresholding never beats the exact ternarization, and sometimes loses"""
    rng = np.random.default_rng(seed)
    strict = 0
    for _ in range(num):
        y = rng.standard_normal(n)
        exact = ternarize_exact(y).residual(y)
        approx = ternarize_threshold(y).residual(y)
        _check(approx >= exact - 1e-12, "threshold residual %.17g < exact %.17g" % (approx, exact))
        strict += approx > exact + 1e-12
    _check(strict > 0, "no strict witness of the thresholding gap")


@PROPERTIES.register('lloyd-monotone', 'quantizer')
def check_lloyd_monotone(num=200, n=16, seed=3):
    """The Lloyd objective never increases"""
    rng = np.random.default_rng(seed)
    scheme = QuantScheme('lloyd', levels=(0., 1., 2., 3.), bit_width=3, max_iters=10)
    for _ in range(num):
        _, history = lloyd_quantize(rng.standard_normal(n), scheme, return_history=True)
        _check(np.all(np.diff(history) <= 1e-12), "Lloyd objective increased: %s" % str(history))


def segment_objective(y, proj, lam, directions, num=1000):
    """Relaxed objective on a grid of the segment [y, proj(y)], endpoints included

    Q is the union of the lines spanned by `directions`, so
    dist(z, Q)^2 = ||z||^2 - max_u <z, u>^2 for every grid point at once.
    """
    t = np.linspace(0., 1., num)[:, None]
    points = y + t * (proj - y)
    dist2 = np.sum(points * points, axis=1) - np.max((points @ directions.T)**2, axis=1)
    return 0.5 * np.sum((points - y)**2, axis=1) + 0.5 * lam * np.maximum(dist2, 0.)


@PROPERTIES.register('prox-optimality', 'relaxation')
def check_prox_optimality(num=200, n=6, seed=4):
    """relaxed_prox beats the segment [y, proj(y)] and has the right limits"""
    rng = np.random.default_rng(seed)
    schemes = (QuantScheme('binary'), QuantScheme('ternary'))
    directions = [enumerate_lines(scheme.levels, n) for scheme in schemes]
    for i in range(num):
        scheme = schemes[i % 2]
        lam = (0.1, 1., 10., 100.)[i % 4]
        y = rng.standard_normal(n)
        proj = project(y, scheme).materialized
        x = Relaxation.relaxed_prox(y, lam, scheme)
        value = Relaxation.relaxed_objective(x, y, lam, scheme)
        best = float(segment_objective(y, proj, lam, directions[i % 2]).min())
        _check(value <= best + 1e-9, "prox objective %.17g above the segment minimum %.17g" % (value, best))
        _check(np.allclose(Relaxation.relaxed_prox(y, 1e-12, scheme), y, rtol=0., atol=1e-9),
               "lambda -> 0 limit is not y")
        far = Relaxation.relaxed_prox(y, 1e9, scheme)
        _check(np.linalg.norm(far - proj) <= 1e-6 * np.linalg.norm(proj),
               "lambda -> inf limit is not proj(y)")


@PROPERTIES.register('relaxed-consistency', 'relaxation')
def check_relaxed_consistency(center=(1., 0.2), lams=(1., 10., 1e2, 1e3, 1e4)):
    """Relaxed global minimizers approach Q and the constrained optimum"""
    scheme = QuantScheme('ternary')
    directions = enumerate_lines(scheme.levels, len(center))
    f_star, _ = Relaxation.constrained_quadratic_minimum(center, directions)
    dists = []
    for lam in lams:
        x_lam = Relaxation.quadratic_relaxed_minimizer(center, lam, directions)
        dists.append(dist_to_Q(x_lam, scheme))
    _check(np.all(np.diff(dists) < 0), "dist(x*_lambda, Q) not strictly decreasing: %s" % str(dists))
    f_last = float(np.sum((x_lam - np.asarray(center))**2))
    _check(abs(f_last - f_star) <= abs(f_star) * 1e-3, "f(x*_lambda) = %.17g, f*_Q = %.17g" % (f_last, f_star))


@PROPERTIES.register('descent-witness', 'relaxation')
def check_descent_witness(num=20, n=4, lam=10., seed=5):
    """Quantized points with a nonzero gradient are not relaxed local minima"""
    rng = np.random.default_rng(seed)
    scheme = QuantScheme('ternary')
    oracle = make_quadratic(rng.standard_normal(n))
    found = 0
    while found < num:
        x_star = project(rng.standard_normal(n), scheme).materialized
        if np.linalg.norm(oracle.full_grad(x_star)) <= Defaults.GRADIENT_ZERO:
            continue
        ok, _ = diagnostics.descent_check(x_star, oracle, lam, scheme)
        _check(ok, "no descent step found at %s" % str(x_star))
        found += 1


@PROPERTIES.register('lambda-continuation', 'relaxation')
def check_lambda_continuation():
    """lambda0 = 1, rho = 1.02 per epoch reaches the (100, 200) window after 240 epochs"""
    schedule = Relaxation.RelaxationSchedule(1., 1.02, 1., 240)
    state = schedule.initial_state()
    for _ in range(240):
        state = Relaxation.advance_lambda(schedule, state, 1.)
    low, high = Defaults.LAMBDA_WINDOW
    _check(low < state.lam < high, "lambda = %.6g after 240 epochs" % state.lam)
    _check(abs(state.lam - 1.02**240) <= 1e-9 * state.lam, "lambda = %.17g != 1.02^240" % state.lam)


def _finite_difference(oracle, x, step=1e-6):
    grad = np.zeros_like(x)
    for i in range(x.size):
        dx = np.zeros_like(x)
        dx[i] = step
        grad[i] = (oracle.full_loss(x + dx) - oracle.full_loss(x - dx)) / (2. * step)
    return grad


def gradient_error(oracle, x):
    """Relative error between the oracle gradient and central differences"""
    grad = oracle.full_grad(x)
    fd = _finite_difference(oracle, x)
    return float(np.linalg.norm(grad - fd) / max(np.linalg.norm(fd), 1e-12))


@PROPERTIES.register('gradient-integrity', 'objectives')
def check_gradient_integrity(num=20, seed=6):
    """MLP and logistic gradients agree with central finite differences"""
    rng = np.random.default_rng(seed)
    train, _ = gen_blobs(36, 3, 3, 0.5, seed)
    mlp = make_mlp(train, MlpLayout(3, 5, 3), seed)
    train2, _ = gen_blobs(36, 3, 2, 0.5, seed)
    logistic = make_logistic(train2)
    for _ in range(num):
        err = gradient_error(mlp, rng.standard_normal(mlp.dim))
        _check(err < 1e-4, "MLP gradient relative error %.3g" % err)
        err = gradient_error(logistic, rng.standard_normal(logistic.dim))
        _check(err < 1e-5, "logistic gradient relative error %.3g" % err)


def _initial_state(y, quantizer, schedule=None):
    if schedule is None:
        return OptimizerState(y, quantizer.project(y), np.zeros_like(y), consistent=True)
    lambda_state = schedule.initial_state()
    return OptimizerState(y, quantizer.relaxed(y, lambda_state.lam), np.zeros_like(y),
                          lambda_state=lambda_state, phase='relaxed')


@PROPERTIES.register('reduction-identities', 'optimizers')
def check_reduction_identities(num_steps=1000, n=4, seed=7):
    """BinaryRelax reduces to BinaryConnect (T = 0) and to SGD (lambda -> 0)"""
    rng = np.random.default_rng(seed)
    oracle = make_quadratic(rng.standard_normal(n), rng.uniform(0.5, 2., n))
    quantizer = WeightQuantizer(QuantScheme('ternary'), oracle.quant_groups)
    y0 = rng.standard_normal(n)
    batches = [rng.choice(n, size=2, replace=False) for _ in range(num_steps)]
    gamma = 0.01

    exact = Relaxation.RelaxationSchedule(1., 1.02, 1., 0)
    bc_state = _initial_state(y0, quantizer)
    br_state = _initial_state(y0, quantizer)
    for batch in batches:
        bc_state = binaryconnect_step(bc_state, oracle, batch, gamma, quantizer, 0.9, 1e-4)
        br_state = binaryrelax_step(br_state, oracle, batch, gamma, quantizer, exact, 0.5, 0.9, 1e-4)
        _check(np.array_equal(bc_state.x, br_state.x) and np.array_equal(bc_state.y, br_state.y),
               "BinaryRelax with T = 0 left BinaryConnect at k = %i" % bc_state.k)

    vanishing = Relaxation.RelaxationSchedule(1e-12, 1., 1., num_steps + 1)
    br_state = _initial_state(y0, quantizer, vanishing)
    sgd_state = OptimizerState(y0, y0.copy(), np.zeros_like(y0), phase='float')
    for batch in batches:
        br_state = binaryrelax_step(br_state, oracle, batch, gamma, quantizer, vanishing, 0.5)
        sgd_state = float_step(sgd_state, oracle, batch, gamma)
        _check(np.allclose(br_state.y, sgd_state.y, rtol=0., atol=1e-9),
               "vanishing lambda trajectory left SGD at k = %i" % br_state.k)


@PROPERTIES.register('successor-decay', 'optimizers')
def check_successor_decay(num_steps=10000):
    """||x_k1 - x_k||^2 dies out under square summable, non summable steps"""
    oracle = make_quadratic([1., 0.2], [20., 1.])
    quantizer = WeightQuantizer(QuantScheme('ternary'), oracle.quant_groups)
    state = _initial_state(np.array([0.5, 0.1]), quantizer)
    schedule = LearningRateSchedule(0.05, (), 0.1, 'inverse')
    batch = np.arange(oracle.num_samples)
    steps = np.zeros(num_steps)
    proxy_min = np.inf
    for i in range(num_steps):
        gamma = schedule.gamma0 / (state.k + 1.)
        new_state = binaryconnect_step(state, oracle, batch, gamma, quantizer)
        steps[i] = np.sum((new_state.x - state.x)**2)
        proxy_min = min(proxy_min, diagnostics.stationarity_proxy(state.x, new_state.x, gamma))
        state = new_state
    tail = steps[-num_steps // 10:].mean()
    _check(tail < 1e-6, "mean squared successor difference %.3g over the last 10%%" % tail)
    _check(proxy_min < 1e-4, "stationarity proxy running minimum %.3g" % proxy_min)


def alpha_trace(n=4, epochs=2500, seed=8):
    """Exact-phase `AlphaRecord` trace of a BinaryRelax run on a quadratic"""
    rng = np.random.default_rng(seed)
    oracle = make_quadratic(rng.standard_normal(n), rng.uniform(0.5, 2., n))
    quantizer = WeightQuantizer(QuantScheme('ternary'), oracle.quant_groups)
    trainer = Trainer('binaryrelax', oracle, quantizer, LearningRateSchedule(0.01, (), 0.1),
                      Relaxation.RelaxationSchedule(1., 1.5, 1., 5), num_epochs=epochs,
                      batch_size=2, seed=seed)
    trainer.run()
    return trainer.alphas


@PROPERTIES.register('alpha-identities', 'diagnostics')
def check_alpha_identities():
    """alpha_k >= 0 in phase II, and alpha_k = 1 for short steps along a line"""
    alphas = alpha_trace()
    _check(len(alphas) > 0, "empty alpha trace")
    values = np.array([rec.alpha for rec in alphas if rec.defined])
    _check(np.all(values >= -Defaults.ALPHA_NONNEG_ATOL), "negative alpha_k: %.3g" % values.min())
    theta = diagnostics.theta_min(QuantScheme('ternary'), 4)
    bad = diagnostics.small_step_violations(alphas, theta)
    _check(not bad, "%i short steps with alpha_k != 1, first %s" % (len(bad), str(bad[:1])))


def mlp_trace(epochs=6, seed=9):
    """Exact-phase `TraceCollector` of a ternary BinaryRelax run on an MLP

    The collector carries the oracle, so each step also holds its
    empirical curvature and descent lemma gap.
    """
    train, val = gen_blobs(120, 2, 3, 0.3, seed)
    oracle = make_mlp(train, MlpLayout(2, 8, 3), seed)
    quantizer = WeightQuantizer(QuantScheme('ternary'), oracle.quant_groups)
    collector = diagnostics.TraceCollector(phases=('exact',), oracle=oracle)
    trainer = Trainer('binaryrelax', oracle, quantizer, LearningRateSchedule(0.05, (), 0.1),
                      Relaxation.RelaxationSchedule(1., 2., 1., epochs // 2), num_epochs=epochs,
                      batch_size=10, momentum=0.9, weight_decay=1e-4, seed=seed, val=val,
                      callback=collector)
    trainer.run()
    return collector


@PROPERTIES.register('phase-ii-bounds', 'diagnostics')
def check_phase_ii_bounds():
    """Every exact MLP step obeys the alpha_k upper bound and the descent lemma"""
    collector = mlp_trace()
    _check(len(collector) > 0, "empty exact-phase trace")
    checked = 0
    for step in collector.steps:
        alpha = step['alpha']
        if alpha is None or not alpha.defined:
            continue
        ok, lhs, rhs = diagnostics.upper_bound_check(step['y_k'], step['x_k'], step['x_k1'], alpha.alpha)
        _check(ok, "upper bound fails at k = %i: %.17g > %.17g" % (step['k'], lhs, rhs))
        checked += 1
    _check(checked > 0, "no step with a defined alpha_k")
    curvatures = collector.column('curvature')
    _check(np.all(np.isfinite(curvatures)) and np.all(curvatures >= 0.),
           "empirical curvature not finite and nonnegative")
    gaps = collector.column('descent_gap')
    _check(np.all(gaps >= -1e-9), "descent lemma gap %.3g below zero" % gaps.min())


@PROPERTIES.register('theta-min', 'diagnostics')
def check_theta_min():
    """Smallest angles between the lines of small quantization sets"""
    ternary = diagnostics.theta_min(QuantScheme('ternary'), 2)
    binary = diagnostics.theta_min(QuantScheme('binary'), 3)
    _check(abs(ternary - np.pi / 4) <= 1e-12, "ternary n=2 theta_min = %.17g" % ternary)
    _check(abs(binary - np.arccos(1. / 3.)) <= 1e-12, "binary n=3 theta_min = %.17g" % binary)


def _perturbed_prox(original):
    def prox(y, lam, scheme):
        x = original(y, lam, scheme)
        return x + 0.05 * (np.asarray(y, dtype=np.float64) - x)
    return prox


FAULTS = {'prox': (Relaxation, 'relaxed_prox', _perturbed_prox)}


def run_properties(name_filter=None, inject_fault=None, stream=None):
    """Run the selected properties and print one line per property

    Parameters
    ----------
    name_filter : `str` or `None`
        Property name or module name
    inject_fault : `str` or `None`
        Key of `FAULTS`, a deliberate bug used to test the harness

    Returns
    -------
    code : `int`
        0 if every property holds, `Defaults.EXIT_PROPERTY` otherwise
    """
    stream = sys.stdout if stream is None else stream
    selected = PROPERTIES.select(name_filter)
    if not selected:
        print("no property matches %s, options are %s" % (name_filter, ', '.join(PROPERTIES.keys())),
              file=stream)
        return Defaults.EXIT_VALIDATION
    patcher = None
    if inject_fault is not None:
        target, attr, factory = FAULTS[inject_fault]
        patcher = mock.patch.object(target, attr, factory(getattr(target, attr)))
        patcher.start()
    failures = []
    try:
        for name, module, func in selected:
            t_start = time.time()
            try:
                func()
                status = 'PASS'
            except PropertyFailure as err:
                status = 'FAIL: %s' % err
                failures.append(name)
            print("%-22s %-12s %6.2fs %s" % (name, module, time.time() - t_start, status), file=stream)
    finally:
        if patcher is not None:
            patcher.stop()
    if failures:
        print("FAILED: %s" % ', '.join(failures), file=stream)
        return Defaults.EXIT_PROPERTY
    print("all %i properties passed" % len(selected), file=stream)
    return Defaults.EXIT_OK
