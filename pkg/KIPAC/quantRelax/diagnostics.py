"""Numerical instruments for the convergence analysis of the training schemes"""

import logging
from dataclasses import dataclass

import numpy as np

from . import Defaults

from . import quant_utils

from .Quantizer import QuantScheme, LineSubspace, dist_to_Q, enumerate_lines

from .exceptions import ContractError, InvalidInputError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AlphaRecord:
    """alpha_k with alpha ||x_k1 - x_k||^2 + ||y_k - x_k||^2 = ||y_k - x_k1||^2

    alpha is nan when the step is too short to define it; same_line is
    `None` when either point is the origin.
    """
    k: int
    alpha: float
    same_line: object
    step_norm: float
    x_norm: float

    @property
    def defined(self):
        """False if ||x_k1 - x_k|| was below `Defaults.ALPHA_UNDEFINED_STEP`"""
        return not np.isnan(self.alpha)


def _vectors(*args):
    out = [quant_utils.as_vector(arg, name) for arg, name in zip(args, ('y_k', 'x_k', 'x_k1'))]
    if len(set(vec.size for vec in out)) != 1:
        raise InvalidInputError("vectors of unequal length: %s" % str([vec.size for vec in out]))
    return out


def _distance(quantizer, x):
    if isinstance(quantizer, QuantScheme):
        return dist_to_Q(x, quantizer)
    return quantizer.distance(x)


def same_line(x0, x1):
    """True if the nonzero points x0, x1 span the same line, `None` if either is 0"""
    if not np.any(x0) or not np.any(x1):
        return None
    return LineSubspace(x0) == LineSubspace(x1)


def alpha_k(y_k, x_k, x_k1, k=0, quantizer=None):
    """Approximate orthogonality coefficient of one exact-projection step

    Parameters
    ----------
    y_k, x_k, x_k1 : `array_like`
        Float iterate, its projection and the next projected iterate
    k : `int`
        Iteration counter, stored in the record
    quantizer : `QuantScheme`, `WeightQuantizer` or `None`
        If given, check that x_k is a projection of y_k

    Returns
    -------
    record : `AlphaRecord`

    Raises
    ------
    ContractError : if x_k is not a projection of y_k
    """
    y_k, x_k, x_k1 = _vectors(y_k, x_k, x_k1)
    if quantizer is not None:
        best = _distance(quantizer, y_k)
        if _distance(quantizer, x_k) > Defaults.PROJECTION_ATOL or \
           np.linalg.norm(y_k - x_k) > best + Defaults.PROJECTION_ATOL:
            raise ContractError("x_k is not a projection of y_k (residual %.6g, distance %.6g)" %
                                (np.linalg.norm(y_k - x_k), best))
    step = x_k1 - x_k
    step2 = float(np.dot(step, step))
    step_norm = np.sqrt(step2)
    if step_norm < Defaults.ALPHA_UNDEFINED_STEP:
        alpha = np.nan
    else:
        # ||y - x_k1||^2 - ||y - x_k||^2 = ||step||^2 - 2 <y - x_k, step>, without the cancellation
        alpha = 1. - 2. * float(np.dot(y_k - x_k, step)) / step2
    return AlphaRecord(k, alpha, same_line(x_k, x_k1), step_norm, float(np.linalg.norm(x_k)))


def theta_min(scheme, n):
    """Smallest angle between two distinct lines composing Q

    Parameters
    ----------
    scheme : `QuantScheme` or `tuple`
        Scheme or quantization levels
    n : `int`
        Dimension, at most 12 for binary and 8 for ternary levels

    Returns
    -------
    theta : `float`
        Angle in radians, pi / 2 if Q is a single line

    Raises
    ------
    OracleSizeError : if the lines cannot be enumerated
    """
    levels = scheme.levels if isinstance(scheme, QuantScheme) else scheme
    units = enumerate_lines(levels, n)
    nlines = units.shape[0]
    if nlines < 2:
        return 0.5 * np.pi
    max_cos = 0.
    for start in range(0, nlines, Defaults.THETA_BLOCK):
        block = units[start:start + Defaults.THETA_BLOCK]
        gram = np.abs(block @ units.T)
        # ignore self pairs
        rows = np.arange(block.shape[0])
        gram[rows, start + rows] = 0.
        max_cos = max(max_cos, float(gram.max()))
    return float(np.arccos(min(1., max_cos)))


def stationarity_proxy(x_k, x_k1, gamma_k):
    """||x_k1 - x_k||^2 / gamma_k^2"""
    if not gamma_k > 0:
        raise InvalidInputError("gamma_k must be positive, got %s" % str(gamma_k))
    step = np.asarray(x_k1, dtype=np.float64) - np.asarray(x_k, dtype=np.float64)
    return float(np.dot(step, step)) / gamma_k**2


def relaxed_value(oracle, x, lam, quantizer):
    """f(x) + (lambda / 2) dist(x, Q)^2"""
    return oracle.full_loss(x) + 0.5 * lam * _distance(quantizer, x)**2


def descent_check(x_star, oracle, lam, quantizer, betas=Defaults.DESCENT_BETAS):
    """Look for a descent direction of the relaxed objective at a point of Q

    Parameters
    ----------
    x_star : `array_like`
        A point of Q
    oracle : `GradientOracle`
    lam : `float`
        Relaxation parameter, >= 0
    quantizer : `QuantScheme` or `WeightQuantizer`
    betas : `tuple`
        Step lengths tried along -grad f(x_star)

    Returns
    -------
    found : `bool`
        True if some step strictly lowers f + (lambda / 2) dist^2
    beta : `float` or `None`
        The first witnessing step length

    Raises
    ------
    ContractError : if grad f(x_star) vanishes
    """
    x_star = quant_utils.as_vector(x_star, 'x_star')
    if lam < 0:
        raise InvalidInputError("lambda must be >= 0, got %s" % str(lam))
    grad = oracle.full_grad(x_star)
    if np.linalg.norm(grad) <= Defaults.GRADIENT_ZERO:
        raise ContractError("grad f(x*) = 0, x* may be a local minimizer")
    base = relaxed_value(oracle, x_star, lam, quantizer)
    for beta in betas:
        if relaxed_value(oracle, x_star - beta * grad, lam, quantizer) < base:
            return True, beta
    return False, None


def project_onto_line(v, x):
    """Orthogonal projection of v onto the line spanned by x, `None` if x = 0"""
    direction = quant_utils.unit_direction(x)
    if direction is None:
        return None
    return np.dot(v, direction) * direction


def upper_bound_check(y_k, x_k, x_k1, alpha, atol=Defaults.UPPER_BOUND_ATOL):
    """Check ||x_k1 - xt_k||^2 <= alpha ||x_k1 - x_k||^2, xt_k the projection
    of y_k onto the line of x_k1

    Returns
    -------
    ok : `bool`
    lhs, rhs : `float`
        The two sides of the inequality
    """
    y_k, x_k, x_k1 = _vectors(y_k, x_k, x_k1)
    x_tilde = project_onto_line(y_k, x_k1)
    if x_tilde is None:
        x_tilde = np.zeros_like(y_k)
    lhs = float(np.sum((x_k1 - x_tilde)**2))
    rhs = alpha * float(np.sum((x_k1 - x_k)**2))
    return lhs <= rhs + atol, lhs, rhs


def alternative_update_residual(y_k, x_k1, grad, gamma):
    """|| x_k1 - P(P(y_k) - gamma grad) ||, P the projection onto the line of x_k1

    Zero for an exact BinaryConnect step without momentum or weight decay;
    nan when x_k1 = 0.
    """
    if project_onto_line(y_k, x_k1) is None:
        return np.nan
    x_tilde = project_onto_line(y_k, x_k1)
    return float(np.linalg.norm(x_k1 - project_onto_line(x_tilde - gamma * np.asarray(grad), x_k1)))


def descent_lemma_gap(oracle, x, y, curvature):
    """f(y) + <grad f(y), x - y> + (L / 2) ||x - y||^2 - f(x), nonnegative for L-smooth f"""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    delta = x - y
    return (oracle.full_loss(y) + float(np.dot(oracle.full_grad(y), delta)) +
            0.5 * curvature * float(np.dot(delta, delta)) - oracle.full_loss(x))


def empirical_curvature(oracle, x, y):
    """Smallest L satisfying the descent lemma for the pair (x, y)"""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    delta = x - y
    norm2 = float(np.dot(delta, delta))
    if norm2 == 0.:
        return 0.
    gap = oracle.full_loss(x) - oracle.full_loss(y) - float(np.dot(oracle.full_grad(y), delta))
    return max(0., 2. * gap / norm2)


def gradient_variance(oracle, x, batch_size, rng, num_batches=Defaults.GRAD_VARIANCE_SAMPLES):
    """Sampled E ||grad f_B(x) - grad f(x)||^2 over random batches

    Zero when the batch is the whole dataset.
    """
    if batch_size >= oracle.num_samples:
        return 0.
    full = oracle.full_grad(x)
    total = 0.
    for _ in range(num_batches):
        batch = rng.choice(oracle.num_samples, size=batch_size, replace=False)
        delta = oracle.stochastic_grad(x, batch) - full
        total += float(np.dot(delta, delta))
    return total / num_batches


def gradient_line_angle(grad, x):
    """Angle between a gradient and the line of x, nan if either vanishes"""
    direction = quant_utils.unit_direction(x)
    norm = np.linalg.norm(grad)
    if direction is None or norm == 0.:
        return np.nan
    return float(np.arccos(min(1., abs(float(np.dot(grad, direction))) / norm)))


def summarize_alphas(alphas):
    """Count, undefined count, mean, min and max of a list of `AlphaRecord`"""
    values = np.array([rec.alpha for rec in alphas if rec.defined])
    out = dict(count=len(alphas), undefined=len(alphas) - values.size,
               small=int(np.sum(values < Defaults.SMALL_ALPHA)))
    if values.size:
        out.update(mean=float(values.mean()), min=float(values.min()), max=float(values.max()))
    else:
        out.update(mean=np.nan, min=np.nan, max=np.nan)
    return out


def small_step_violations(alphas, theta):
    """Records with ||dx|| < ||x_k|| sin(theta) that leave their line or have alpha != 1

    Returns
    -------
    violations : `list`
        The offending `AlphaRecord` objects
    """
    out = []
    bound = np.sin(theta)
    for rec in alphas:
        if not rec.defined or rec.step_norm >= rec.x_norm * bound:
            continue
        if rec.same_line is not True or abs(rec.alpha - 1.) > Defaults.ALPHA_ONE_ATOL:
            out.append(rec)
    return out


class TraceCollector:
    """Append-only record of training steps, for use as a `Trainer` callback

    Only steps whose resulting phase is in `phases` are kept.  Given an
    oracle, each step also records the empirical curvature of f between
    x_k and x_k1 and the descent lemma gap at that pair, using `curvature`
    as L or, if it is `None`, the running maximum of the recorded curvatures.
    """

    def __init__(self, phases=None, oracle=None, curvature=None):
        self.phases = phases
        self.oracle = oracle
        self.curvature = curvature
        self.max_curvature = 0.
        self.steps = []

    def __call__(self, info):
        if self.phases is not None and info.after.phase not in self.phases:
            return
        step = dict(k=info.before.k, epoch=info.epoch, gamma=info.gamma, lam=info.lam,
                    phase=info.after.phase, consistent=info.before.consistent,
                    y_k=info.before.y, x_k=info.before.x, y_k1=info.after.y,
                    x_k1=info.after.x, grad=info.after.grad, alpha=info.alpha)
        if self.oracle is not None:
            step['curvature'] = empirical_curvature(self.oracle, info.after.x, info.before.x)
            self.max_curvature = max(self.max_curvature, step['curvature'])
            lipschitz = self.max_curvature if self.curvature is None else self.curvature
            step['descent_gap'] = descent_lemma_gap(self.oracle, info.after.x, info.before.x, lipschitz)
        self.steps.append(step)

    def __len__(self):
        return len(self.steps)

    def column(self, key):
        """Array of one recorded quantity over the kept steps"""
        return np.array([step[key] for step in self.steps], dtype=np.float64)

    @property
    def alphas(self):
        """The `AlphaRecord` of every step that has one"""
        return [step['alpha'] for step in self.steps if step['alpha'] is not None]
