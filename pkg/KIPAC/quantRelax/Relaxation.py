"""Moreau envelope relaxation of the quantization constraint

The indicator of Q is replaced by (lambda / 2) dist(x, Q)^2.  Its proximal
mapping is a linear interpolation between a point and its projection, and
lambda is grown geometrically (continuation) to push iterates onto Q.
"""

import logging
from dataclasses import dataclass, asdict

import numpy as np

from . import Defaults

from . import quant_utils

from .Quantizer import project, dist_to_Q

from .exceptions import ConfigurationError, InvalidInputError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RelaxationSchedule:
    """Continuation schedule for lambda

    Parameters
    ----------
    lambda0 : `float`
        Initial relaxation parameter
    rho : `float`
        Growth factor applied once per cadence tick
    cadence : `float`
        Epochs between growth ticks, fractions allowed
    phase2_epoch : `int`
        Last epoch T of phase I; epochs i > T use exact projection
    """
    lambda0: float = Defaults.LAMBDA0
    rho: float = Defaults.RHO
    cadence: float = Defaults.LAMBDA_CADENCE
    phase2_epoch: int = Defaults.PHASE2_EPOCH

    def __post_init__(self):
        errors = []
        if not self.lambda0 > 0:
            errors.append("lambda0 must be positive, got %s" % str(self.lambda0))
        if not self.rho >= 1:
            errors.append("rho must be >= 1, got %s" % str(self.rho))
        if not self.cadence > 0:
            errors.append("cadence must be positive, got %s" % str(self.cadence))
        if int(self.phase2_epoch) != self.phase2_epoch or self.phase2_epoch < 0:
            errors.append("phase2_epoch must be a nonnegative integer, got %s" % str(self.phase2_epoch))
        if errors:
            raise ConfigurationError(errors)
        if self.rho == 1:
            logger.warning("rho = 1: lambda stays at %g, there is no continuation", self.lambda0)

    def lambda_after(self, epochs):
        """Value of lambda after a number of elapsed epochs"""
        return self.lambda0 * self.rho**ticks_elapsed(self, epochs)

    def initial_state(self):
        """The `LambdaState` at the start of training"""
        return LambdaState(self.lambda0, 0., 0)

    def to_dict(self):
        """Serialize to a dictionary"""
        return asdict(self)


@dataclass(frozen=True)
class LambdaState:
    """Current lambda and the elapsed-epoch accounting behind it"""
    lam: float
    epochs_elapsed: float
    ticks: int


def ticks_elapsed(schedule, epochs):
    """Number of completed cadence ticks after some elapsed epochs"""
    return int(np.floor(epochs / schedule.cadence + Defaults.TICK_EPS))


def advance_lambda(schedule, state, epochs_delta):
    """Advance the lambda accounting by some (possibly fractional) epochs

    lambda is recomputed as lambda0 * rho^ticks rather than multiplied in
    place, so a run resumed from (lambda0, rho, ticks) reproduces exactly.

    Parameters
    ----------
    schedule : `RelaxationSchedule`
    state : `LambdaState`
    epochs_delta : `float`
        Epochs elapsed since `state`, >= 0

    Returns
    -------
    state : `LambdaState`
        The new state, `state` itself if no time elapsed
    """
    if epochs_delta < 0:
        raise InvalidInputError("epochs_delta must be >= 0, got %s" % str(epochs_delta))
    if epochs_delta == 0:
        return state
    elapsed = state.epochs_elapsed + epochs_delta
    ticks = ticks_elapsed(schedule, elapsed)
    if ticks == state.ticks:
        return LambdaState(state.lam, elapsed, ticks)
    return LambdaState(schedule.lambda0 * schedule.rho**ticks, elapsed, ticks)


def _check_lambda(lam):
    if not lam > 0:
        raise InvalidInputError("lambda must be positive, got %s" % str(lam))


def relaxed_prox(y, lam, scheme):
    """Proximal mapping of (lambda / 2) dist(., Q)^2

    Returns (lambda proj_Q(y) + y) / (lambda + 1), the minimizer of
    1/2 ||x - y||^2 + (lambda / 2) dist(x, Q)^2.
    """
    _check_lambda(lam)
    y = quant_utils.as_vector(y)
    return (lam * project(y, scheme).materialized + y) / (lam + 1.)


def envelope_value(x, lam, scheme):
    """Moreau envelope of the indicator of Q, (lambda / 2) dist(x, Q)^2"""
    _check_lambda(lam)
    return 0.5 * lam * dist_to_Q(x, scheme)**2


def relaxed_objective(x, y, lam, scheme):
    """1/2 ||x - y||^2 + (lambda / 2) dist(x, Q)^2, the objective minimized by `relaxed_prox`"""
    x = quant_utils.as_vector(x, 'x')
    y = quant_utils.as_vector(y)
    return 0.5 * float(np.dot(x - y, x - y)) + 0.5 * lam * dist_to_Q(x, scheme)**2


def constrained_quadratic_minimum(center, directions, curvature=1.):
    """Minimum of a ||x - c||^2 over the union of lines

    Parameters
    ----------
    center : `array_like`
        c
    directions : `np.ndarray`
        (p, n) unit directions of the lines, see `Quantizer.enumerate_lines`
    curvature : `float`
        a

    Returns
    -------
    f_min : `float`
        The constrained minimum value
    x_min : `np.ndarray`
        A minimizer, the projection of c on the best line
    """
    center = np.asarray(center, dtype=np.float64)
    coefs = directions @ center
    residual2 = np.dot(center, center) - coefs**2
    best = int(np.argmin(residual2))
    return curvature * float(residual2[best]), coefs[best] * directions[best]


def quadratic_relaxed_minimizer(center, lam, directions, curvature=1.):
    """Global minimizer of a ||x - c||^2 + (lambda / 2) dist(x, Q)^2

    Since dist^2 is a minimum over lines, the problem splits per line:
    along the line x = P c, across it x = a (I - P) c / (a + lambda / 2).
    The best line is the one closest to c.

    Returns
    -------
    x_star : `np.ndarray`
        The relaxed global minimizer
    """
    center = np.asarray(center, dtype=np.float64)
    coefs = directions @ center
    residual2 = np.dot(center, center) - coefs**2
    best = int(np.argmin(residual2))
    along = coefs[best] * directions[best]
    return along + curvature * (center - along) / (curvature + 0.5 * lam)
