"""Training schemes: PSGD, BinaryConnect, BinaryRelax and a float baseline

Every scheme keeps a float trajectory y and the weights x at which the
gradients are evaluated.  The step functions are pure, they return a new
`OptimizerState`.
"""

import time
import logging
from dataclasses import dataclass, replace, asdict

import numpy as np

from . import Defaults

from . import Relaxation

from . import diagnostics

from .Quantizer import project, dist_to_Q

from .utilities import derive_seed

from .exceptions import ConfigurationError, InvalidInputError, TrainingAborted

logger = logging.getLogger(__name__)

OPTIMIZERS = ('psgd', 'binaryconnect', 'binaryrelax', 'float')
LR_KINDS = ('step', 'inverse')

PHASE_RELAXED = 'relaxed'
PHASE_EXACT = 'exact'
PHASE_FLOAT = 'float'


@dataclass(frozen=True)
class LearningRateSchedule:
    """Learning rate gamma_k

    kind 'step' is piecewise constant in the epoch, gamma0 * factor^(passed decays);
    kind 'inverse' is gamma0 / (k + 1) in the iteration counter k
    """
    gamma0: float = Defaults.GAMMA0
    decay_epochs: tuple = Defaults.DECAY_EPOCHS
    decay_factor: float = Defaults.DECAY_FACTOR
    kind: str = 'step'

    def __post_init__(self):
        object.__setattr__(self, 'decay_epochs', tuple(int(e) for e in self.decay_epochs))
        errors = []
        if not self.gamma0 > 0:
            errors.append("gamma0 must be positive, got %s" % str(self.gamma0))
        if list(self.decay_epochs) != sorted(self.decay_epochs) or any(e < 0 for e in self.decay_epochs):
            errors.append("decay_epochs must be sorted and nonnegative, got %s" % str(self.decay_epochs))
        if not 0 < self.decay_factor < 1:
            errors.append("decay_factor must lie in (0, 1), got %s" % str(self.decay_factor))
        if self.kind not in LR_KINDS:
            errors.append("unknown learning rate kind %s, options are %s" % (self.kind, str(LR_KINDS)))
        if errors:
            raise ConfigurationError(errors)

    def to_dict(self):
        """Serialize to a dictionary"""
        out = asdict(self)
        out['decay_epochs'] = list(self.decay_epochs)
        return out


def lr_at(schedule, epoch):
    """Step learning rate after a number of completed epochs"""
    if epoch < 0:
        raise InvalidInputError("epoch must be >= 0, got %s" % str(epoch))
    passed = np.searchsorted(schedule.decay_epochs, epoch, side='right')
    return schedule.gamma0 * schedule.decay_factor**int(passed)


def gamma_at(schedule, epoch, k):
    """Learning rate of iteration k, taken during a given (0-based) epoch"""
    if schedule.kind == 'inverse':
        return schedule.gamma0 / (k + 1.)
    return lr_at(schedule, epoch)


@dataclass
class OptimizerState:
    """Iterates of a training run

    consistent is True when x = proj_Q(y) holds, which is the condition
    under which successive steps give a meaningful alpha_k.
    """
    y: np.ndarray
    x: np.ndarray
    velocity: np.ndarray
    k: int = 0
    lambda_state: Relaxation.LambdaState = None
    phase: str = PHASE_EXACT
    rng: np.random.Generator = None
    consistent: bool = False
    grad: np.ndarray = None


@dataclass
class MetricsRecord:
    """Per-epoch (or per-iteration) training diagnostics"""
    epoch: int
    iteration: int
    phase: str
    lam: float
    gamma: float
    train_loss: float
    val_loss: float = np.nan
    val_acc: float = np.nan
    dist_to_q: float = np.nan
    alpha_mean: float = np.nan
    alpha_min: float = np.nan
    alpha_undef_count: int = 0
    stationarity_proxy: float = np.nan
    grad_variance: float = np.nan

    def csv_row(self):
        """Values in the order of `Defaults.METRICS_COLUMNS`"""
        return (self.epoch, self.iteration, self.phase, self.lam, self.gamma, self.train_loss,
                self.val_loss, self.val_acc, self.dist_to_q, self.alpha_mean, self.alpha_min,
                self.alpha_undef_count, self.stationarity_proxy)

    def to_dict(self):
        """Serialize to a dictionary"""
        return asdict(self)


@dataclass
class StepInfo:
    """What a step callback sees: the state before and after one iteration"""
    epoch: int
    gamma: float
    lam: float
    before: OptimizerState
    after: OptimizerState
    batch: np.ndarray
    alpha: diagnostics.AlphaRecord = None


class WeightQuantizer:
    """Applies a `QuantScheme` to each quantized parameter group

    The other parameters (biases) stay full precision: the projection is
    the identity on them.
    """

    def __init__(self, scheme, quant_groups):
        """C'tor

        Parameters
        ----------
        scheme : `QuantScheme`
            Scheme applied to each group independently
        quant_groups : `list`
            (start, stop) ranges of the quantized parameters
        """
        self.scheme = scheme
        self.quant_groups = [tuple(group) for group in quant_groups]

    @property
    def is_exact(self):
        """True if the projection is a global minimizer"""
        return self.scheme.is_exact

    def points(self, y):
        """`QuantizedPoint` of each quantized group"""
        return [project(y[start:stop], self.scheme) for start, stop in self.quant_groups]

    def project(self, y):
        """Project the quantized groups of y, leave the rest untouched"""
        out = np.array(y, dtype=np.float64)
        for start, stop in self.quant_groups:
            out[start:stop] = project(out[start:stop], self.scheme).materialized
        return out

    def relaxed(self, y, lam):
        """Relaxed proximal step on each quantized group"""
        out = np.array(y, dtype=np.float64)
        for start, stop in self.quant_groups:
            out[start:stop] = Relaxation.relaxed_prox(out[start:stop], lam, self.scheme)
        return out

    def distance(self, x):
        """dist(x, Q) over the quantized groups"""
        total = 0.
        for start, stop in self.quant_groups:
            total += dist_to_Q(x[start:stop], self.scheme)**2
        return float(np.sqrt(total))


def _check_gamma(gamma):
    if not gamma > 0:
        raise InvalidInputError("gamma must be positive, got %s" % str(gamma))


def _gradient(state, oracle, batch):
    grad = oracle.stochastic_grad(state.x, batch)
    if not np.all(np.isfinite(grad)):
        raise TrainingAborted("non-finite gradient", state.k + 1)
    return grad


def _heavy_ball(base, velocity, grad, gamma, momentum, weight_decay):
    """v <- mu v - gamma (g + wd base); return (base + v, v)"""
    if weight_decay:
        grad = grad + weight_decay * base
    if momentum:
        velocity = momentum * velocity - gamma * grad
        return base + velocity, velocity
    return base - gamma * grad, velocity


def psgd_step(state, oracle, batch, gamma, quantizer, momentum=0., weight_decay=0.):
    """Projected SGD: y <- x - gamma grad f_k(x), x <- proj_Q(y)

    Parameters
    ----------
    state : `OptimizerState`
    oracle : `GradientOracle`
    batch : `np.ndarray`
        Sample indices of this iteration
    gamma : `float`
        Learning rate
    quantizer : `WeightQuantizer`
    momentum, weight_decay : `float`
        Heavy-ball coefficient and l2 decay, applied to the y update

    Returns
    -------
    state : `OptimizerState`
    """
    _check_gamma(gamma)
    grad = _gradient(state, oracle, batch)
    y, velocity = _heavy_ball(state.x, state.velocity, grad, gamma, momentum, weight_decay)
    return replace(state, y=y, x=quantizer.project(y), velocity=velocity, k=state.k + 1,
                   phase=PHASE_EXACT, consistent=True, grad=grad)


def binaryconnect_step(state, oracle, batch, gamma, quantizer, momentum=0., weight_decay=0.):
    """BinaryConnect: y <- y - gamma grad f_k(x), x <- proj_Q(y)

    See `psgd_step` for the parameters.
    """
    _check_gamma(gamma)
    grad = _gradient(state, oracle, batch)
    y, velocity = _heavy_ball(state.y, state.velocity, grad, gamma, momentum, weight_decay)
    return replace(state, y=y, x=quantizer.project(y), velocity=velocity, k=state.k + 1,
                   phase=PHASE_EXACT, consistent=True, grad=grad)


def binaryrelax_step(state, oracle, batch, gamma, quantizer, schedule, epochs_delta=0.,
                     momentum=0., weight_decay=0.):
    """BinaryRelax: the BinaryConnect y update followed by

    phase relaxed: x <- (lambda proj_Q(y) + y) / (lambda + 1), then lambda advances
    phase exact:   x <- proj_Q(y)

    Parameters
    ----------
    schedule : `RelaxationSchedule`
        Continuation schedule for lambda
    epochs_delta : `float`
        Epochs elapsed by this iteration, used to advance lambda

    See `psgd_step` for the other parameters.
    """
    _check_gamma(gamma)
    grad = _gradient(state, oracle, batch)
    y, velocity = _heavy_ball(state.y, state.velocity, grad, gamma, momentum, weight_decay)
    if state.phase == PHASE_RELAXED:
        x = quantizer.relaxed(y, state.lambda_state.lam)
        lambda_state = Relaxation.advance_lambda(schedule, state.lambda_state, epochs_delta)
        return replace(state, y=y, x=x, velocity=velocity, k=state.k + 1,
                       lambda_state=lambda_state, consistent=False, grad=grad)
    return replace(state, y=y, x=quantizer.project(y), velocity=velocity, k=state.k + 1,
                   consistent=True, grad=grad)


def float_step(state, oracle, batch, gamma, momentum=0., weight_decay=0.):
    """Plain momentum SGD, x = y"""
    _check_gamma(gamma)
    grad = _gradient(state, oracle, batch)
    y, velocity = _heavy_ball(state.y, state.velocity, grad, gamma, momentum, weight_decay)
    return replace(state, y=y, x=y, velocity=velocity, k=state.k + 1,
                   phase=PHASE_FLOAT, consistent=False, grad=grad)


class Trainer:
    """Runs the epoch loop of one training run and collects its metrics"""

    def __init__(self, optimizer, oracle, quantizer, lr_schedule, relax_schedule=None,
                 num_epochs=Defaults.NUM_EPOCHS, batch_size=Defaults.BATCH_SIZE,
                 momentum=0., weight_decay=0., seed=Defaults.MASTER_SEED, val=None,
                 initial_weights=None, record_iterations=False, callback=None):
        """C'tor

        Parameters
        ----------
        optimizer : `str`
            One of 'psgd', 'binaryconnect', 'binaryrelax', 'float'
        oracle : `GradientOracle`
        quantizer : `WeightQuantizer` or `None`
            Required unless optimizer is 'float'
        lr_schedule : `LearningRateSchedule`
        relax_schedule : `RelaxationSchedule` or `None`
            Required for 'binaryrelax'
        num_epochs, batch_size : `int`
        momentum, weight_decay : `float`
        seed : `int`
            Seed of the shuffling generator and of the initial weights
        val : `Dataset` or `None`
            Validation data
        initial_weights : `np.ndarray` or `None`
            Warm start y^0, defaults to `oracle.initial_point(seed)`
        record_iterations : `bool`
            Also keep one `MetricsRecord` per iteration
        callback : `callable` or `None`
            Called with a `StepInfo` after every iteration
        """
        errors = []
        if optimizer not in OPTIMIZERS:
            errors.append("unknown optimizer %s, options are %s" % (optimizer, str(OPTIMIZERS)))
        if optimizer != 'float' and quantizer is None:
            errors.append("optimizer %s needs a quantization scheme" % optimizer)
        if optimizer == 'binaryrelax' and relax_schedule is None:
            errors.append("binaryrelax needs a relaxation schedule")
        if int(num_epochs) != num_epochs or num_epochs < 1:
            errors.append("num_epochs must be an integer >= 1, got %s" % str(num_epochs))
        if int(batch_size) != batch_size or not 1 <= batch_size <= oracle.num_samples:
            errors.append("batch_size must be an integer in [1, %i], got %s" % (oracle.num_samples, str(batch_size)))
        if not 0 <= momentum < 1:
            errors.append("momentum must lie in [0, 1), got %s" % str(momentum))
        if weight_decay < 0:
            errors.append("weight_decay must be >= 0, got %s" % str(weight_decay))
        if initial_weights is not None and np.size(initial_weights) != oracle.dim:
            errors.append("initial weights have length %i, the oracle expects %i" %
                          (np.size(initial_weights), oracle.dim))
        if errors:
            raise ConfigurationError(errors)
        self.optimizer = optimizer
        self.oracle = oracle
        self.quantizer = quantizer
        self.lr_schedule = lr_schedule
        self.relax_schedule = relax_schedule
        self.num_epochs = int(num_epochs)
        self.batch_size = int(batch_size)
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.seed = seed
        self.val = val
        self.initial_weights = initial_weights
        self.record_iterations = record_iterations
        self.callback = callback
        self.records = []
        self.iteration_records = []
        self.alphas = []
        self.lambda_at_switch = None
        self.min_proxy = np.inf
        self.wall_time = 0.
        self.state = None

    @property
    def num_batches(self):
        """Batches per epoch, the last one possibly short"""
        return -(-self.oracle.num_samples // self.batch_size)

    @property
    def phase2_epoch(self):
        """Last relaxed epoch T, 0 unless the optimizer is binaryrelax"""
        if self.optimizer != 'binaryrelax':
            return 0
        return self.relax_schedule.phase2_epoch

    def initial_state(self):
        """Build the state at k = 0"""
        if self.initial_weights is not None:
            y = np.array(self.initial_weights, dtype=np.float64).reshape(-1)
        else:
            y = self.oracle.initial_point(self.seed)
        rng = np.random.default_rng(self.seed)
        velocity = np.zeros_like(y)
        if self.optimizer == 'float':
            return OptimizerState(y, y.copy(), velocity, phase=PHASE_FLOAT, rng=rng)
        if self.optimizer == 'binaryrelax' and self.phase2_epoch >= 1:
            lambda_state = self.relax_schedule.initial_state()
            return OptimizerState(y, self.quantizer.relaxed(y, lambda_state.lam), velocity,
                                  lambda_state=lambda_state, phase=PHASE_RELAXED, rng=rng)
        return OptimizerState(y, self.quantizer.project(y), velocity, phase=PHASE_EXACT,
                              rng=rng, consistent=True)

    def _lam(self, state):
        if state.phase == PHASE_FLOAT:
            return 0.
        if state.phase == PHASE_EXACT:
            return np.inf
        return state.lambda_state.lam

    def _step(self, state, batch, gamma):
        if self.optimizer == 'psgd':
            return psgd_step(state, self.oracle, batch, gamma, self.quantizer,
                             self.momentum, self.weight_decay)
        if self.optimizer == 'binaryconnect':
            return binaryconnect_step(state, self.oracle, batch, gamma, self.quantizer,
                                      self.momentum, self.weight_decay)
        if self.optimizer == 'binaryrelax':
            return binaryrelax_step(state, self.oracle, batch, gamma, self.quantizer,
                                    self.relax_schedule, 1. / self.num_batches,
                                    self.momentum, self.weight_decay)
        return float_step(state, self.oracle, batch, gamma, self.momentum, self.weight_decay)

    def _switch_phase(self, state):
        lam = state.lambda_state.lam
        self.lambda_at_switch = lam
        low, high = Defaults.LAMBDA_WINDOW
        if not low < lam < high:
            logger.warning("lambda = %.4g when phase I ends, outside of the window (%g, %g)", lam, low, high)
        logger.info("Switching to exact projection after epoch %i", self.phase2_epoch)
        return replace(state, phase=PHASE_EXACT)

    def _alpha(self, before, after):
        if not (before.consistent and after.consistent):
            return None
        record = diagnostics.alpha_k(before.y, before.x, after.x, k=before.k)
        if record.defined and record.alpha < Defaults.SMALL_ALPHA:
            logger.debug("alpha_%i = %.3g, gradient-line angle %.6f", before.k, record.alpha,
                         diagnostics.gradient_line_angle(after.grad, after.x))
        return record

    def _grad_variance(self, x, epoch):
        rng = np.random.default_rng(derive_seed(self.seed, epoch))
        return diagnostics.gradient_variance(self.oracle, x, self.batch_size, rng)

    def _epoch_record(self, state, epoch, gamma, alphas, proxies):
        oracle = self.oracle
        train_loss = oracle.full_loss(state.x)
        if not np.isfinite(train_loss):
            raise TrainingAborted("non-finite training loss", state.k, self.records)
        stats = diagnostics.summarize_alphas(alphas)
        record = MetricsRecord(epoch=epoch, iteration=state.k, phase=state.phase,
                               lam=self._lam(state), gamma=gamma, train_loss=train_loss,
                               alpha_mean=stats['mean'], alpha_min=stats['min'],
                               alpha_undef_count=stats['undefined'],
                               stationarity_proxy=float(np.mean(proxies)),
                               grad_variance=self._grad_variance(state.x, epoch))
        if self.val is not None:
            record.val_loss = oracle.full_loss(state.x, self.val)
            if oracle.classification:
                record.val_acc = oracle.accuracy(state.x, self.val)
        if self.quantizer is not None:
            record.dist_to_q = self.quantizer.distance(state.x)
        return record

    def run(self):
        """Run all of the epochs

        Returns
        -------
        records : `list`
            One `MetricsRecord` per epoch

        Raises
        ------
        TrainingAborted : on a non-finite gradient or loss, with the records so far
        """
        t_start = time.time()
        state = self.initial_state()
        num_samples = self.oracle.num_samples
        for epoch in range(1, self.num_epochs + 1):
            if state.phase == PHASE_RELAXED and epoch > self.phase2_epoch:
                state = self._switch_phase(state)
            order = state.rng.permutation(num_samples)
            alphas = []
            proxies = []
            gamma = None
            for start in range(0, num_samples, self.batch_size):
                batch = order[start:start + self.batch_size]
                gamma = gamma_at(self.lr_schedule, epoch - 1, state.k)
                lam = self._lam(state)
                try:
                    new_state = self._step(state, batch, gamma)
                except TrainingAborted as err:
                    logger.error("Run aborted at epoch %i: %s", epoch, err)
                    raise TrainingAborted("non-finite gradient", err.iteration, self.records)
                alpha = self._alpha(state, new_state)
                if alpha is not None:
                    alphas.append(alpha)
                    self.alphas.append(alpha)
                proxy = diagnostics.stationarity_proxy(state.x, new_state.x, gamma)
                proxies.append(proxy)
                self.min_proxy = min(self.min_proxy, proxy)
                if self.callback is not None:
                    self.callback(StepInfo(epoch, gamma, lam, state, new_state, batch, alpha))
                if self.record_iterations:
                    self.iteration_records.append(self._iteration_record(state, new_state, epoch, gamma, lam,
                                                                          batch, alpha, proxy))
                state = new_state
            record = self._epoch_record(state, epoch, gamma, alphas, proxies)
            self.records.append(record)
            logger.info("epoch %i/%i %s: loss %.6g, val acc %.4g, dist %.4g, lambda %.4g",
                        epoch, self.num_epochs, record.phase, record.train_loss, record.val_acc,
                        record.dist_to_q, record.lam)
        self.state = state
        self.wall_time = time.time() - t_start
        return self.records

    def _iteration_record(self, before, after, epoch, gamma, lam, batch, alpha, proxy):
        loss = self.oracle.batch_loss(after.x, batch)
        record = MetricsRecord(epoch=epoch, iteration=after.k, phase=after.phase, lam=lam,
                               gamma=gamma, train_loss=loss, stationarity_proxy=proxy)
        if alpha is not None:
            if alpha.defined:
                record.alpha_mean = record.alpha_min = alpha.alpha
            else:
                record.alpha_undef_count = 1
        if self.quantizer is not None:
            record.dist_to_q = self.quantizer.distance(after.x)
        return record

    def summary(self):
        """Run summary: final metrics, alpha statistics and the stationarity running minimum"""
        out = dict(optimizer=self.optimizer,
                   seed=self.seed,
                   epochs=len(self.records),
                   iterations=0 if self.state is None else self.state.k,
                   wall_time=self.wall_time,
                   lambda_at_switch=self.lambda_at_switch,
                   stationarity_running_min=self.min_proxy,
                   alpha=diagnostics.summarize_alphas(self.alphas))
        if self.records:
            out['final'] = self.records[-1].to_dict()
        return out


def run_training(config, oracle, val=None, initial_weights=None, record_iterations=False, callback=None):
    """Train with the settings of a `RunConfig`

    Parameters
    ----------
    config : `RunConfig`
        Validated run configuration
    oracle : `GradientOracle`
        Objective, built from the same configuration
    val : `Dataset` or `None`
        Validation data

    Returns
    -------
    records : `list`
        One `MetricsRecord` per epoch
    """
    return build_trainer(config, oracle, val, initial_weights, record_iterations, callback).run()


def build_trainer(config, oracle, val=None, initial_weights=None, record_iterations=False, callback=None):
    """Build the `Trainer` for a `RunConfig` and an oracle"""
    quantizer = None
    if config.optimizer != 'float' or config.quant is not None:
        quantizer = WeightQuantizer(config.build_scheme(), oracle.quant_groups)
    relax = config.build_relaxation() if config.optimizer == 'binaryrelax' else None
    return Trainer(config.optimizer, oracle, quantizer, config.build_lr_schedule(), relax,
                   num_epochs=config.epochs, batch_size=config.resolved_batch_size(oracle.num_samples),
                   momentum=config.momentum, weight_decay=config.weight_decay, seed=config.seed,
                   val=val, initial_weights=initial_weights, record_iterations=record_iterations,
                   callback=callback)
