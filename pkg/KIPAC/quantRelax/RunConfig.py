"""Run configuration records, JSON serialization and validation"""

import os
import json
import copy
import logging
from dataclasses import dataclass, field, asdict, fields

import numpy as np

from . import Defaults

from . import file_utils

from .Quantizer import QuantScheme

from .Relaxation import RelaxationSchedule

from .Optimizer import LearningRateSchedule, OPTIMIZERS

from .Dataset import gen_blobs, load_csv, stratified_split

from .Objective import MlpLayout, make_quadratic, make_logistic, make_mlp

from .exceptions import ConfigurationError, InvalidInputError, QuantRelaxError

logger = logging.getLogger(__name__)

OBJECTIVES = ('quadratic', 'logistic', 'mlp')
DATASETS = ('blobs', 'csv', 'none')


@dataclass
class ObjectiveConfig:
    """Which objective to train and its parameters"""
    kind: str = 'mlp'
    center: list = None
    diag: list = None
    hidden: int = 16
    activation: str = 'relu'


@dataclass
class DatasetConfig:
    """Where the samples come from; seed defaults to the run seed"""
    kind: str = 'blobs'
    n_samples: int = 600
    dim: int = 2
    num_classes: int = 3
    spread: float = 0.3
    path: str = None
    val_fraction: float = Defaults.VALIDATION_FRACTION
    seed: int = None


@dataclass
class QuantConfig:
    """Arguments of `QuantScheme`"""
    solver: str = 'ternary'
    levels: list = None
    bit_width: int = None
    max_iters: int = Defaults.LLOYD_MAX_ITERS
    init_scale: float = None


@dataclass
class LearningRateConfig:
    """Arguments of `LearningRateSchedule`"""
    gamma0: float = Defaults.GAMMA0
    decay_epochs: list = field(default_factory=lambda: list(Defaults.DECAY_EPOCHS))
    decay_factor: float = Defaults.DECAY_FACTOR
    kind: str = 'step'


@dataclass
class RelaxConfig:
    """Arguments of `RelaxationSchedule`; phase2_epoch defaults to 4/5 of the epochs"""
    lambda0: float = Defaults.LAMBDA0
    rho: float = Defaults.RHO
    cadence: float = Defaults.LAMBDA_CADENCE
    phase2_epoch: int = None


_SECTIONS = dict(objective=ObjectiveConfig, dataset=DatasetConfig, quant=QuantConfig,
                 lr=LearningRateConfig, relax=RelaxConfig)


@dataclass
class RunConfig:
    """Everything needed to reproduce one training run

    The defaults are the CIFAR settings: 300 epochs, batch 128, momentum
    0.95, weight decay 1e-4, gamma0 = 0.1 decayed at {120, 220}, lambda0 = 1
    grown by 1.02 per epoch.
    """
    objective: ObjectiveConfig = field(default_factory=ObjectiveConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    quant: QuantConfig = field(default_factory=QuantConfig)
    optimizer: str = 'binaryrelax'
    lr: LearningRateConfig = field(default_factory=LearningRateConfig)
    relax: RelaxConfig = field(default_factory=RelaxConfig)
    epochs: int = Defaults.NUM_EPOCHS
    batch_size: int = Defaults.BATCH_SIZE
    momentum: float = Defaults.MOMENTUM
    weight_decay: float = Defaults.WEIGHT_DECAY
    seed: int = Defaults.MASTER_SEED
    out: str = None
    warm_start: str = None

    @classmethod
    def from_dict(cls, data):
        """Build a config from nested dictionaries

        Raises
        ------
        ConfigurationError : listing unknown keys and malformed sections
        """
        if not isinstance(data, dict):
            raise ConfigurationError("config must be a JSON object, got %s" % type(data).__name__)
        errors = _unknown_keys('', data, cls)
        kwargs = {}
        for key, value in data.items():
            if key in _SECTIONS:
                section = _SECTIONS[key]
                if value is None:
                    kwargs[key] = None
                elif not isinstance(value, dict):
                    errors.append("%s must be an object, got %s" % (key, json.dumps(value)))
                else:
                    errors += _unknown_keys(key + '.', value, section)
                    kwargs[key] = section(**{k: v for k, v in value.items() if k in _names(section)})
            elif key in _names(cls):
                kwargs[key] = value
        if errors:
            raise ConfigurationError(errors)
        return cls(**kwargs)

    def to_dict(self):
        """Serialize to nested dictionaries"""
        return asdict(self)

    def save(self, path):
        """Write the config as JSON"""
        file_utils.write_json(self.to_dict(), path)

    @property
    def resolved_phase2_epoch(self):
        """Last relaxed epoch T"""
        if self.relax is None or self.relax.phase2_epoch is None:
            return int(round(Defaults.PHASE1_FRACTION * self.epochs))
        return self.relax.phase2_epoch

    def resolved_batch_size(self, num_samples):
        """The batch size, the whole dataset if batch_size is null"""
        return num_samples if self.batch_size is None else self.batch_size

    def resolved_dataset_seed(self):
        """Seed of the dataset generator and split"""
        if self.dataset is None or self.dataset.seed is None:
            return self.seed
        return self.dataset.seed

    def build_scheme(self):
        """Build the `QuantScheme`, the default ternary scheme if quant is null"""
        quant = QuantConfig() if self.quant is None else self.quant
        return QuantScheme(quant.solver, levels=quant.levels, bit_width=quant.bit_width,
                           max_iters=quant.max_iters, init_scale=quant.init_scale)

    def build_lr_schedule(self):
        """Build the `LearningRateSchedule`"""
        return LearningRateSchedule(self.lr.gamma0, tuple(self.lr.decay_epochs), self.lr.decay_factor,
                                    self.lr.kind)

    def build_relaxation(self):
        """Build the `RelaxationSchedule`"""
        relax = RelaxConfig() if self.relax is None else self.relax
        return RelaxationSchedule(relax.lambda0, relax.rho, relax.cadence, self.resolved_phase2_epoch)

    def build_datasets(self):
        """Return (train, validation) datasets, (None, None) for the quadratic objective"""
        data = self.dataset
        if data is None or data.kind == 'none':
            return None, None
        seed = self.resolved_dataset_seed()
        if data.kind == 'csv':
            return stratified_split(load_csv(data.path), seed, data.val_fraction)
        return gen_blobs(data.n_samples, data.dim, data.num_classes, data.spread, seed)

    def build_oracle(self, train=None):
        """Build the `GradientOracle` for the objective"""
        obj = self.objective
        if obj.kind == 'quadratic':
            return make_quadratic(obj.center, obj.diag)
        if obj.kind == 'logistic':
            return make_logistic(train)
        layout = MlpLayout(train.dim, obj.hidden, train.num_classes, obj.activation)
        return make_mlp(train, layout, self.seed)

    def build_problem(self):
        """Return (oracle, validation dataset)"""
        train, val = self.build_datasets()
        return self.build_oracle(train), val

    def validate(self):
        """Check every field and every cross-field constraint

        Lints are logged as warnings.

        Raises
        ------
        ConfigurationError : listing all of the problems found
        """
        errors = []
        if self.optimizer not in OPTIMIZERS:
            errors.append("optimizer must be one of %s, got %s" % (str(OPTIMIZERS), self.optimizer))
        errors += _check_int('epochs', self.epochs, 1)
        if self.batch_size is not None:
            errors += _check_int('batch_size', self.batch_size, 1)
        if not _is_real(self.momentum) or not 0 <= self.momentum < 1:
            errors.append("momentum must lie in [0, 1), got %s" % str(self.momentum))
        if not _is_real(self.weight_decay) or self.weight_decay < 0:
            errors.append("weight_decay must be >= 0, got %s" % str(self.weight_decay))
        errors += _check_int('seed', self.seed, 0)
        if not errors and self.seed >= 2**64:
            errors.append("seed must fit in 64 bits, got %i" % self.seed)
        errors += self._objective_errors()
        errors += self._dataset_errors()
        for name, builder in (('quant', self.build_scheme), ('lr', self.build_lr_schedule)):
            errors += _collect(name, builder)
        if self.optimizer == 'binaryrelax':
            if self.relax is None:
                errors.append("binaryrelax requires a relax section")
            else:
                errors += _collect('relax', self.build_relaxation)
        if errors:
            raise ConfigurationError(errors)
        self._lint()

    def _objective_errors(self):
        obj = self.objective
        if obj is None:
            return ["objective section is required"]
        if obj.kind not in OBJECTIVES:
            return ["objective.kind must be one of %s, got %s" % (str(OBJECTIVES), obj.kind)]
        if obj.kind == 'quadratic':
            if self.dataset is not None and self.dataset.kind != 'none':
                return ["the quadratic objective needs dataset.kind = none"]
            return _collect('objective', lambda: make_quadratic(obj.center, obj.diag))
        errors = []
        if self.dataset is None or self.dataset.kind == 'none':
            errors.append("objective %s needs a dataset" % obj.kind)
        if obj.kind == 'logistic' and self.dataset is not None and \
           self.dataset.kind == 'blobs' and self.dataset.num_classes != 2:
            errors.append("logistic objective needs dataset.num_classes = 2")
        if obj.kind == 'mlp':
            errors += _check_int('objective.hidden', obj.hidden, 1)
            if obj.activation not in ('relu', 'tanh'):
                errors.append("objective.activation must be relu or tanh, got %s" % obj.activation)
        return errors

    def _dataset_errors(self):
        data = self.dataset
        if data is None or data.kind == 'none':
            return []
        if data.kind not in DATASETS:
            return ["dataset.kind must be one of %s, got %s" % (str(DATASETS), data.kind)]
        errors = []
        if data.kind == 'csv' and not data.path:
            errors.append("dataset.path is required for csv datasets")
        if data.kind == 'blobs':
            errors += _check_int('dataset.n_samples', data.n_samples, 1)
            errors += _check_int('dataset.dim', data.dim, 1)
            errors += _check_int('dataset.num_classes', data.num_classes, 2)
            if not errors and data.n_samples < data.num_classes:
                errors.append("dataset.n_samples must be >= num_classes")
            if not _is_real(data.spread) or data.spread <= 0:
                errors.append("dataset.spread must be positive, got %s" % str(data.spread))
        if not _is_real(data.val_fraction) or not 0 < data.val_fraction < 1:
            errors.append("dataset.val_fraction must lie in (0, 1), got %s" % str(data.val_fraction))
        return errors

    def _lint(self):
        if self.optimizer == 'float' and self.quant is not None and self.quant != QuantConfig():
            logger.warning("the float optimizer ignores the quantization scheme, it is only used for dist_to_q")
        if self.optimizer == 'binaryrelax':
            schedule = self.build_relaxation()
            phase2 = schedule.phase2_epoch
            if 1 <= phase2 < self.epochs:
                lam = schedule.lambda_after(phase2)
                low, high = Defaults.LAMBDA_WINDOW
                if not low < lam < high:
                    logger.warning("lambda reaches %.4g at the end of phase I (epoch %i), outside of (%g, %g)",
                                   lam, phase2, low, high)


def _names(cls):
    return [fld.name for fld in fields(cls)]


def _unknown_keys(prefix, data, cls):
    return ["unknown key %s%s" % (prefix, key) for key in data if key not in _names(cls)]


def _is_int(value):
    return isinstance(value, (int, np.integer)) and not isinstance(value, bool)


def _is_real(value):
    return isinstance(value, (int, float, np.integer, np.floating)) and not isinstance(value, bool)


def _check_int(name, value, minimum):
    if not _is_int(value) or value < minimum:
        return ["%s must be an integer >= %i, got %s" % (name, minimum, str(value))]
    return []


def _collect(prefix, builder):
    try:
        builder()
    except ConfigurationError as err:
        return ["%s: %s" % (prefix, msg) for msg in err.errors]
    except (InvalidInputError, QuantRelaxError, TypeError, ValueError) as err:
        return ["%s: %s" % (prefix, err)]
    return []


def parse_override(text):
    """Split KEY=VALUE, parsing VALUE as JSON with a plain string fallback

    Returns
    -------
    path : `list`
        Dotted key split into its parts
    value : `object`
    """
    if '=' not in text:
        raise ConfigurationError("override %s is not of the form KEY=VALUE" % text)
    key, raw = text.split('=', 1)
    key = key.strip()
    if not key:
        raise ConfigurationError("override %s has an empty key" % text)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.split('.'), value


def apply_override(data, text):
    """Apply one KEY=VALUE override in place to a config dictionary"""
    path, value = parse_override(text)
    node = data
    for part in path[:-1]:
        if node.get(part) is None:
            node[part] = {}
        node = node[part]
        if not isinstance(node, dict):
            raise ConfigurationError("override %s: %s is not a section" % (text, part))
    node[path[-1]] = value
    return data


def resolve_config_path(path):
    """A file path, or the name of a shipped config under `Defaults.QUANTRELAX_CONFIG_DIR`"""
    if path is None or os.path.exists(path):
        return path
    shipped = Defaults.CONFIG_FORMAT.format(name=path)
    if os.path.exists(shipped):
        return shipped
    return path


def load_config(path=None, overrides=(), seed=None):
    """Load and validate a run config, defaults if path is `None`

    Parameters
    ----------
    path : `str` or `None`
        JSON config file or shipped config name
    overrides : `list`
        KEY=VALUE strings
    seed : `int` or `None`
        Replaces the config seed

    Returns
    -------
    config : `RunConfig`
    data : `dict`
        The dictionary the config was built from, after overrides
    """
    path = resolve_config_path(path)
    data = RunConfig().to_dict() if path is None else file_utils.read_json(path)
    data = copy.deepcopy(data)
    for override in overrides:
        apply_override(data, override)
    if seed is not None:
        data['seed'] = seed
    config = RunConfig.from_dict(data)
    config.validate()
    return config, data
