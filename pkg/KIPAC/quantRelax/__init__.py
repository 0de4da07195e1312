"""Software for training models with quantized weights by relaxed projection

"""
from . import Defaults
from . import utilities
from . import quant_utils
from . import file_utils
from . import diagnostics

from .Quantizer import QuantScheme, QuantizedPoint, LineSubspace, SCHEME_LIBRARY

from .Relaxation import RelaxationSchedule

from .Dataset import Dataset

from .Objective import QuadraticOracle, LogisticOracle, MlpOracle, MlpLayout

from .Optimizer import LearningRateSchedule, WeightQuantizer, Trainer, run_training

from .RunConfig import RunConfig
