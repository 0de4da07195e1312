"""Default values for quantization, relaxation and training parameters"""

import os

import numpy as np

VERBOSE = False

# Quantization
TWN_THRESHOLD_FACTOR = 0.7      # delta = 0.7 * ||y||_1 / n
LLOYD_MAX_ITERS = 1             # one iteration of Lloyd's algorithm by default
BINARY_LEVELS = (1.,)
TERNARY_LEVELS = (0., 1.)

# Enumeration bounds for the brute force oracle, by alphabet size
ORACLE_MAX_N = {2: 14, 3: 10}
ORACLE_MAX_CODES = 3**10

# Enumeration bounds for the line subspaces, by alphabet size
THETA_MAX_N = {2: 12, 3: 8}
THETA_BLOCK = 512               # rows per block of the Gram matrix

# Tolerances
ORACLE_RTOL = 1e-10
ALPHA_UNDEFINED_STEP = 1e-12    # alpha_k is undefined below this step norm
PROJECTION_ATOL = 1e-9          # slack when checking x_k = proj(y_k)
LINE_ATOL = 1e-9                # unit directions closer than this share a line
SMALL_ALPHA = 1e-6
GRADIENT_ZERO = 1e-8

# Relaxation schedule, CIFAR settings
LAMBDA0 = 1.
RHO = 1.02
LAMBDA_CADENCE = 1.             # epochs per growth tick
LAMBDA_WINDOW = (100., 200.)    # target window for lambda when phase I ends
PHASE1_FRACTION = 0.8           # ~4/5 of the epochs in phase I
TICK_EPS = 1e-9

# Training hyperparameters, CIFAR settings
NUM_EPOCHS = 300
PHASE2_EPOCH = 240
GAMMA0 = 0.1
DECAY_EPOCHS = (120, 220)
DECAY_FACTOR = 0.1
BATCH_SIZE = 128
MOMENTUM = 0.95
WEIGHT_DECAY = 1e-4

# Desk-scale dataset
VALIDATION_FRACTION = 1. / 6.   # 5:1 train/validation split
BLOBS_RADIUS = 1.
DESCENT_BETAS = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6)

# Float checkpoint format
CHECKPOINT_MAGIC = b'QRLXCKPT'
CHECKPOINT_VERSION = 1
CHECKPOINT_HEADER = np.dtype([('magic', 'S8'), ('version', '<u4'), ('n', '<u4')])

# Metrics file schema
METRICS_SCHEMA_VERSION = 1
METRICS_COLUMNS = ('epoch', 'iter', 'phase', 'lambda', 'gamma', 'train_loss', 'val_loss',
                   'val_acc', 'dist_to_q', 'alpha_mean', 'alpha_min', 'alpha_undef_count',
                   'stationarity_proxy')
FLOAT_FORMAT = '.17g'

# Exit codes
EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_PROPERTY = 3

# Wall time allowed for each verify property, in seconds
PROPERTY_TIME_LIMIT = 10.


# Directories and file names
if 'QUANTRELAX_DIR' in os.environ:
    QUANTRELAX_DIR = os.environ['QUANTRELAX_DIR']
else:
    QUANTRELAX_DIR = os.path.dirname(os.path.abspath(__file__)).replace(os.path.join('KIPAC', 'quantRelax'), '')

QUANTRELAX_CONFIG_DIR = os.path.join(QUANTRELAX_DIR, 'data', 'configs')
QUANTRELAX_OUT = os.environ.get('QUANTRELAX_OUT', os.path.join(os.getcwd(), 'quantrelax_out'))

METRICS_FILENAME = 'metrics.csv'
SUMMARY_FILENAME = 'summary.json'
CHECKPOINT_FILENAME = 'weights.ckpt'
COMPARE_FILENAME = 'compare.csv'
COMPARE_RUN_FORMAT = os.path.join('{optimizer}', 'seed{seed}')


# Other things
MASTER_SEED = 20180101
CONFIG_FORMAT = os.path.join(QUANTRELAX_CONFIG_DIR, '{name}.json')

# Diagnostics
GRAD_VARIANCE_SAMPLES = 8       # minibatches drawn for the sigma^2 estimate
ALPHA_NONNEG_ATOL = 1e-10
ALPHA_ONE_ATOL = 1e-8
UPPER_BOUND_ATOL = 1e-10
