"""Gradient oracles for the desk-scale training objectives"""

import logging
from dataclasses import dataclass

import numpy as np

from scipy.special import expit, logsumexp, softmax

from . import quant_utils

from .exceptions import InvalidInputError

logger = logging.getLogger(__name__)

ACTIVATIONS = ('relu', 'tanh')


class GradientOracle:
    """Base class for objectives f(x) = mean_j l_j(x) with minibatch gradients

    Sub-classes implement `_loss_and_grad(x, indices, dataset)`, returning
    the sample-averaged loss and its gradient over the selected samples.
    """

    classification = False

    def __init__(self, dim, num_samples, param_groups, quant_groups, train=None):
        """C'tor

        Parameters
        ----------
        dim : `int`
            Number of parameters n
        num_samples : `int`
            Number of samples the batch indices refer to
        param_groups : `dict`
            Group name : (start, stop) parameter index range
        quant_groups : `list`
            (start, stop) ranges of the quantized parameters
        train : `Dataset` or `None`
            Training data
        """
        self.dim = int(dim)
        self.num_samples = int(num_samples)
        self.param_groups = dict(param_groups)
        self.quant_groups = [tuple(group) for group in quant_groups]
        self.train = train

    def _loss_and_grad(self, x, indices, dataset):
        raise NotImplementedError()

    def _check_x(self, x):
        x = quant_utils.as_vector(x, 'x')
        if x.size != self.dim:
            raise InvalidInputError("x has length %i, the oracle expects %i" % (x.size, self.dim))
        return x

    def _check_batch(self, batch):
        batch = np.asarray(batch, dtype=np.int64).reshape(-1)
        if batch.size == 0:
            raise InvalidInputError("empty batch")
        if batch.min() < 0 or batch.max() >= self.num_samples:
            raise InvalidInputError("batch indices must lie in [0, %i)" % self.num_samples)
        return batch

    def stochastic_grad(self, x, batch):
        """Gradient of the loss averaged over the samples in batch"""
        return self._loss_and_grad(self._check_x(x), self._check_batch(batch), self.train)[1]

    def batch_loss(self, x, batch):
        """Loss averaged over the samples in batch"""
        return self._loss_and_grad(self._check_x(x), self._check_batch(batch), self.train)[0]

    def full_loss(self, x, dataset=None):
        """Average loss over a dataset, the training data by default"""
        dataset = self.train if dataset is None else dataset
        indices = np.arange(self.num_samples if dataset is None else dataset.num_samples)
        return self._loss_and_grad(self._check_x(x), indices, dataset)[0]

    def full_grad(self, x):
        """Gradient of `full_loss` on the training data"""
        return self.stochastic_grad(x, np.arange(self.num_samples))

    def accuracy(self, x, dataset=None):
        """Fraction of correctly classified samples, nan for regression oracles"""
        return np.nan

    def initial_point(self, seed=None):
        """Starting point y^0 of a training run"""
        return np.zeros(self.dim)


class QuadraticOracle(GradientOracle):
    """f(x) = 1/2 sum_i d_i (x_i - c_i)^2

    The 'samples' are the coordinates; a batch of coordinates B gives the
    unbiased estimate (n / |B|) sum_(i in B) of the per-coordinate terms.
    """

    def __init__(self, center, diag=None):
        """C'tor

        Parameters
        ----------
        center : `array_like`
            The unconstrained minimizer c
        diag : `array_like` or `None`
            Positive curvatures d_i, all ones if `None`
        """
        center = quant_utils.as_vector(center, 'c')
        if diag is None:
            diag = np.ones_like(center)
        else:
            diag = quant_utils.as_vector(diag, 'diag')
            if diag.size != center.size:
                raise InvalidInputError("diag has length %i, c has length %i" % (diag.size, center.size))
            if np.any(diag <= 0):
                raise InvalidInputError("diag entries must be positive, got %s" % str(diag))
        self.center = center
        self.diag = diag
        n = center.size
        GradientOracle.__init__(self, n, n, {'x': (0, n)}, [(0, n)])

    @property
    def curvature(self):
        """Lipschitz constant of the gradient, max_i d_i"""
        return float(self.diag.max())

    def _loss_and_grad(self, x, indices, dataset):
        weight = self.dim / indices.size
        delta = x[indices] - self.center[indices]
        loss = weight * 0.5 * np.sum(self.diag[indices] * delta * delta)
        grad = np.zeros(self.dim)
        np.add.at(grad, indices, weight * self.diag[indices] * delta)
        return float(loss), grad

    def full_loss(self, x, dataset=None):
        """f(x) over all of the coordinates, dataset is ignored"""
        x = self._check_x(x)
        delta = x - self.center
        return float(0.5 * np.sum(self.diag * delta * delta))


class LogisticOracle(GradientOracle):
    """Binary logistic regression, parameters [w (d), b]

    The loss is log(1 + exp(t)) - u t with t = <f, w> + b; only w is quantized.
    """

    classification = True

    def __init__(self, dataset):
        """C'tor

        Parameters
        ----------
        dataset : `Dataset`
            Training data with exactly 2 classes
        """
        if dataset.num_classes != 2:
            raise InvalidInputError("logistic regression needs 2 classes, got %i" % dataset.num_classes)
        d = dataset.dim
        GradientOracle.__init__(self, d + 1, dataset.num_samples,
                                {'w': (0, d), 'b': (d, d + 1)}, [(0, d)], dataset)

    def _check_dataset(self, dataset):
        if dataset.dim != self.dim - 1:
            raise InvalidInputError("dataset has %i features, the oracle expects %i" % (dataset.dim, self.dim - 1))
        if dataset.num_classes != 2:
            raise InvalidInputError("logistic regression needs 2 classes, got %i" % dataset.num_classes)

    def _logits(self, x, features):
        return features @ x[:-1] + x[-1]

    def _loss_and_grad(self, x, indices, dataset):
        self._check_dataset(dataset)
        features = dataset.features[indices]
        labels = dataset.one_hot()[indices, 1]
        logits = self._logits(x, features)
        loss = np.mean(np.logaddexp(0., logits) - labels * logits)
        resid = (expit(logits) - labels) / indices.size
        grad = np.empty(self.dim)
        grad[:-1] = features.T @ resid
        grad[-1] = resid.sum()
        return float(loss), grad

    def accuracy(self, x, dataset=None):
        dataset = self.train if dataset is None else dataset
        self._check_dataset(dataset)
        predicted = self._logits(self._check_x(x), dataset.features) > 0
        return float(np.mean(predicted == (dataset.labels == 1)))


@dataclass(frozen=True)
class MlpLayout:
    """Shape of a one hidden layer perceptron

    Parameters are packed as [W1 (d x H), b1 (H), W2 (H x C), b2 (C)],
    matrices in row-major order.
    """
    input_dim: int
    hidden: int
    num_classes: int
    activation: str = 'relu'

    def __post_init__(self):
        errors = []
        for name in ('input_dim', 'hidden', 'num_classes'):
            if getattr(self, name) < 1:
                errors.append("%s must be >= 1, got %s" % (name, str(getattr(self, name))))
        if self.num_classes < 2:
            errors.append("num_classes must be >= 2, got %s" % str(self.num_classes))
        if self.activation not in ACTIVATIONS:
            errors.append("unknown activation %s, options are %s" % (self.activation, str(ACTIVATIONS)))
        if errors:
            raise InvalidInputError("; ".join(errors))

    @property
    def groups(self):
        """Parameter group name : (start, stop)"""
        d, h, c = self.input_dim, self.hidden, self.num_classes
        sizes = [('W1', d * h), ('b1', h), ('W2', h * c), ('b2', c)]
        out = {}
        start = 0
        for name, size in sizes:
            out[name] = (start, start + size)
            start += size
        return out

    @property
    def num_params(self):
        """n = dH + H + HC + C"""
        return self.input_dim * self.hidden + self.hidden + self.hidden * self.num_classes + self.num_classes

    @property
    def quant_groups(self):
        """Only the weight matrices are quantized"""
        groups = self.groups
        return [groups['W1'], groups['W2']]

    def unpack(self, x):
        """Split a flat parameter vector into (W1, b1, W2, b2) views"""
        groups = self.groups
        d, h, c = self.input_dim, self.hidden, self.num_classes
        w1 = x[slice(*groups['W1'])].reshape(d, h)
        b1 = x[slice(*groups['b1'])]
        w2 = x[slice(*groups['W2'])].reshape(h, c)
        b2 = x[slice(*groups['b2'])]
        return w1, b1, w2, b2


class MlpOracle(GradientOracle):
    """Softmax cross-entropy of a one hidden layer perceptron, manual backpropagation"""

    classification = True

    def __init__(self, dataset, layout, seed=0):
        """C'tor

        Parameters
        ----------
        dataset : `Dataset`
            Training data
        layout : `MlpLayout`
            Network shape, must match the dataset
        seed : `int`
            Seed for the initial weights
        """
        self.layout = layout
        self.seed = seed
        self._check_dataset(dataset)
        GradientOracle.__init__(self, layout.num_params, dataset.num_samples,
                                layout.groups, layout.quant_groups, dataset)

    def _check_dataset(self, dataset):
        if dataset.dim != self.layout.input_dim:
            raise InvalidInputError("dataset has %i features, the layout expects %i" %
                                    (dataset.dim, self.layout.input_dim))
        if dataset.num_classes != self.layout.num_classes:
            raise InvalidInputError("dataset has %i classes, the layout expects %i" %
                                    (dataset.num_classes, self.layout.num_classes))

    def _activate(self, z):
        if self.layout.activation == 'relu':
            return np.maximum(z, 0.)
        return np.tanh(z)

    def _activate_deriv(self, z, a):
        if self.layout.activation == 'relu':
            # zero at z = 0
            return (z > 0).astype(np.float64)
        return 1. - a * a

    def forward(self, x, features):
        """Return the hidden pre-activations, activations and output logits"""
        w1, b1, w2, b2 = self.layout.unpack(x)
        z1 = features @ w1 + b1
        a1 = self._activate(z1)
        return z1, a1, a1 @ w2 + b2

    def _loss_and_grad(self, x, indices, dataset):
        self._check_dataset(dataset)
        features = dataset.features[indices]
        targets = dataset.one_hot()[indices]
        nbatch = indices.size
        z1, a1, logits = self.forward(x, features)
        loss = np.mean(logsumexp(logits, axis=1) - np.sum(targets * logits, axis=1))

        dlogits = softmax(logits, axis=1) - targets
        dlogits /= nbatch
        _, _, w2, _ = self.layout.unpack(x)
        dz1 = (dlogits @ w2.T) * self._activate_deriv(z1, a1)

        grad = np.empty(self.dim)
        dw1, db1, dw2, db2 = self.layout.unpack(grad)
        dw1[...] = features.T @ dz1
        db1[...] = dz1.sum(axis=0)
        dw2[...] = a1.T @ dlogits
        db2[...] = dlogits.sum(axis=0)
        return float(loss), grad

    def accuracy(self, x, dataset=None):
        dataset = self.train if dataset is None else dataset
        self._check_dataset(dataset)
        _, _, logits = self.forward(self._check_x(x), dataset.features)
        return float(np.mean(np.argmax(logits, axis=1) == dataset.labels))

    def initial_point(self, seed=None):
        """Glorot uniform weights, zero biases"""
        seed = self.seed if seed is None else seed
        rng = np.random.default_rng(seed)
        layout = self.layout
        x = np.zeros(self.dim)
        w1, _, w2, _ = layout.unpack(x)
        limit1 = np.sqrt(6. / (layout.input_dim + layout.hidden))
        limit2 = np.sqrt(6. / (layout.hidden + layout.num_classes))
        w1[...] = rng.uniform(-limit1, limit1, size=w1.shape)
        w2[...] = rng.uniform(-limit2, limit2, size=w2.shape)
        return x


def make_quadratic(c, diag=None):
    """Build a `QuadraticOracle`"""
    return QuadraticOracle(c, diag)


def make_logistic(dataset):
    """Build a `LogisticOracle` for a two class dataset"""
    return LogisticOracle(dataset)


def make_mlp(dataset, layout, seed=0):
    """Build an `MlpOracle`, layout may be a `MlpLayout` or its hidden width"""
    if not isinstance(layout, MlpLayout):
        layout = MlpLayout(dataset.dim, int(layout), dataset.num_classes)
    return MlpOracle(dataset, layout, seed)
