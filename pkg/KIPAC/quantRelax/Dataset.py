"""Defines the `Dataset` class and the desk-scale dataset generators"""

import logging

import numpy as np

from . import Defaults

from . import file_utils

from .utilities import CachedArray, Cache

from .exceptions import InvalidInputError

logger = logging.getLogger(__name__)


class Dataset(Cache):
    """Labelled samples: an N x d feature matrix and N integer class ids"""

    def __init__(self, features, labels, num_classes=None):
        """C'tor

        Parameters
        ----------
        features : `array_like`
            N x d matrix of reals
        labels : `array_like`
            Length N integer class ids in [0, num_classes)
        num_classes : `int` or `None`
            Number of classes, inferred as max(label) + 1 if `None` (at least 2)

        Raises
        ------
        InvalidInputError : if the invariants do not hold
        """
        features = np.array(features, dtype=np.float64)
        labels = np.array(labels)
        if features.ndim == 1:
            features = features.reshape(-1, 1)
        if features.ndim != 2 or features.shape[0] < 1:
            raise InvalidInputError("features must be a non-empty N x d matrix, got shape %s" %
                                    str(features.shape))
        if labels.shape != (features.shape[0],):
            raise InvalidInputError("%i labels for %i samples" % (labels.size, features.shape[0]))
        if not np.all(np.isfinite(features)):
            raise InvalidInputError("features contain non-finite values")
        if labels.dtype.kind == 'f':
            if np.any(labels != np.round(labels)):
                raise InvalidInputError("labels must be integers")
        elif labels.dtype.kind not in 'iu':
            raise InvalidInputError("labels must be integers, got dtype %s" % labels.dtype)
        labels = labels.astype(np.int64)
        if num_classes is None:
            num_classes = max(2, int(labels.max()) + 1)
        if num_classes < 2:
            raise InvalidInputError("num_classes must be >= 2, got %i" % num_classes)
        if labels.min() < 0 or labels.max() >= num_classes:
            raise InvalidInputError("labels must lie in [0, %i)" % num_classes)
        self.features = features
        self.labels = labels
        self.num_classes = int(num_classes)
        self.one_hot = CachedArray(self._one_hot, (self.num_samples, self.num_classes))
        self.class_counts = CachedArray(self._class_counts, (self.num_classes,))

    @property
    def num_samples(self):
        """Number of samples N"""
        return self.features.shape[0]

    @property
    def dim(self):
        """Number of features d"""
        return self.features.shape[1]

    def _one_hot(self):
        out = np.zeros((self.num_samples, self.num_classes))
        out[np.arange(self.num_samples), self.labels] = 1.
        return out

    def _class_counts(self):
        return np.bincount(self.labels, minlength=self.num_classes)

    def subset(self, indices):
        """Return a new `Dataset` with the selected samples"""
        return Dataset(self.features[indices], self.labels[indices], self.num_classes)

    @classmethod
    def create_from_csv(cls, path):
        """Read a dataset from a CSV file with header f0,...,f{d-1},label

        Returns
        -------
        dataset : `Dataset`
        """
        features, labels = file_utils.read_dataset_csv(path)
        return cls(features, labels)


def load_csv(path):
    """Read a `Dataset` from a CSV file, see `file_utils.read_dataset_csv`"""
    return Dataset.create_from_csv(path)


def stratified_split(dataset, seed, val_fraction=Defaults.VALIDATION_FRACTION):
    """Split a dataset into train and validation parts class by class

    Parameters
    ----------
    dataset : `Dataset`
    seed : `int`
        Seed for the within-class shuffles
    val_fraction : `float`
        Fraction of each class sent to validation, 1/6 gives 5:1

    Every class with two or more members keeps at least one sample on
    each side; a class with a single member stays in training.

    Returns
    -------
    train : `Dataset`
    validation : `Dataset` or `None`
        `None` if every class has a single member
    """
    rng = np.random.default_rng(seed)
    counts = dataset.class_counts()
    train_idx = []
    val_idx = []
    for label in range(dataset.num_classes):
        if counts[label] == 0:
            continue
        members = np.flatnonzero(dataset.labels == label)
        members = members[rng.permutation(members.size)]
        nval = 0
        if counts[label] >= 2:
            nval = int(np.clip(np.round(counts[label] * val_fraction), 1, counts[label] - 1))
        val_idx.append(members[:nval])
        train_idx.append(members[nval:])
    train_idx = np.sort(np.concatenate(train_idx))
    val_idx = np.sort(np.concatenate(val_idx))
    if val_idx.size == 0:
        logger.warning("No class has two samples out of %i, training without validation",
                       dataset.num_samples)
        return dataset.subset(train_idx), None
    return dataset.subset(train_idx), dataset.subset(val_idx)


def class_centers(dim, num_classes, radius=Defaults.BLOBS_RADIUS):
    """Fixed class centers: evenly spaced on a circle in the first two
    features, or on [-radius, radius] when dim = 1"""
    centers = np.zeros((num_classes, dim))
    if dim == 1:
        centers[:, 0] = np.linspace(-radius, radius, num_classes)
        return centers
    angles = 2. * np.pi * np.arange(num_classes) / num_classes
    centers[:, 0] = radius * np.cos(angles)
    centers[:, 1] = radius * np.sin(angles)
    return centers


def gen_blobs(n_samples, dim, num_classes, spread, seed):
    """Generate Gaussian clusters around fixed class centers

    Parameters
    ----------
    n_samples : `int`
        Total number of samples, >= num_classes
    dim : `int`
        Number of features
    num_classes : `int`
        Number of clusters
    spread : `float`
        Standard deviation of each cluster, > 0
    seed : `int`
        Seed, the output is identical for identical arguments

    Returns
    -------
    train, validation : `Dataset`
        Stratified 5:1 split, see `stratified_split` (validation is `None` when n_samples = num_classes)
    """
    errors = []
    if num_classes < 2:
        errors.append("num_classes must be >= 2, got %s" % str(num_classes))
    if n_samples < num_classes:
        errors.append("n_samples (%s) must be >= num_classes (%s)" % (str(n_samples), str(num_classes)))
    if dim < 1:
        errors.append("dim must be >= 1, got %s" % str(dim))
    if not spread > 0:
        errors.append("spread must be positive, got %s" % str(spread))
    if errors:
        raise InvalidInputError("; ".join(errors))
    rng = np.random.default_rng(seed)
    labels = np.arange(n_samples) % num_classes
    features = class_centers(dim, num_classes)[labels] + spread * rng.standard_normal((n_samples, dim))
    return stratified_split(Dataset(features, labels, num_classes), seed)
