"""Low level numerical helpers for the quantizers"""

import itertools
from functools import lru_cache

import numpy as np

from . import Defaults

from .exceptions import InvalidInputError, OracleSizeError


def as_vector(y, name='y'):
    """Convert input to a non-empty, finite, 1D float64 array

    Parameters
    ----------
    y : `array_like`
        Input values

    Returns
    -------
    vec : `np.ndarray`
        A copy of the input as float64

    Raises
    ------
    InvalidInputError : if the input is empty, not 1D or not finite
    """
    try:
        vec = np.array(y, dtype=np.float64)
    except (TypeError, ValueError) as err:
        raise InvalidInputError("%s is not a real vector: %s" % (name, err))
    if vec.ndim != 1:
        raise InvalidInputError("%s must be 1 dimensional, got shape %s" % (name, str(vec.shape)))
    if vec.size == 0:
        raise InvalidInputError("%s is empty" % name)
    if not np.all(np.isfinite(vec)):
        raise InvalidInputError("%s contains non-finite values" % name)
    return vec


def code_alphabet(levels):
    """Return the sorted alphabet {+-q_1, ..., +-q_m} for a set of levels

    Zero appears once if q_1 = 0.
    """
    levels = np.asarray(levels, dtype=np.float64)
    return np.unique(np.concatenate([-levels, levels]))


def uniform_levels(bit_width):
    """Uniform quantization levels q_j = j - 1 for j = 1 .. 2^(b-1)

    Parameters
    ----------
    bit_width : `int`
        Number of bits b, including the sign

    Returns
    -------
    levels : `tuple`
        The levels, (1,) for b = 1
    """
    if bit_width < 1:
        raise InvalidInputError("bit_width must be >= 1, got %s" % str(bit_width))
    if bit_width == 1:
        return Defaults.BINARY_LEVELS
    return tuple(float(j) for j in range(2**(bit_width - 1)))


def clip_scale(scale, magnitudes):
    """Clip a mean of magnitudes into their [min, max] range

    The mean of identical values is then reproduced exactly, which makes
    the closed form quantizers idempotent on points of Q.
    """
    if magnitudes.size == 0:
        return 0.
    return float(np.clip(scale, magnitudes.min(), magnitudes.max()))


def nearest_code(values, alphabet):
    """Map each value to the nearest entry of a sorted alphabet

    Ties go to the smaller code.
    """
    mids = 0.5 * (alphabet[1:] + alphabet[:-1])
    return alphabet[np.searchsorted(mids, values, side='left')]


def optimal_scale(codes, y):
    """Least-squares scale for fixed codes, clamped to be nonnegative"""
    norm2 = np.dot(codes, codes)
    if norm2 == 0.:
        return 0.
    return max(0., np.dot(codes, y) / norm2)


def enumeration_bound(alphabet_size, bounds=None):
    """Largest n for which all alphabet_size^n code vectors may be enumerated"""
    bounds = Defaults.ORACLE_MAX_N if bounds is None else bounds
    if alphabet_size in bounds:
        return bounds[alphabet_size]
    return int(np.floor(np.log(Defaults.ORACLE_MAX_CODES) / np.log(alphabet_size)))


@lru_cache(maxsize=32)
def _code_matrix(alphabet, n):
    codes = np.array(list(itertools.product(alphabet, repeat=n)), dtype=np.float64)
    codes.setflags(write=False)
    return codes


def code_matrix(levels, n, bounds=None):
    """All code vectors in {+-q_j}^n, one per row

    Parameters
    ----------
    levels : `array_like`
        Quantization levels
    n : `int`
        Vector length
    bounds : `dict` or `None`
        Maximum n per alphabet size, defaults to `Defaults.ORACLE_MAX_N`

    Returns
    -------
    codes : `np.ndarray`
        Read-only (|alphabet|^n, n) array

    Raises
    ------
    OracleSizeError : if n exceeds the enumeration bound
    """
    alphabet = tuple(code_alphabet(levels))
    max_n = enumeration_bound(len(alphabet), bounds)
    if n > max_n:
        raise OracleSizeError("enumerating %i^%i code vectors exceeds the bound n <= %i" %
                              (len(alphabet), n, max_n))
    return _code_matrix(alphabet, n)


def canonical_sign(codes):
    """Flip a code vector so that its first nonzero entry is positive

    Works row-wise on 2D arrays.
    """
    codes = np.atleast_2d(np.asarray(codes, dtype=np.float64))
    nonzero = codes != 0
    first = np.argmax(nonzero, axis=1)
    signs = np.sign(codes[np.arange(codes.shape[0]), first])
    signs[signs == 0] = 1.
    return codes * signs[:, None]


def unit_direction(x):
    """Canonical unit direction of the line spanned by x, `None` for x = 0"""
    x = np.asarray(x, dtype=np.float64)
    norm = np.linalg.norm(x)
    if norm == 0.:
        return None
    return canonical_sign(x / norm)[0]
