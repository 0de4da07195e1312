"""Projections of real weight vectors onto the quantization set

Q = R_+ x {+-q_1, ..., +-q_m}^n is a finite union of lines through the
origin.  This module contains the exact quantizers (binary, ternary), the
approximate ones (TWN thresholding, Lloyd iterations) and a brute force
oracle used to verify them.
"""

import logging

import numpy as np

from . import Defaults

from . import quant_utils

from .exceptions import ConfigurationError, InvalidInputError

logger = logging.getLogger(__name__)

SOLVERS = ('binary', 'ternary', 'twn', 'lloyd')
EXACT_SOLVERS = ('binary', 'ternary')


class QuantScheme:
    """Quantization levels, bit-width, solver choice and group layout"""

    def __init__(self, solver, levels=None, bit_width=None, max_iters=Defaults.LLOYD_MAX_ITERS,
                 groups=None, init_scale=None):
        """C'tor

        Parameters
        ----------
        solver : `str`
            One of 'binary', 'ternary' (exact), 'twn' (thresholding) or 'lloyd'
        levels : `tuple` or `None`
            Levels 0 <= q_1 < ... < q_m.  Defaults to {1} for binary and {0, 1} for ternary solvers
        bit_width : `int` or `None`
            Number of bits including the sign, inferred from the levels if `None`
        max_iters : `int`
            Maximum number of Lloyd iterations
        groups : `list` or `None`
            Contiguous (start, stop) index ranges quantized independently,
            `None` means one global group
        init_scale : `float` or `None`
            Initial Lloyd scale, defaults to ||y||_inf / q_m

        Raises
        ------
        ConfigurationError : listing every inconsistency found
        """
        if levels is None:
            levels = Defaults.BINARY_LEVELS if solver == 'binary' else Defaults.TERNARY_LEVELS
        self.solver = solver
        self.levels = tuple(float(q) for q in levels)
        self.max_iters = max_iters
        self.init_scale = init_scale
        self.groups = None if groups is None else [(int(a), int(b)) for a, b in groups]
        ncodes = 2 * len(self.levels) - int(len(self.levels) > 0 and self.levels[0] == 0.)
        if bit_width is None:
            bit_width = max(1, int(np.ceil(np.log2(max(ncodes, 2)))))
        self.bit_width = bit_width
        self._validate(ncodes)

    def _validate(self, ncodes):
        errors = []
        if self.solver not in SOLVERS:
            errors.append("unknown solver %s, options are %s" % (self.solver, str(SOLVERS)))
        if not self.levels:
            errors.append("levels must not be empty")
        levels = np.array(self.levels)
        if np.any(levels < 0) or np.any(np.diff(levels) <= 0):
            errors.append("levels must satisfy 0 <= q_1 < ... < q_m, got %s" % str(self.levels))
        if int(self.bit_width) != self.bit_width or self.bit_width < 1:
            errors.append("bit_width must be an integer >= 1, got %s" % str(self.bit_width))
        elif ncodes > 2**self.bit_width:
            errors.append("%i codes do not fit in %i bits" % (ncodes, self.bit_width))
        if self.solver == 'binary' and self.levels != Defaults.BINARY_LEVELS:
            errors.append("binary solver requires levels (1,), got %s" % str(self.levels))
        if self.solver in ('ternary', 'twn') and self.levels != Defaults.TERNARY_LEVELS:
            errors.append("%s solver requires levels (0, 1), got %s" % (self.solver, str(self.levels)))
        if self.solver == 'lloyd':
            if len(self.levels) < 2:
                errors.append("lloyd solver requires at least 2 levels")
            if self.bit_width <= 2:
                errors.append("lloyd solver is meant for bit_width > 2, got %s" % str(self.bit_width))
            if self.max_iters < 1:
                errors.append("max_iters must be >= 1, got %s" % str(self.max_iters))
            if self.init_scale is not None and self.init_scale <= 0:
                errors.append("init_scale must be positive, got %s" % str(self.init_scale))
        if self.groups is not None:
            if not self.groups:
                errors.append("groups must not be empty")
            else:
                errors += self._group_errors(self.groups[-1][1])
        if errors:
            raise ConfigurationError(errors)

    def _group_errors(self, n):
        errors = []
        expected = 0
        for start, stop in self.groups:
            if start != expected or stop <= start:
                errors.append("groups %s do not partition [0, %i) contiguously" % (str(self.groups), n))
                break
            expected = stop
        else:
            if expected != n:
                errors.append("groups cover [0, %i) but the vector has length %i" % (expected, n))
        return errors

    @property
    def is_exact(self):
        """True if `project` returns a global minimizer"""
        return self.solver in EXACT_SOLVERS

    @property
    def alphabet(self):
        """The sorted code alphabet {+-q_j}"""
        return quant_utils.code_alphabet(self.levels)

    def resolve_groups(self, n):
        """Return the group layout for a vector of length n

        Raises
        ------
        ConfigurationError : if the groups do not partition [0, n)
        """
        if self.groups is None:
            return [(0, n)]
        errors = self._group_errors(n)
        if errors:
            raise ConfigurationError(errors)
        return self.groups

    def with_groups(self, groups):
        """Return a copy of this scheme with another group layout"""
        return QuantScheme(self.solver, self.levels, self.bit_width, self.max_iters,
                           groups, self.init_scale)

    def to_dict(self):
        """Serialize to a dictionary"""
        return dict(solver=self.solver, levels=list(self.levels), bit_width=self.bit_width,
                    max_iters=self.max_iters, groups=self.groups, init_scale=self.init_scale)

    def __repr__(self):
        return "QuantScheme(%s, levels=%s, bits=%i)" % (self.solver, str(self.levels), self.bit_width)


class QuantizedPoint:
    """A point of Q factored as per-group nonnegative scale x discrete codes"""

    def __init__(self, scales, codes, groups):
        """C'tor

        Parameters
        ----------
        scales : `array_like`
            Nonnegative scale s_i of each group
        codes : `np.ndarray`
            Code vector Q over {+-q_j}, full length n
        groups : `list`
            (start, stop) of each group
        """
        self.scales = np.asarray(scales, dtype=np.float64).reshape(-1)
        self.codes = np.asarray(codes, dtype=np.float64)
        self.groups = list(groups)
        if self.scales.size != len(self.groups):
            raise InvalidInputError("%i scales for %i groups" % (self.scales.size, len(self.groups)))
        if np.any(self.scales < 0):
            raise InvalidInputError("scales must be nonnegative, got %s" % str(self.scales))

    @property
    def scale(self):
        """The scale of a single group point"""
        if self.scales.size != 1:
            raise InvalidInputError("point has %i groups, use `scales`" % self.scales.size)
        return float(self.scales[0])

    @property
    def materialized(self):
        """The real vector x with x_(i) = s_i * Q_(i)"""
        out = np.empty_like(self.codes)
        for s, (start, stop) in zip(self.scales, self.groups):
            out[start:stop] = s * self.codes[start:stop]
        return out

    def residual(self, y):
        """Return ||s * Q - y||"""
        return float(np.linalg.norm(self.materialized - np.asarray(y, dtype=np.float64)))

    def lines(self):
        """The `LineSubspace` of each group, `None` for groups with zero scale"""
        out = []
        for s, (start, stop) in zip(self.scales, self.groups):
            codes = self.codes[start:stop]
            out.append(LineSubspace(codes) if s > 0 and np.any(codes) else None)
        return out

    def __repr__(self):
        return "QuantizedPoint(scales=%s, codes=%s)" % (str(self.scales), str(self.codes))


class LineSubspace:
    """One of the line subspaces {s * L : s real} making up Q"""

    def __init__(self, code):
        """C'tor

        Parameters
        ----------
        code : `array_like`
            Nonzero direction code, canonicalized so the first nonzero entry is positive
        """
        code = np.asarray(code, dtype=np.float64)
        if not np.any(code):
            raise InvalidInputError("a line subspace needs a nonzero direction code")
        self.code = quant_utils.canonical_sign(code)[0]
        self.direction = quant_utils.unit_direction(self.code)

    def __eq__(self, other):
        if not isinstance(other, LineSubspace) or other.code.size != self.code.size:
            return False
        return bool(np.allclose(self.direction, other.direction, rtol=0., atol=Defaults.LINE_ATOL))

    __hash__ = None

    def project(self, v):
        """Orthogonal projection of v onto this line"""
        return np.dot(v, self.direction) * self.direction

    def angle(self, other):
        """Angle between two lines, in [0, pi/2]"""
        cosine = min(1., abs(float(np.dot(self.direction, other.direction))))
        return float(np.arccos(cosine))

    def __repr__(self):
        return "LineSubspace(%s)" % str(self.code)


def _zero_codes(n, alphabet):
    if np.any(alphabet == 0.):
        return np.zeros(n)
    return np.full(n, alphabet[alphabet > 0].min())


def _binarize(y):
    magnitudes = np.abs(y)
    scale = quant_utils.clip_scale(magnitudes.mean(), magnitudes)
    codes = np.where(y >= 0, 1., -1.)
    return scale, codes


def _ternarize_exact(y):
    magnitudes = np.abs(y)
    order = np.argsort(-magnitudes, kind='stable')
    csum = np.cumsum(magnitudes[order])
    t = np.arange(1, y.size + 1)
    # np.argmax returns the first maximizer, so ties go to the smallest t
    t_star = int(np.argmax(csum * csum / t)) + 1
    support = order[:t_star]
    codes = np.zeros_like(y)
    codes[support] = np.sign(y[support])
    scale = quant_utils.clip_scale(csum[t_star - 1] / t_star, magnitudes[support])
    return scale, codes


def _ternarize_threshold(y):
    magnitudes = np.abs(y)
    delta = Defaults.TWN_THRESHOLD_FACTOR * magnitudes.mean()
    survivors = magnitudes >= delta
    codes = np.zeros_like(y)
    if not np.any(survivors):
        return 0., codes
    codes[survivors] = np.sign(y[survivors])
    scale = quant_utils.clip_scale(magnitudes[survivors].mean(), magnitudes[survivors])
    return scale, codes


def _lloyd(y, alphabet, max_iters, init_scale=None):
    qmax = alphabet.max()
    scale = np.abs(y).max() / qmax if init_scale is None else float(init_scale)
    history = []
    if scale == 0.:
        return 0., _zero_codes(y.size, alphabet), history
    previous = None
    for _ in range(max_iters):
        codes = quant_utils.nearest_code(y / scale, alphabet)
        history.append(float(np.sum((scale * codes - y)**2)))
        if previous is not None and np.array_equal(codes, previous):
            break
        if not np.any(codes):
            logger.debug("Lloyd assignment produced Q = 0, returning the zero point")
            return 0., _zero_codes(y.size, alphabet), history
        scale = quant_utils.optimal_scale(codes, y)
        history.append(float(np.sum((scale * codes - y)**2)))
        previous = codes
        if scale == 0.:
            break
    return scale, codes, history


def _single(y, scale, codes):
    return QuantizedPoint([scale], codes, [(0, y.size)])


def binarize(y):
    """Exact binarization, s = ||y||_1 / n and Q_i = 1 if y_i >= 0 else -1

    Parameters
    ----------
    y : `array_like`
        Real vector of length n >= 1

    Returns
    -------
    point : `QuantizedPoint`
        Global minimizer of ||s Q - y||^2 over s >= 0, Q in {+-1}^n
    """
    y = quant_utils.as_vector(y)
    return _single(y, *_binarize(y))


def ternarize_exact(y):
    """Exact ternarization from one sort of |y| and a prefix-sum scan

    t* = argmax_t ||y_[t]||_1^2 / t (smallest t on ties),
    s = ||y_[t*]||_1 / t*, Q = sign(y_[t*])

    Parameters
    ----------
    y : `array_like`
        Real vector of length n >= 1

    Returns
    -------
    point : `QuantizedPoint`
        Global minimizer of ||s Q - y||^2 over s >= 0, Q in {0, +-1}^n
    """
    y = quant_utils.as_vector(y)
    return _single(y, *_ternarize_exact(y))


def ternarize_threshold(y):
    """Approximate ternarization by thresholding at delta = 0.7 ||y||_1 / n

    Parameters
    ----------
    y : `array_like`
        Real vector of length n >= 1

    Returns
    -------
    point : `QuantizedPoint`
        s is the mean of |y_i| over |y_i| >= delta, Q = sign(y) there and 0 elsewhere
    """
    y = quant_utils.as_vector(y)
    return _single(y, *_ternarize_threshold(y))


def lloyd_quantize(y, scheme, init_scale=None, return_history=False):
    """Approximate quantization by alternating Q-updates and s-updates

    Parameters
    ----------
    y : `array_like`
        Real vector of length n >= 1
    scheme : `QuantScheme`
        Scheme with at least 2 levels, gives the levels and max_iters
    init_scale : `float` or `None`
        Initial scale, defaults to scheme.init_scale or ||y||_inf / q_m
    return_history : `bool`
        If True also return the objective ||s Q - y||^2 after every half step

    Returns
    -------
    point : `QuantizedPoint`
    history : `list`
        Only if return_history is True
    """
    y = quant_utils.as_vector(y)
    if len(scheme.levels) < 2 or scheme.max_iters < 1:
        raise ConfigurationError("lloyd_quantize needs >= 2 levels and max_iters >= 1, got %s" % repr(scheme))
    if init_scale is None:
        init_scale = scheme.init_scale
    scale, codes, history = _lloyd(y, scheme.alphabet, scheme.max_iters, init_scale)
    point = _single(y, scale, codes)
    if return_history:
        return point, history
    return point


def project(y, scheme):
    """Project y onto Q group by group with the scheme's solver

    Parameters
    ----------
    y : `array_like`
        Real vector
    scheme : `QuantScheme`
        The quantization scheme

    Returns
    -------
    point : `QuantizedPoint`
        Concatenation of the group results
    """
    y = quant_utils.as_vector(y)
    groups = scheme.resolve_groups(y.size)
    scales = np.zeros(len(groups))
    codes = np.zeros_like(y)
    for i, (start, stop) in enumerate(groups):
        y_group = y[start:stop]
        if scheme.solver == 'binary':
            scales[i], codes[start:stop] = _binarize(y_group)
        elif scheme.solver == 'ternary':
            scales[i], codes[start:stop] = _ternarize_exact(y_group)
        elif scheme.solver == 'twn':
            scales[i], codes[start:stop] = _ternarize_threshold(y_group)
        else:
            scales[i], codes[start:stop], _ = _lloyd(y_group, scheme.alphabet,
                                                     scheme.max_iters, scheme.init_scale)
    return QuantizedPoint(scales, codes, groups)


def dist_to_Q(y, scheme):
    """Return ||y - proj_Q(y)||

    The value is exact for the binary and ternary solvers and an upper
    bound otherwise (see `QuantScheme.is_exact`).
    """
    y = quant_utils.as_vector(y)
    return float(np.linalg.norm(y - project(y, scheme).materialized))


def brute_force_quantize(y, levels):
    """Verification oracle: enumerate every code vector

    For each code Q the optimal scale is s = max(0, <Q, y> / ||Q||^2).

    Parameters
    ----------
    y : `array_like`
        Real vector, n <= 14 for binary and n <= 10 for ternary levels
    levels : `tuple`
        Quantization levels

    Returns
    -------
    point : `QuantizedPoint`
        The global minimizer of ||s Q - y||^2 (first one found on ties)

    Raises
    ------
    OracleSizeError : if n is above the enumeration bound
    """
    y = quant_utils.as_vector(y)
    codes = quant_utils.code_matrix(levels, y.size)
    dots = codes @ y
    norms = np.einsum('ij,ij->i', codes, codes)
    scales = np.zeros_like(dots)
    nonzero = norms > 0
    scales[nonzero] = np.maximum(0., dots[nonzero] / norms[nonzero])
    objective = np.dot(y, y) - 2. * scales * dots + scales**2 * norms
    best = int(np.argmin(objective))
    if scales[best] == 0.:
        return _single(y, 0., _zero_codes(y.size, quant_utils.code_alphabet(levels)))
    return _single(y, scales[best], codes[best].copy())


def enumerate_lines(levels, n):
    """Canonical unit directions of all distinct lines composing Q

    Parameters
    ----------
    levels : `tuple`
        Quantization levels
    n : `int`
        Dimension, bounded by `Defaults.THETA_MAX_N`

    Returns
    -------
    directions : `np.ndarray`
        (p, n) array of unit vectors with first nonzero entry positive
    """
    codes = quant_utils.code_matrix(levels, n, Defaults.THETA_MAX_N)
    codes = codes[np.any(codes != 0, axis=1)]
    units = quant_utils.canonical_sign(codes / np.linalg.norm(codes, axis=1)[:, None])
    _, index = np.unique(np.round(units, 12), axis=0, return_index=True)
    return units[np.sort(index)]


class SchemeLibrary:
    """Library of named quantization schemes"""

    scheme_dict = {'binary': dict(solver='binary'),
                   'ternary': dict(solver='ternary'),
                   'twn': dict(solver='twn'),
                   'lloyd3bit': dict(solver='lloyd', levels=quant_utils.uniform_levels(3), bit_width=3)}

    def keys(self):
        """Return the names of the schemes"""
        return self.scheme_dict.keys()

    def get_scheme(self, name, groups=None):
        """Build a named scheme

        Parameters
        ----------
        name : `str`
            Scheme name
        groups : `list` or `None`
            Group layout

        Raises
        ------
        ConfigurationError : if the name is unknown
        """
        try:
            kwargs = self.scheme_dict[name]
        except KeyError:
            raise ConfigurationError("Scheme %s not defined, options are %s" % (name, str(list(self.keys()))))
        return QuantScheme(groups=groups, **kwargs)


SCHEME_LIBRARY = SchemeLibrary()
