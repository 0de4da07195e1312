"""Utility classes and functions for quantRelax"""

import os
import logging

import numpy as np

from . import Defaults

MASK64 = (1 << 64) - 1


def makedir_safe(filepath):
    """Make a directory for a file and catch exceptions if it already exists"""
    try:
        os.makedirs(os.path.dirname(filepath))
    except OSError:
        pass


def setup_logging(verbose=Defaults.VERBOSE):
    """Configure the root logger once for command line use

    Parameters
    ----------
    verbose : `bool`
        If True log at DEBUG level, otherwise INFO
    """
    level = logging.DEBUG if verbose else logging.INFO
    logging.basicConfig(level=level,
                        format="%(asctime)s %(name)s %(levelname)s: %(message)s")
    logging.getLogger().setLevel(level)


def splitmix64(state):
    """One round of the splitmix64 generator

    Parameters
    ----------
    state : `int`
        64 bit state

    Returns
    -------
    value : `int`
        64 bit output
    """
    z = (state + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(master_seed, index):
    """Derive the seed of the index-th run of a sweep from a master seed

    The derived seed is splitmix64(master + index * golden gamma), so runs
    are reproducible and independent of how a sweep is scheduled.

    Parameters
    ----------
    master_seed : `int`
        u64 master seed
    index : `int`
        Position of the run in the sweep

    Returns
    -------
    seed : `int`
        Derived u64 seed
    """
    state = (int(master_seed) + int(index) * 0x9E3779B97F4A7C15) & MASK64
    return splitmix64(state)


class CachedArray:
    """A derived array built on first use and kept read-only afterwards

    Calling the object returns the array, building it with `fget` if needed.
    """
    def __init__(self, fget, shape):
        """C'tor

        Parameters
        ----------
        fget : `func`
            Function used to build the array
        shape : `tuple`
            Expected shape
        """
        self._fget = fget
        self._shape = tuple(shape)
        self._cached = None

    def __call__(self):
        if self._cached is None:
            val = np.asarray(self._fget())
            if val.shape != self._shape:
                raise ValueError("CachedArray %s shape %s != %s" % (self._fget.__name__,
                                                                    str(val.shape), str(self._shape)))
            val.setflags(write=False)
            self._cached = val
        return self._cached

    def clear(self):
        """Drop the array, the next call rebuilds it"""
        self._cached = None


class Cache:
    """Base class for objects holding `CachedArray` attributes"""

    def clear_cache(self):
        """Clear every `CachedArray` in `self.__dict__`"""
        for val in self.__dict__.values():
            if isinstance(val, CachedArray):
                val.clear()
