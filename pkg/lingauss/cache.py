"""Process-wide cache of Cholesky factors.

Whitening, p_min reformulation and gradient evaluation all factorize the
same covariance matrices. Factors are cached by content fingerprint and
shared (read-only) across threads.

"""
import collections.abc
import hashlib
import logging

import numpy as np
from cachetools import LRUCache
from scipy.linalg import lapack

from lingauss.exc import CholeskyError, DimensionError
from lingauss.util import DummyLockPool, NamedLockPool


logger = logging.getLogger(__name__)


class LRUCache32(LRUCache):
    """LRUCache discarding Least Recently-Used elements once there are
    32 of them.

    """
    def __init__(self):
        super().__init__(maxsize=32)


class DummyCache(collections.abc.MutableMapping):
    """Mutable mapping capable of storing zero items."""

    # for compatibility with cachetools mappings otherwise in use
    currsize = maxsize = 0

    def __delitem__(self, key):
        raise KeyError(key)

    def __getitem__(self, key):
        raise KeyError(key)

    def __iter__(self):
        yield from ()

    def __len__(self):
        return 0

    def __setitem__(self, key, value):
        pass


def fingerprint(*arrays):
    """Content hash of the given arrays (shapes included)."""
    digest = hashlib.sha256()

    for array in arrays:
        array = np.ascontiguousarray(array, dtype=float)
        digest.update(repr(array.shape).encode())
        digest.update(array.tobytes())

    return digest.hexdigest()


class FactorCache:
    """Cache of lower-triangular Cholesky factors keyed by matrix content.

    The cache may be specified via an instance, a class, or any callable
    returning a mapping. A cache reporting ``maxsize=0`` (such as the
    DummyCache) disables caching, and with it locking.

    """
    __slots__ = ('cache', 'locks')

    def __init__(self, cache=LRUCache32):
        self.cache = cache() if callable(cache) else cache

        self.locks = (DummyLockPool() if getattr(self.cache, 'maxsize', None) == 0
                      else NamedLockPool())

    def __repr__(self):
        return f'<{self.__class__.__name__} of {self.cache!r}>'

    def cholesky(self, matrix):
        """Lower Cholesky factor L of the given symmetric positive-definite
        matrix (L Lᵀ = matrix), returned read-only.

        Raises CholeskyError naming the first leading minor which is not
        positive definite.

        """
        matrix = np.asarray(matrix, dtype=float)

        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise DimensionError(f'expected square matrix not shape {matrix.shape}')

        key = fingerprint(matrix)

        with self.locks.acquire(key):
            try:
                return self.cache[key]
            except KeyError:
                pass

            factor = factorize(matrix)

            self.cache[key] = factor

        return factor


def factorize(matrix):
    """Uncached lower Cholesky factor of matrix (read-only)."""
    (factor, info) = lapack.dpotrf(matrix, lower=1, clean=1)

    if info > 0:
        raise CholeskyError(int(info))

    if info < 0:
        raise ValueError(f'illegal value in argument {-info} of dpotrf')

    logger.debug('factorized %dx%d matrix', *matrix.shape)

    factor.flags.writeable = False
    return factor


#
# shared by default: see cholesky()
#
factors = FactorCache()


def cholesky(matrix):
    """Lower Cholesky factor of matrix via the shared FactorCache."""
    return factors.cholesky(matrix)
