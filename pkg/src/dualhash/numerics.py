"""Dense float64 array helpers and the seeded random source used everywhere else.

Vectors and matrices are plain numpy arrays (copied to float64 on entry).
All sampling goes through :class:`Rng` so that a run is a pure function of
its seed; PCG64 streams are bit-exact across platforms.
"""

import numpy as np

from .exceptions import ConfigError, DimensionError


def as_vector(x):
    """Coerce to a 1-d float64 array."""
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionError(f"expected a vector, got shape {v.shape}")
    return v


def as_matrix(x):
    """Coerce to a 2-d float64 array."""
    m = np.asarray(x, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionError(f"expected a matrix, got shape {m.shape}")
    return m


def axpy(a, x, y):
    """Return a*x + y elementwise; x and y must have equal length."""
    x = as_vector(x)
    y = as_vector(y)
    if x.shape != y.shape:
        raise DimensionError(f"axpy length mismatch: {x.shape[0]} vs {y.shape[0]}")
    return a * x + y


def frob_norm_sq(m):
    """Sum of squared entries (squared Frobenius norm)."""
    m = np.asarray(m, dtype=np.float64)
    return float(np.sum(m * m))


class Rng:
    """Seeded PCG64 stream with explicit splitting.

    The same seed always reproduces the same stream. `split()` derives an
    independent child stream deterministically, so concurrent consumers never
    share state.
    """

    def __init__(self, seed, _seq=None):
        self.seed = int(seed) if _seq is None else None
        self._seq = np.random.SeedSequence(int(seed)) if _seq is None else _seq
        self._gen = np.random.Generator(np.random.PCG64(self._seq))

    def split(self):
        """Spawn an independent child stream."""
        (child,) = self._seq.spawn(1)
        return Rng(0, _seq=child)

    @property
    def generator(self):
        return self._gen

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high=high, size=size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._gen.normal(loc=loc, scale=scale, size=size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low=low, high=high, size=size)

    def permutation(self, n):
        return self._gen.permutation(n)


def sample_indices(rng, n, b):
    """Draw b indices i.i.d. uniform over {0, ..., n-1}, with replacement."""
    if n < 1:
        raise ConfigError(f"population size must be >= 1, got {n}")
    if b < 1 or b > n:
        raise ConfigError(f"batch size must satisfy 1 <= b <= n, got b={b}, n={n}")
    return np.asarray(rng.integers(0, n, size=b), dtype=np.int64)
