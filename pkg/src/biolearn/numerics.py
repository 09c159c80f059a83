"""Deterministic numeric foundation: float64 matrices and a splittable PRNG.

Matrices are plain 2-D ``numpy.ndarray`` of float64 (row-major). All public
operations validate shapes and reject non-finite values, so downstream code
can assume clean inputs. Bit-exact reproducibility holds in single-threaded
BLAS mode (see the ``--threads 1`` CLI flag, or set OPENBLAS_NUM_THREADS=1 /
OMP_NUM_THREADS=1 before importing numpy).
"""

from __future__ import annotations

import numpy as np

from .errors import NumericError, ParameterError, ShapeError

#: PRNG algorithm identifier. Streams are produced by numpy's PCG64 seeded
#: through SeedSequence; child streams use SeedSequence spawn keys, so a
#: child's stream depends only on (seed, spawn_key), never on how many draws
#: the parent has made.
RNG_ALGORITHM = "pcg64-seedsequence"


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite 2-D float64 array, raising on anything else."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"{name}: expected 2-D array, got ndim={m.ndim}")
    if not np.all(np.isfinite(m)):
        raise NumericError(f"{name}: contains non-finite entries")
    return m


def matmul(a, b) -> np.ndarray:
    """Matrix product with shape validation.

    The inner dimension may be zero; the product is then the zero matrix
    (empty-sum convention).
    """
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"matmul: inner dimensions differ ({a.shape[0]}x{a.shape[1]} @ "
            f"{b.shape[0]}x{b.shape[1]})"
        )
    out = a @ b
    if not np.all(np.isfinite(out)):
        raise NumericError("matmul: product overflowed to non-finite values")
    return out


class Rng:
    """Seedable PRNG with counter-based child streams.

    Two instances built from the same ``(seed, spawn_key)`` produce identical
    streams. ``child(i)`` derives an independent stream keyed by the index
    alone, so parallel consumers can be given children in any order without
    perturbing each other.
    """

    algorithm = RNG_ALGORITHM

    def __init__(self, seed: int, spawn_key: tuple[int, ...] = ()):
        if not isinstance(seed, (int, np.integer)) or seed < 0:
            raise ParameterError(f"seed must be a nonnegative integer, got {seed!r}")
        self.seed = int(seed)
        self.spawn_key = tuple(int(k) for k in spawn_key)
        seq = np.random.SeedSequence(self.seed, spawn_key=self.spawn_key)
        self.generator = np.random.Generator(np.random.PCG64(seq))

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, spawn_key={self.spawn_key})"

    def child(self, index: int) -> "Rng":
        """Derive the ``index``-th child stream (independent of draw order)."""
        if index < 0:
            raise ParameterError("child index must be nonnegative")
        return Rng(self.seed, self.spawn_key + (int(index),))

    def uniform(self, lo: float, hi: float, n: int) -> np.ndarray:
        """``n`` i.i.d. draws from U[lo, hi)."""
        if not lo < hi:
            raise ParameterError(f"uniform: need lo < hi, got [{lo}, {hi})")
        if n < 0:
            raise ParameterError("uniform: n must be nonnegative")
        return self.generator.uniform(lo, hi, size=int(n))

    def normal(self, mean: float, std: float, n: int) -> np.ndarray:
        """``n`` i.i.d. draws from N(mean, std^2)."""
        if std < 0:
            raise ParameterError(f"normal: std must be >= 0, got {std}")
        if n < 0:
            raise ParameterError("normal: n must be nonnegative")
        return self.generator.normal(mean, std, size=int(n))

    def permutation(self, n: int) -> np.ndarray:
        """Uniform random permutation of range(n)."""
        return self.generator.permutation(int(n))

    def choice_without_replacement(self, pool: np.ndarray, k: int) -> np.ndarray:
        """``k`` distinct elements of ``pool``, uniformly."""
        if k > len(pool):
            raise ParameterError(
                f"cannot draw {k} items without replacement from pool of {len(pool)}"
            )
        return self.generator.choice(pool, size=int(k), replace=False)
