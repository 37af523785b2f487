"""Dense linear algebra shared by the solvers.

Matrices are plain ``numpy.ndarray`` values in C (row-major) order and must
be fully finite before they reach any solver. Problem sizes stay small
(at most a few thousand rows, a few hundred columns), so everything here
is dense.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionMismatchError, NotPositiveDefiniteError

__all__ = [
    "CholeskyFactor",
    "as_matrix",
    "as_vector",
    "cholesky",
    "solve_triangular",
]


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate and return ``a`` as a finite 2-D float64 array."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionMismatchError(f"{name} must be 2-D, got ndim={m.ndim}")
    if not np.isfinite(m).all():
        raise ValueError(f"{name} contains NaN or Inf entries")
    return m


def as_vector(v, name: str = "vector") -> np.ndarray:
    """Validate and return ``v`` as a finite 1-D float64 array."""
    a = np.asarray(v, dtype=np.float64)
    if a.ndim != 1:
        raise DimensionMismatchError(f"{name} must be 1-D, got ndim={a.ndim}")
    if not np.isfinite(a).all():
        raise ValueError(f"{name} contains NaN or Inf entries")
    return a


@dataclass(frozen=True)
class CholeskyFactor:
    """Lower-triangular factor L of a symmetric positive-definite matrix.

    ``L @ L.T`` reconstructs the factored matrix; all diagonal entries of
    L are strictly positive.
    """

    lower: np.ndarray

    @property
    def dim(self) -> int:
        return self.lower.shape[0]


def cholesky(m, rtol: float = 1e-12) -> CholeskyFactor:
    """Factor a symmetric positive-definite matrix as L·Lᵀ.

    Parameters
    ----------
    m : array_like
        Symmetric matrix (symmetric within ``rtol`` relative to its
        largest entry).
    rtol : float
        Symmetry tolerance.

    Returns
    -------
    CholeskyFactor

    Raises
    ------
    NotPositiveDefiniteError
        If a pivot falls at or below ``dim * eps * max(diag)``, which is
        how a degenerate correlation or normal-equation matrix shows up.
    DimensionMismatchError
        If ``m`` is not square of dimension >= 1.
    """
    a = as_matrix(m, "m")
    n, ncols = a.shape
    if n != ncols or n < 1:
        raise DimensionMismatchError(f"expected a square matrix, got {a.shape}")
    scale = np.abs(a).max()
    if scale > 0 and np.abs(a - a.T).max() > rtol * scale:
        raise ValueError("matrix is not symmetric within tolerance")

    # Pivot threshold scales with dimension and magnitude so that a matrix
    # that is SPD "up to roundoff" still factors, while rank deficiency is
    # flagged instead of producing a garbage factor.
    pivot_floor = n * np.finfo(np.float64).eps * max(a.diagonal().max(), 0.0)

    L = np.zeros_like(a)
    for j in range(n):
        pivot = a[j, j] - L[j, :j] @ L[j, :j]
        if pivot <= pivot_floor:
            raise NotPositiveDefiniteError(
                f"pivot {pivot:.3e} at index {j} is below threshold "
                f"{pivot_floor:.3e}"
            )
        L[j, j] = np.sqrt(pivot)
        if j + 1 < n:
            L[j + 1 :, j] = (a[j + 1 :, j] - L[j + 1 :, :j] @ L[j, :j]) / L[j, j]
    return CholeskyFactor(lower=L)


def solve_triangular(factor: CholeskyFactor, b, transpose: bool = False) -> np.ndarray:
    """Solve L·y = b (or Lᵀ·y = b when ``transpose``) for y.

    Raises
    ------
    DimensionMismatchError
        If the right-hand side length does not match the factor dimension.
    """
    rhs = as_vector(b, "b")
    if rhs.shape[0] != factor.dim:
        raise DimensionMismatchError(
            f"right-hand side has length {rhs.shape[0]}, factor dimension is {factor.dim}"
        )
    return scipy.linalg.solve_triangular(
        factor.lower, rhs, lower=True, trans="T" if transpose else "N"
    )
