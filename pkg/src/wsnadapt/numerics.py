"""Dense symmetric linear algebra kernels used throughout the package.

Matrices and vectors are plain float64 numpy arrays.  Every entry point
validates its input (squareness, symmetry to 1e-12 relative tolerance,
size >= 1), so callers can pass arbitrary array-likes.  Problem sizes here
are tiny (node counts and block lengths of order ten), which is why the
factorization is written out explicitly instead of delegating to LAPACK:
the positive-definiteness test must follow one fixed pivot rule so that a
degenerate covariance fails loudly and reproducibly.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch, NoConvergence, NotPositiveDefinite

SYMMETRY_RTOL = 1e-12


def as_vector(b) -> np.ndarray:
    """Coerce to a 1-D float64 array of length >= 1."""
    v = np.asarray(b, dtype=float)
    if v.ndim != 1 or v.size < 1:
        raise DimensionMismatch(f"expected a 1-D vector, got shape {v.shape}")
    return v


def as_symmetric_matrix(a) -> np.ndarray:
    """Coerce to a square float64 array, checking symmetry to 1e-12 (relative)."""
    m = np.asarray(a, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
    scale = np.max(np.abs(m))
    if scale > 0 and np.max(np.abs(m - m.T)) > SYMMETRY_RTOL * scale:
        raise DimensionMismatch("matrix is not symmetric within 1e-12 relative tolerance")
    return m


def cholesky_factor(a) -> np.ndarray:
    """Lower-triangular L with L @ L.T == a for SPD ``a``.

    Raises NotPositiveDefinite as soon as a pivot falls at or below
    1e-12 * max(diag(a)); degenerate covariances (two co-located nodes)
    are never silently regularized here.
    """
    m = as_symmetric_matrix(a)
    n = m.shape[0]
    floor = 1e-12 * float(np.max(np.diag(m)))
    low = np.zeros_like(m)
    for j in range(n):
        pivot = m[j, j] - low[j, :j] @ low[j, :j]
        if pivot <= floor:
            raise NotPositiveDefinite(
                f"pivot {pivot:.3e} at column {j} is <= {floor:.3e}"
            )
        low[j, j] = np.sqrt(pivot)
        if j + 1 < n:
            low[j + 1:, j] = (m[j + 1:, j] - low[j + 1:, :j] @ low[j, :j]) / low[j, j]
    return low


def solve_spd(a, b) -> np.ndarray:
    """Solve a @ x = b for SPD ``a`` by factor-then-substitute."""
    m = as_symmetric_matrix(a)
    rhs = as_vector(b)
    if rhs.size != m.shape[0]:
        raise DimensionMismatch(
            f"matrix order {m.shape[0]} does not match vector length {rhs.size}"
        )
    low = cholesky_factor(m)
    n = m.shape[0]
    y = np.zeros(n)
    for i in range(n):
        y[i] = (rhs[i] - low[i, :i] @ y[:i]) / low[i, i]
    x = np.zeros(n)
    for i in range(n - 1, -1, -1):
        x[i] = (y[i] - low[i + 1:, i] @ x[i + 1:]) / low[i, i]
    return x


def max_eigenvalue(a, tol: float = 1e-8, max_iter: int = 10_000) -> float:
    """Dominant eigenvalue of a symmetric PSD matrix by power iteration.

    Deterministic: starts from the all-ones vector and stops once the
    Rayleigh quotient changes by no more than ``tol`` (relative) between
    iterations.  Covariance matrices have non-negative entries, so the
    dominant eigenvector is never orthogonal to the start vector.
    """
    m = as_symmetric_matrix(a)
    if tol <= 0:
        raise ValueError("tol must be positive")
    v = np.ones(m.shape[0])
    lam = float(v @ (m @ v)) / float(v @ v)
    for _ in range(max_iter):
        w = m @ v
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            return 0.0  # start vector is in the nullspace of a PSD matrix
        v = w / norm
        lam_new = float(v @ (m @ v))
        if abs(lam_new - lam) <= tol * max(abs(lam_new), 1e-300):
            return lam_new
        lam = lam_new
    raise NoConvergence(
        f"Rayleigh quotient still moving after {max_iter} iterations"
    )
