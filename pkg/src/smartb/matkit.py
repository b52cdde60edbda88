"""Small dense matrix helpers for the planning variance algebra.

Everything here operates on tiny matrices (at most 16 x 16): the two-wave
planning covariance is a 5 x 5 arrowhead and the regression engines never
exceed single digits of parameters. The point of hand-rolling the arrowhead
inverse is transparency, not speed; general_inverse exists as an independent
cross-check so the closed form can be audited numerically.
"""
from __future__ import annotations

import warnings

import numpy as np

MAX_DIM = 16
CONDITION_WARN_THRESHOLD = 1e8

__all__ = [
    "MatrixShapeError",
    "SingularMatrixError",
    "IllConditionedWarning",
    "arrowhead_inverse",
    "general_inverse",
    "quadratic_form",
]


class MatrixShapeError(ValueError):
    pass


class SingularMatrixError(ValueError):
    pass


class IllConditionedWarning(UserWarning):
    pass


def _as_square(m, name="matrix") -> np.ndarray:
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise MatrixShapeError(f"{name} must be square, got shape {a.shape}")
    if a.shape[0] == 0:
        raise MatrixShapeError(f"{name} must be non-empty")
    if a.shape[0] > MAX_DIM:
        raise MatrixShapeError(f"{name} exceeds supported size {MAX_DIM}, got {a.shape[0]}")
    if not np.all(np.isfinite(a)):
        raise MatrixShapeError(f"{name} contains non-finite entries")
    return a


def _warn_if_ill_conditioned(m: np.ndarray, inv: np.ndarray) -> None:
    # cheap 1-norm condition estimate; a warning, never a failure
    est = np.abs(m).sum(axis=0).max() * np.abs(inv).sum(axis=0).max()
    if est > CONDITION_WARN_THRESHOLD:
        warnings.warn(
            f"matrix is ill conditioned (1-norm condition estimate {est:.3e})",
            IllConditionedWarning,
            stacklevel=3,
        )


def arrowhead_inverse(m) -> np.ndarray:
    """Invert an arrowhead matrix: dense first row and column, diagonal tail.

    For m = [[a, b^T], [c, D]] with D diagonal, the Schur complement of D is
    the scalar s = a - sum_j b_j c_j / d_j and the inverse has the closed form

        inv[0, 0] = 1 / s
        inv[0, j] = -b_j / (d_j s)
        inv[j, 0] = -c_j / (d_j s)
        inv[j, k] = delta_jk / d_j + c_j b_k / (d_j d_k s)

    Raises MatrixShapeError when the trailing block is not diagonal and
    SingularMatrixError when a tail pivot or the Schur complement vanishes.
    """
    a = _as_square(m, "arrowhead matrix")
    k = a.shape[0]
    if k == 1:
        if a[0, 0] == 0.0:
            raise SingularMatrixError("1 x 1 matrix with zero entry")
        out = np.array([[1.0 / a[0, 0]]])
        _warn_if_ill_conditioned(a, out)
        return out
    tail = a[1:, 1:]
    d = np.diag(tail).copy()
    if np.count_nonzero(tail - np.diag(d)):
        raise MatrixShapeError("trailing block must be diagonal for the arrowhead form")
    if np.any(d == 0.0):
        j = int(np.flatnonzero(d == 0.0)[0]) + 1
        raise SingularMatrixError(f"zero pivot on the trailing diagonal at position {j}")
    b = a[0, 1:]
    c = a[1:, 0]
    s = a[0, 0] - float(np.sum(b * c / d))
    if s == 0.0:
        raise SingularMatrixError("zero Schur complement; matrix is singular")
    inv = np.empty_like(a)
    inv[0, 0] = 1.0 / s
    inv[0, 1:] = -b / (d * s)
    inv[1:, 0] = -c / (d * s)
    inv[1:, 1:] = np.diag(1.0 / d) + np.outer(c / d, b / d) / s
    if not np.all(np.isfinite(inv)):
        raise SingularMatrixError("inverse overflowed; matrix is numerically singular")
    _warn_if_ill_conditioned(a, inv)
    return inv


def general_inverse(m) -> np.ndarray:
    """Invert a small dense matrix by Gauss-Jordan elimination with partial pivoting.

    Deliberately independent of the arrowhead closed form so the two can be
    checked against each other. A pivot below 1e-14 relative to the largest
    input entry raises SingularMatrixError.
    """
    a = _as_square(m, "matrix")
    k = a.shape[0]
    scale = np.abs(a).max()
    if scale == 0.0:
        raise SingularMatrixError("zero matrix is singular")
    tol = 1e-14 * scale
    work = np.hstack([a.copy(), np.eye(k)])
    for col in range(k):
        pivot_row = col + int(np.argmax(np.abs(work[col:, col])))
        if np.abs(work[pivot_row, col]) <= tol:
            raise SingularMatrixError(f"pivot below tolerance at column {col}; matrix is singular")
        if pivot_row != col:
            work[[col, pivot_row]] = work[[pivot_row, col]]
        work[col] /= work[col, col]
        for row in range(k):
            if row != col and work[row, col] != 0.0:
                work[row] -= work[row, col] * work[col]
    inv = work[:, k:]
    if not np.all(np.isfinite(inv)):
        raise SingularMatrixError("inverse overflowed; matrix is numerically singular")
    _warn_if_ill_conditioned(a, inv)
    return np.ascontiguousarray(inv)


def quadratic_form(c, b_inv, meat) -> float:
    """c^T B^{-1} M B^{-1} c, the planning variance of a linear contrast."""
    cv = np.asarray(c, dtype=float)
    if cv.ndim != 1:
        raise MatrixShapeError(f"contrast vector must be 1-dimensional, got shape {cv.shape}")
    bi = _as_square(b_inv, "bread inverse")
    mm = _as_square(meat, "meat matrix")
    k = cv.shape[0]
    if bi.shape[0] != k or mm.shape[0] != k:
        raise MatrixShapeError(
            f"dimension mismatch: contrast {k}, bread inverse {bi.shape[0]}, meat {mm.shape[0]}")
    if not np.all(np.isfinite(cv)):
        raise MatrixShapeError("contrast vector contains non-finite entries")
    return float((cv @ bi) @ mm @ (bi @ cv))
