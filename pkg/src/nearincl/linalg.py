"""
Dense complex matrix primitives.

Matrices are plain :class:`numpy.ndarray` objects of dtype ``complex128``.
Everything here is pure: inputs are never modified.
"""

import numpy as np

from .errors import InvalidInputError, RankDeficientError

__all__ = [
    "as_matrix",
    "operator_norm",
    "trace_norm",
    "inverse",
    "polar_decompose",
    "condition_number",
    "matrix_to_json",
    "matrix_from_json",
    "SINGULAR_RTOL",
]

#: Relative singularity tolerance: ``sigma_min <= SINGULAR_RTOL * ||m||`` is singular.
SINGULAR_RTOL = 1e-10


def as_matrix(m, square=False, name="matrix"):
    """Return ``m`` as a finite 2-d complex array, or raise InvalidInputError."""
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-dimensional, got shape {a.shape}")
    if a.size == 0:
        raise InvalidInputError(f"{name} must be non-empty")
    if square and a.shape[0] != a.shape[1]:
        raise InvalidInputError(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return a


def operator_norm(m):
    """
    Largest singular value of ``m``.

    Parameters
    ----------
    m : (r, c) array_like
        Finite complex matrix.

    Returns
    -------
    float
        ``||m||`` in the operator (spectral) norm.

    Examples
    --------
    >>> operator_norm(np.diag([3.0, 4.0]))
    4.0
    """
    a = as_matrix(m)
    return float(np.linalg.svd(a, compute_uv=False)[0])


def trace_norm(m):
    """Sum of singular values (the norm dual to the operator norm)."""
    a = as_matrix(m)
    return float(np.linalg.svd(a, compute_uv=False).sum())


def _check_invertible(a, rtol):
    s = np.linalg.svd(a, compute_uv=False)
    tol = (SINGULAR_RTOL if rtol is None else rtol) * s[0]
    if s[-1] <= tol:
        raise RankDeficientError("matrix is singular to working tolerance", s[-1])
    return s


def condition_number(m):
    """``||m|| * ||m^-1||`` for a square invertible matrix."""
    a = as_matrix(m, square=True)
    s = _check_invertible(a, None)
    return float(s[0] / s[-1])


def inverse(m, rtol=None):
    """
    Inverse of a square matrix.

    Raises
    ------
    RankDeficientError
        If the smallest singular value is below ``rtol * ||m||``
        (default :data:`SINGULAR_RTOL`).
    """
    a = as_matrix(m, square=True)
    _check_invertible(a, rtol)
    return np.linalg.solve(a, np.eye(a.shape[0], dtype=complex))


def polar_decompose(m, rtol=None):
    """
    Right polar decomposition ``m = unitary @ positive``.

    Computed from the SVD ``m = W diag(s) V*`` as ``unitary = W V*`` and
    ``positive = V diag(s) V*``.

    Parameters
    ----------
    m : (n, n) array_like
        Invertible matrix.
    rtol : float, optional
        Relative singularity tolerance.

    Returns
    -------
    unitary : (n, n) ndarray
    positive : (n, n) ndarray
        Hermitian positive definite.
    """
    a = as_matrix(m, square=True)
    w, s, vh = np.linalg.svd(a)
    tol = (SINGULAR_RTOL if rtol is None else rtol) * s[0]
    if s[-1] <= tol:
        raise RankDeficientError("polar decomposition needs an invertible matrix", s[-1])
    unitary = w @ vh
    positive = (vh.conj().T * s) @ vh
    positive = 0.5 * (positive + positive.conj().T)
    return unitary, positive


def matrix_to_json(m):
    """Encode as ``{"rows", "cols", "data": [[re, im], ...]}`` in row-major order."""
    a = as_matrix(m)
    flat = a.ravel()
    return {
        "rows": int(a.shape[0]),
        "cols": int(a.shape[1]),
        "data": [[float(z.real), float(z.imag)] for z in flat],
    }


def matrix_from_json(obj):
    """Inverse of :func:`matrix_to_json`."""
    try:
        rows, cols, data = int(obj["rows"]), int(obj["cols"]), obj["data"]
    except (KeyError, TypeError) as exc:
        raise InvalidInputError(f"malformed matrix record: {exc}") from None
    if len(data) != rows * cols:
        raise InvalidInputError(f"matrix record has {len(data)} entries, expected {rows * cols}")
    arr = np.array(data, dtype=float).reshape(rows * cols, 2)
    return as_matrix((arr[:, 0] + 1j * arr[:, 1]).reshape(rows, cols))
