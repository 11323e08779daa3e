"""Cholesky helpers with diagonal jitter."""

import math

import numpy as np
import scipy.linalg as la
from scipy.linalg import lapack

JITTER_START = 1e-10
JITTER_MAX = 1e-4


def jitchol(A):
    """Lower Cholesky factor of ``A``, adding diagonal jitter if needed.

    Jitter starts at ``1e-10 * mean(diag(A))`` and grows by a factor of
    ten up to ``1e-4 * mean(diag(A))``.

    Raises
    ------
    numpy.linalg.LinAlgError
        If ``A`` is still not positive definite at the largest jitter.
    """
    A = np.asarray(A, dtype=float)
    L = _potrf(A)
    if L is not None:
        return L

    scale = np.mean(np.diag(A))
    if not np.isfinite(scale) or scale <= 0:
        raise la.LinAlgError("matrix has a non-positive or non-finite diagonal")
    jit = JITTER_START
    while jit <= JITTER_MAX * (1 + 1e-9):
        L = _potrf(A + jit * scale * np.eye(len(A)))
        if L is not None:
            return L
        jit *= 10
    raise la.LinAlgError("added maximum jitter and matrix is still not PD")


def _potrf(A):
    # LAPACK directly: the scipy wrapper's checks dominate for small matrices.
    if A.size == 0:
        return np.zeros_like(A)
    L, info = lapack.dpotrf(A, lower=1, clean=1)
    # A NaN anywhere propagates to the last pivot.
    return L if info == 0 and math.isfinite(L[-1, -1]) else None


def chol_logdet(L):
    """log|A| from the Cholesky factor of A."""
    return 2.0 * np.sum(np.log(np.diag(L)))


def tri_solve(L, b):
    """Solve ``L x = b`` for lower-triangular ``L``."""
    b = np.asarray(b, dtype=float)
    if b.size == 0 or L.size == 0:
        return np.zeros(b.shape)
    x, info = lapack.dtrtrs(L, b, lower=1)
    if info != 0:
        raise la.LinAlgError("singular triangular factor")
    return x


def chol_solve(L, b):
    """Solve ``A x = b`` given the lower Cholesky factor ``L`` of ``A``."""
    b = np.asarray(b, dtype=float)
    if b.size == 0:
        return np.zeros(b.shape)
    x, info = lapack.dpotrs(L, b, lower=1)
    if info != 0:
        raise la.LinAlgError("invalid Cholesky factor")
    return x
