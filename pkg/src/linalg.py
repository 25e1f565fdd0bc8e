"""
Small dense linear algebra for the least-squares estimator and the design solver.

Positive-definite solves go through a Cholesky factorization rather than an
explicit inverse. Rank-deficient arm sets are handled by computing an
orthonormal basis of their span and projecting onto it.
"""

import logging
from typing import Sequence

import numpy as np
from scipy import linalg

try:
    from .models import EmptyArmSetError, OutOfSpanError, ProjectionBasis, SingularMatrixError
except ImportError:
    from models import EmptyArmSetError, OutOfSpanError, ProjectionBasis, SingularMatrixError


logger = logging.getLogger(__name__)

CONDITION_TOL = 1e-10
RANK_TOL = 1e-9
SPAN_TOL = 1e-8


def _factor(V: np.ndarray):
    """
    Cholesky-factor V after checking it is numerically positive definite.

    Raises:
        SingularMatrixError: If the smallest eigenvalue is not above
            CONDITION_TOL times the largest.
    """
    V = np.asarray(V, dtype=float)
    if V.ndim != 2 or V.shape[0] != V.shape[1]:
        raise SingularMatrixError(f"expected a square matrix, got shape {V.shape}")
    eig = np.linalg.eigvalsh(V)
    if eig[-1] <= 0.0 or eig[0] <= CONDITION_TOL * eig[-1]:
        raise SingularMatrixError(
            f"matrix is not positive definite (eigenvalues in [{eig[0]:.3e}, {eig[-1]:.3e}])"
        )
    try:
        return linalg.cho_factor(V, lower=True, check_finite=True)
    except linalg.LinAlgError as e:
        raise SingularMatrixError(f"Cholesky factorization failed: {e}")


def solve_psd(V: np.ndarray, b: np.ndarray) -> np.ndarray:
    """
    Solve V x = b for a symmetric positive-definite V.

    Args:
        V: Symmetric positive-definite matrix
        b: Right-hand side

    Returns:
        The solution x

    Raises:
        SingularMatrixError: If V fails the conditioning check; the caller
            should project the arms first.
    """
    factor = _factor(V)
    return linalg.cho_solve(factor, np.asarray(b, dtype=float))


def quad_norm_sq(V: np.ndarray, a: np.ndarray) -> float:
    """Return a^T V^-1 a."""
    a = np.asarray(a, dtype=float)
    return float(a @ solve_psd(V, a))


def quad_norms_sq(V: np.ndarray, arms: np.ndarray) -> np.ndarray:
    """Row-wise a^T V^-1 a for every row of ``arms`` with a single factorization."""
    arms = np.atleast_2d(np.asarray(arms, dtype=float))
    factor = _factor(V)
    solved = linalg.cho_solve(factor, arms.T)
    return np.einsum("ij,ji->i", arms, solved)


def rank_basis(arms: Sequence[np.ndarray], tol: float = RANK_TOL) -> ProjectionBasis:
    """
    Orthonormal basis of span(arms).

    Singular values above ``tol`` times the largest are kept.

    Raises:
        EmptyArmSetError: If there are no arms or every arm is the zero vector.
    """
    A = np.atleast_2d(np.asarray(arms, dtype=float))
    if A.size == 0:
        raise EmptyArmSetError("no arms given")
    _, s, vt = np.linalg.svd(A, full_matrices=False)
    if s[0] == 0.0:
        raise EmptyArmSetError("every arm is the zero vector")
    rank = int(np.sum(s > tol * s[0]))
    return ProjectionBasis(rows=vt[:rank].copy())


def project(basis: ProjectionBasis, a: np.ndarray) -> np.ndarray:
    """
    Coordinates of ``a`` in the basis.

    Raises:
        OutOfSpanError: If a is not in span(basis) to SPAN_TOL relative residual.
    """
    return project_all(basis, np.atleast_2d(a))[0]


def project_all(basis: ProjectionBasis, arms: np.ndarray) -> np.ndarray:
    """Project every row of ``arms``; same residual check as ``project``."""
    A = np.atleast_2d(np.asarray(arms, dtype=float))
    coords = A @ basis.rows.T
    residual = np.linalg.norm(A - coords @ basis.rows, axis=1)
    scale = np.maximum(np.linalg.norm(A, axis=1), 1.0)
    bad = np.flatnonzero(residual > SPAN_TOL * scale)
    if bad.size:
        raise OutOfSpanError(
            f"vector {int(bad[0])} is outside the basis span (residual {residual[bad[0]]:.3e})"
        )
    return coords
