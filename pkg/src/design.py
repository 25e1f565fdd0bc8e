"""
G-optimal experimental design.

The design is solved with a Frank-Wolfe iteration over the probability
simplex, starting from the uniform design and moving mass toward the arm with
the largest predicted variance using the closed-form D-optimal step. The
result is then pruned and rounded to an integer number of pulls.
"""

import logging
import warnings
from typing import Optional, Sequence

import numpy as np

try:
    from .linalg import quad_norms_sq
    from .models import (
        AllPrunedError, ConvergenceWarning, DegenerateSpanError, DesignWeights,
        InsufficientBudgetError, PullAllocation, SingularMatrixError,
    )
except ImportError:
    from linalg import quad_norms_sq
    from models import (
        AllPrunedError, ConvergenceWarning, DegenerateSpanError, DesignWeights,
        InsufficientBudgetError, PullAllocation, SingularMatrixError,
    )


logger = logging.getLogger(__name__)

DEFAULT_EPSILON = 1.0
DEFAULT_MAX_ITER = 10_000
PRUNE_THRESHOLD = 1e-6


def design_matrix_from_weights(arms: np.ndarray, weights: Sequence[float]) -> np.ndarray:
    """V(pi) = sum_j pi_j a_j a_j^T."""
    X = np.atleast_2d(np.asarray(arms, dtype=float))
    w = np.asarray(weights, dtype=float)
    return X.T @ (w[:, None] * X)


def design_matrix(arms: np.ndarray, counts: PullAllocation) -> np.ndarray:
    """V = sum_j b_j a_j a_j^T for an integer allocation."""
    return design_matrix_from_weights(arms, counts.counts)


def g_value(arms: np.ndarray, weights: Sequence[float]) -> float:
    """Max over arms of a^T V(pi)^-1 a; infinite when V(pi) is singular."""
    X = np.atleast_2d(np.asarray(arms, dtype=float))
    try:
        return float(np.max(quad_norms_sq(design_matrix_from_weights(X, weights), X)))
    except SingularMatrixError:
        return float("inf")


def g_optimal_design(arms: np.ndarray, epsilon: float = DEFAULT_EPSILON,
                     max_iter: int = DEFAULT_MAX_ITER) -> DesignWeights:
    """
    Approximate G-optimal design by Frank-Wolfe.

    Stops once g(pi) <= (1 + epsilon) * d. If max_iter is reached first, the
    best iterate is returned with ``converged=False`` and a ConvergenceWarning.

    Args:
        arms: (n, d) array of arms spanning R^d (project first)
        epsilon: Relative accuracy, g <= (1 + epsilon) d on success
        max_iter: Iteration cap

    Returns:
        DesignWeights over the rows of ``arms``

    Raises:
        DegenerateSpanError: If the arms do not span R^d.
    """
    X = np.atleast_2d(np.asarray(arms, dtype=float))
    n, d = X.shape
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if n < d:
        raise DegenerateSpanError(f"{n} arms cannot span {d} dimensions")

    pi = np.full(n, 1.0 / n)
    V = design_matrix_from_weights(X, pi)
    try:
        norms = quad_norms_sq(V, X)
    except SingularMatrixError as e:
        raise DegenerateSpanError(f"arms do not span R^{d}: {e}")

    target = (1.0 + epsilon) * d
    best_pi, best_g = pi.copy(), float(norms.max())
    history = [best_g]
    iterations = 0
    converged = best_g <= target

    while not converged and iterations < max_iter:
        j = int(np.argmax(norms))
        g = float(norms[j])
        gamma = (g / d - 1.0) / (g - 1.0)
        pi *= 1.0 - gamma
        pi[j] += gamma
        V = (1.0 - gamma) * V + gamma * np.outer(X[j], X[j])
        norms = quad_norms_sq(V, X)
        iterations += 1

        g_now = float(norms.max())
        if g_now < best_g:
            best_pi, best_g = pi.copy(), g_now
        history.append(best_g)
        converged = best_g <= target

    # Kiefer-Wolfowitz: no design beats d.
    assert best_g >= d * (1.0 - 1e-9), f"g={best_g} below the lower bound {d}"

    if not converged:
        msg = (f"Frank-Wolfe stopped after {iterations} iterations with g={best_g:.4f} "
               f"(target {target:.4f})")
        logger.warning(msg)
        warnings.warn(msg, ConvergenceWarning)
    else:
        logger.debug(f"G-optimal design on {n} arms in R^{d}: g={best_g:.4f} after {iterations} iterations")

    best_pi = np.clip(best_pi, 0.0, None)
    best_pi /= best_pi.sum()
    return DesignWeights(
        weights=tuple(float(w) for w in best_pi),
        g_value=best_g,
        iterations=iterations,
        dim=d,
        converged=converged,
        history=tuple(history),
    )


def prune_support(w: DesignWeights, threshold: float, arms: np.ndarray) -> DesignWeights:
    """
    Drop weights below ``threshold`` and renormalize.

    The g value is recomputed on ``arms``; it is infinite when pruning removed
    an arm the span depended on, and callers must reject such a design.

    Raises:
        AllPrunedError: If every weight is below the threshold.
    """
    weights = np.asarray(w.weights, dtype=float)
    kept = np.where(weights >= threshold, weights, 0.0)
    if kept.sum() <= 0.0:
        raise AllPrunedError(f"every design weight is below {threshold}")
    if np.array_equal(kept, weights):
        return w
    kept /= kept.sum()
    g = g_value(arms, kept)
    return DesignWeights(
        weights=tuple(float(x) for x in kept),
        g_value=g,
        iterations=w.iterations,
        dim=w.dim,
        converged=w.converged and np.isfinite(g),
        history=w.history,
    )


def _spans(arms: np.ndarray, counts: np.ndarray, dim: int) -> bool:
    used = arms[counts > 0]
    return used.shape[0] >= dim and np.linalg.matrix_rank(used) == dim


def round_allocation(w: DesignWeights, b: int,
                     arms: Optional[np.ndarray] = None) -> PullAllocation:
    """
    Round b * pi to integer pulls summing exactly to b.

    Each arm first gets floor(b * pi); the leftover pulls go to the largest
    fractional remainders, ties to the lower position. Zero-weight arms get
    nothing. When ``arms`` is given and the rounded allocation does not span
    them, pulls are moved one at a time from the largest count to the
    highest-weight unallocated support arm until it does.

    Raises:
        InsufficientBudgetError: If b < 1.
    """
    if b < 1:
        raise InsufficientBudgetError(f"need at least one pull per round, got b={b}")
    weights = np.asarray(w.weights, dtype=float)
    support = [j for j in range(len(weights)) if weights[j] > 0.0]
    raw = b * weights
    counts = np.zeros(len(weights), dtype=int)
    counts[support] = np.floor(raw[support] + 1e-9).astype(int)
    remainder = {j: round(float(raw[j] - counts[j]), 9) for j in support}

    by_remainder = sorted(support, key=lambda j: (-remainder[j], j))
    left = b - int(counts.sum())
    for j in by_remainder[:max(left, 0)]:
        counts[j] += 1
    for j in reversed(by_remainder):
        if left >= 0:
            break
        if counts[j] > 0:
            counts[j] -= 1
            left += 1

    if arms is not None:
        counts = _correct_span(np.atleast_2d(np.asarray(arms, dtype=float)), weights, counts)

    return PullAllocation(counts=tuple(int(c) for c in counts), total=b)


def _correct_span(arms: np.ndarray, weights: np.ndarray, counts: np.ndarray) -> np.ndarray:
    dim = int(np.linalg.matrix_rank(arms))
    moves = 0
    while not _spans(arms, counts, dim):
        unallocated = [j for j in np.argsort(-weights, kind="stable")
                       if weights[j] > 0.0 and counts[j] == 0]
        if not unallocated or moves >= len(counts):
            logger.warning("allocation cannot be made to span the active arms")
            break
        donor = int(np.argmax(counts))
        counts[donor] -= 1
        counts[int(unallocated[0])] += 1
        moves += 1
    if moves:
        logger.warning(f"moved {moves} pull(s) so the allocation spans the active arms")
    return counts
