"""Shared numerical helpers: symmetrization, guarded Cholesky, error type."""

import numpy as np

__all__ = ["NumericalError", "symmetrize", "cholesky_with_jitter"]


class NumericalError(RuntimeError):
    """Raised when a linear-algebra step fails beyond recovery (singular
    innovation covariance, non-factorizable covariance, non-finite terms)."""


def symmetrize(a: np.ndarray) -> np.ndarray:
    """Return (A + A.T)/2; suppresses round-off asymmetry after updates."""
    return 0.5 * (a + a.T)


def cholesky_with_jitter(p: np.ndarray, attempts: int = 3) -> np.ndarray:
    """Lower Cholesky factor of an SPD matrix, retrying with escalating jitter.

    Each retry adds ``10**k * 1e-12 * trace(P)`` to the diagonal, k = 0..attempts-1.
    A zero matrix has zero trace, so it can never be rescued and raises.
    """
    trace = float(np.trace(p))
    try:
        return np.linalg.cholesky(p)
    except np.linalg.LinAlgError:
        pass
    for k in range(attempts):
        jitter = (10.0**k) * 1e-12 * trace
        try:
            return np.linalg.cholesky(p + jitter * np.eye(p.shape[0]))
        except np.linalg.LinAlgError:
            continue
    raise NumericalError(
        f"covariance not positive definite after {attempts} jitter attempts "
        f"(trace={trace:.3e})"
    )
