"""Sigma-point Gaussian filtering primitives.

Prediction and measurement moments are evaluated with the scaled unscented
transform (2n+1 points, Wan / van der Merwe weights). The measurement scatter
``U`` excludes measurement noise; an effective noise covariance is added only
inside :func:`kalman_update`, so the same moments can be reused while the
noise model changes between inference iterations.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .numerics import NumericalError, cholesky_with_jitter, symmetrize
from .ssm import MeasurementModel, ProcessModel

__all__ = [
    "GaussianBelief",
    "SigmaPointSet",
    "MeasurementMoments",
    "UkfParams",
    "sigma_points",
    "predict",
    "measurement_moments",
    "kalman_update",
    "posterior_residual_moment",
]


@dataclass(frozen=True)
class GaussianBelief:
    """Gaussian state density N(mean, cov)."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        n = mean.shape[0]
        if mean.ndim != 1 or cov.shape != (n, n):
            raise ValueError("mean must be a vector and cov an n x n matrix")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise ValueError("belief must be finite")
        scale = max(np.abs(cov).max(), 1.0)
        if np.abs(cov - cov.T).max() > 1e-10 * scale:
            raise ValueError("cov must be symmetric")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class UkfParams:
    """Spread parameters of the scaled unscented transform."""

    alpha: float = 1.0
    beta: float = 2.0
    kappa: float = 0.0


DEFAULT_UKF = UkfParams()


@dataclass(frozen=True)
class SigmaPointSet:
    """2n+1 sigma points with mean and covariance weights."""

    points: np.ndarray  # (2n+1, n)
    mean_weights: np.ndarray
    cov_weights: np.ndarray
    params: UkfParams


@dataclass(frozen=True)
class MeasurementMoments:
    """Predicted measurement mean, noise-free scatter and state cross-covariance."""

    mu: np.ndarray  # (m,)
    U: np.ndarray  # (m, m), excludes measurement noise
    C: np.ndarray  # (n, m)


def sigma_points(
    belief: GaussianBelief,
    alpha: float = 1.0,
    beta: float = 2.0,
    kappa: float = 0.0,
) -> SigmaPointSet:
    """Sigma points m, m +/- columns of sqrt((n+lam) P) with standard weights."""
    n = belief.dim
    lam = alpha * alpha * (n + kappa) - n
    scaled = cholesky_with_jitter((n + lam) * belief.cov)
    pts = np.empty((2 * n + 1, n))
    pts[0] = belief.mean
    pts[1 : n + 1] = belief.mean + scaled.T
    pts[n + 1 :] = belief.mean - scaled.T

    wm = np.full(2 * n + 1, 0.5 / (n + lam))
    wc = wm.copy()
    wm[0] = lam / (n + lam)
    wc[0] = lam / (n + lam) + (1.0 - alpha * alpha + beta)
    return SigmaPointSet(pts, wm, wc, UkfParams(alpha, beta, kappa))


def _propagate(pts: np.ndarray, fn) -> np.ndarray:
    out = np.array([fn(p) for p in pts], dtype=float)
    if not np.all(np.isfinite(out)):
        raise NumericalError("propagated sigma point is not finite")
    return out


def predict(
    belief: GaussianBelief, model: ProcessModel, ukf: UkfParams = DEFAULT_UKF
) -> GaussianBelief:
    """Predictive moments through the process model, plus process noise."""
    sp = sigma_points(belief, ukf.alpha, ukf.beta, ukf.kappa)
    fx = _propagate(sp.points, model.transition)
    mean = sp.mean_weights @ fx
    dev = fx - mean
    cov = (dev.T * sp.cov_weights) @ dev + model.process_noise_cov
    return GaussianBelief(mean, symmetrize(cov))


def measurement_moments(
    belief: GaussianBelief, model: MeasurementModel, ukf: UkfParams = DEFAULT_UKF
) -> MeasurementMoments:
    """Measurement mean mu, noise-free scatter U and cross-covariance C."""
    sp = sigma_points(belief, ukf.alpha, ukf.beta, ukf.kappa)
    hx = _propagate(sp.points, model.observation)
    mu = sp.mean_weights @ hx
    hdev = hx - mu
    u = (hdev.T * sp.cov_weights) @ hdev
    xdev = sp.points - belief.mean
    c = (xdev.T * sp.cov_weights) @ hdev
    return MeasurementMoments(mu, symmetrize(u), c)


def kalman_update(
    belief: GaussianBelief,
    y: np.ndarray,
    mom: MeasurementMoments,
    r_eff: np.ndarray,
) -> GaussianBelief:
    """Kalman-form update with effective measurement noise ``r_eff``.

    The gain solve goes through a Cholesky factorization of (U + r_eff); an
    explicit inverse is never formed.
    """
    y = np.asarray(y, dtype=float)
    s = symmetrize(mom.U + r_eff)
    try:
        factor = cho_factor(s, lower=True)
    except np.linalg.LinAlgError as exc:
        cond = np.linalg.cond(s)
        raise NumericalError(
            f"innovation covariance not factorizable (condition number {cond:.3e})"
        ) from exc
    gain = cho_solve(factor, mom.C.T).T  # C (U + R)^-1
    mean = belief.mean + gain @ (y - mom.mu)
    cov = belief.cov - mom.C @ gain.T
    return GaussianBelief(mean, symmetrize(cov))


def posterior_residual_moment(
    belief_post: GaussianBelief,
    model: MeasurementModel,
    y: np.ndarray,
    ukf: UkfParams = DEFAULT_UKF,
) -> np.ndarray:
    """Expected residual outer product E[(y - h(x))(y - h(x))^T] under the
    posterior, by mean-weighted sigma-point quadrature of the full product.

    Mean weights make the rule exact for affine h: the result is then
    (y - H m)(y - H m)^T + H P H^T.
    """
    y = np.asarray(y, dtype=float)
    sp = sigma_points(belief_post, ukf.alpha, ukf.beta, ukf.kappa)
    hx = _propagate(sp.points, model.observation)
    res = y - hx
    w = (res.T * sp.mean_weights) @ res
    return symmetrize(w)
