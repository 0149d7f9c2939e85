"""Outlier model for correlated measurement noise.

Each measurement dimension i carries a positive indicator; exactly 1.0 means
the dimension is nominal. Any other value inflates that dimension's variance
to R_nom[i,i] / indicator and severs its correlations with every other
dimension, which makes the effective covariance block-structured: a dense
nominal block plus decoupled outlier diagonals. Detection compares the
posterior mass of the nominal branch against the integrated Gamma branch;
the learned Gamma rate tracks how strong recent outliers were.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .numerics import NumericalError, symmetrize

__all__ = [
    "IndicatorVector",
    "OutlierModelParams",
    "build_R",
    "invert_R",
    "indicator_decision",
    "update_b",
    "log_gamma",
]


@dataclass(frozen=True)
class IndicatorVector:
    """Per-dimension positive indicators; a value of exactly 1.0 marks a
    nominal dimension, anything else an outlier.

    The two prior branches are disjoint: nominal entries are stored as the
    literal 1.0, outlier values come out of the rate formula and are never
    exactly 1.0 in floating point except with negligible probability.
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.ndim != 1:
            raise ValueError("indicators must form a vector")
        if v.size and (not np.all(np.isfinite(v)) or v.min() <= 0.0):
            raise ValueError("indicators must be finite and > 0")

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    @property
    def nominal_mask(self) -> np.ndarray:
        return self.values == 1.0

    @classmethod
    def all_nominal(cls, m: int) -> "IndicatorVector":
        return cls(np.ones(m))


@dataclass(frozen=True)
class OutlierModelParams:
    """Gamma-branch hyperparameters and the current rate estimate.

    a: Gamma shape of the indicator prior (must exceed 0.5 so the outlier
       candidate (a - 0.5)/beta stays positive).
    b_hat: current rate estimate.
    A, B: shape/rate of the conjugate Gamma prior on the rate.
    theta: prior no-outlier probability per dimension; a scalar broadcasts
       over all dimensions.
    """

    a: float = 1.0
    b_hat: float = 10000.0
    A: float = 10000.0
    B: float = 1000.0
    theta: float | np.ndarray = 0.5

    def __post_init__(self):
        if self.a <= 0.5:
            raise ValueError("shape a must be > 0.5")
        if self.A <= 1.0:
            raise ValueError("hyper-shape A must be > 1")
        if self.B <= 0.0:
            raise ValueError("hyper-rate B must be > 0")
        if self.b_hat <= 0.0:
            raise ValueError("rate estimate b_hat must be > 0")
        th = np.asarray(self.theta, dtype=float)
        if np.any(th <= 0.0) or np.any(th >= 1.0):
            raise ValueError("theta must lie strictly inside (0, 1)")

    def theta_at(self, i: int) -> float:
        th = np.asarray(self.theta, dtype=float)
        return float(th[i]) if th.ndim else float(th)


def build_R(indicators: IndicatorVector, r_nom: np.ndarray) -> np.ndarray:
    """Effective measurement covariance for the given indicator pattern.

    Diagonal entries are R_nom[i,i]/ind[i]; the off-diagonal (i,j) keeps
    R_nom[i,j] only when both dimensions are nominal, else it is zero.
    """
    v = indicators.values
    nominal = indicators.nominal_mask
    keep = np.outer(nominal, nominal)
    r = np.where(keep, r_nom, 0.0)
    np.fill_diagonal(r, np.diag(r_nom) / v)
    return r


def invert_R(indicators: IndicatorVector, r_nom: np.ndarray) -> tuple[np.ndarray, float]:
    """Inverse and log-determinant of :func:`build_R`'s output, exploiting its
    block structure.

    Outlier dimensions are decoupled (inverse entry ind[i]/R_nom[i,i]); the
    nominal dimensions are inverted as one dense sub-block via Cholesky.
    """
    v = indicators.values
    nominal = indicators.nominal_mask
    m = v.shape[0]
    inv = np.zeros((m, m))
    log_det = 0.0

    out_idx = np.where(~nominal)[0]
    if out_idx.size:
        d = np.diag(r_nom)[out_idx]
        inv[out_idx, out_idx] = v[out_idx] / d
        log_det += float(np.sum(np.log(d / v[out_idx])))

    nom_idx = np.where(nominal)[0]
    if nom_idx.size:
        block = r_nom[np.ix_(nom_idx, nom_idx)]
        try:
            chol = np.linalg.cholesky(block)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("nominal sub-block is not positive definite") from exc
        log_det += 2.0 * float(np.sum(np.log(np.diag(chol))))
        ident = np.eye(nom_idx.size)
        chol_inv = np.linalg.solve(chol, ident)
        inv[np.ix_(nom_idx, nom_idx)] = chol_inv.T @ chol_inv
    return inv, log_det


def log_gamma(x: float) -> float:
    """Natural log of the Gamma function for x > 0."""
    if not (x > 0.0):
        raise ValueError("log_gamma requires x > 0")
    return float(gammaln(x))


def indicator_decision(
    i: int,
    indicators: IndicatorVector,
    w: np.ndarray,
    r_nom: np.ndarray,
    params: OutlierModelParams,
) -> float:
    """Decide dimension i's indicator given residual moment ``w``.

    Compares, in the log domain, the nominal-branch mass (full covariance with
    dimension i forced nominal and the others at their current estimates)
    against the integrated Gamma-branch mass (dimension i decoupled). Returns
    1.0 for the nominal branch, otherwise the Gamma-branch mode
    (a - 0.5)/(b_hat + 0.5 W[i,i]/R_nom[i,i]).
    """
    alpha = params.a + 0.5
    beta_i = params.b_hat + 0.5 * w[i, i] / r_nom[i, i]

    as_nominal = indicators.values.copy()
    as_nominal[i] = 1.0
    inv_h, logdet_h = invert_R(IndicatorVector(as_nominal), r_nom)
    theta_i = params.theta_at(i)
    ln_h = -0.5 * logdet_h - 0.5 * float(np.sum(w * inv_h)) + math.log(theta_i)

    keep = np.arange(indicators.dim) != i
    sub = IndicatorVector(indicators.values[keep])
    inv_g, logdet_g = invert_R(sub, r_nom[np.ix_(keep, keep)])
    trace_g = float(np.sum(w[np.ix_(keep, keep)] * inv_g))
    ln_g = (
        -0.5 * math.log(r_nom[i, i])
        - 0.5 * logdet_g
        - 0.5 * trace_g
        + math.log1p(-theta_i)
        + log_gamma(alpha)
        + params.a * math.log(params.b_hat)
        - log_gamma(params.a)
        - alpha * math.log(beta_i)
    )

    if not math.isfinite(ln_h):
        raise NumericalError(f"nominal-branch log mass is not finite (ln_h={ln_h})")
    if not math.isfinite(ln_g):
        raise NumericalError(f"outlier-branch log mass is not finite (ln_g={ln_g})")
    return 1.0 if ln_h - ln_g >= 0.0 else (alpha - 1.0) / beta_i


def update_b(indicators: IndicatorVector, params: OutlierModelParams) -> float:
    """Conjugate update of the Gamma rate from the current indicator pattern.

    Returns (M a + A - 1) / (B + sum of outlier indicator values), where M is
    the number of outlier dimensions.
    """
    outliers = indicators.values[~indicators.nominal_mask]
    a_bar = outliers.size * params.a + params.A
    b_bar = params.B + float(outliers.sum())
    if a_bar <= 1.0:
        raise ValueError("posterior shape must exceed 1 for a positive rate mode")
    return (a_bar - 1.0) / b_bar
