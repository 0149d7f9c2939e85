"""State-space model containers and the planar coordinated-turn model."""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "ProcessModel",
    "MeasurementModel",
    "CoordinatedTurnParams",
    "coordinated_turn_transition",
    "coordinated_turn_Q",
]

# Below this |omega| the turn-rate formulas switch to their Taylor limits so
# the transition stays continuous through omega = 0.
SMALL_OMEGA = 1e-8


@dataclass(frozen=True)
class ProcessModel:
    """Nonlinear process model: x' = transition(x) + q, q ~ N(0, Q).

    ``transition`` must be deterministic and total on its domain; ``process_noise_cov``
    must be symmetric PSD.
    """

    transition: Callable[[np.ndarray], np.ndarray]
    process_noise_cov: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.process_noise_cov, dtype=float)
        object.__setattr__(self, "process_noise_cov", q)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise ValueError("process_noise_cov must be square")
        scale = max(np.abs(q).max(), 1.0)
        if np.abs(q - q.T).max() > 1e-12 * scale:
            raise ValueError("process_noise_cov must be symmetric")
        eig = np.linalg.eigvalsh(q)
        if eig.min() < -1e-12 * max(np.trace(q), 1.0):
            raise ValueError("process_noise_cov must be positive semi-definite")


@dataclass(frozen=True)
class MeasurementModel:
    """Nonlinear measurement model: y = observation(x) + r, r ~ N(0, R_nom)."""

    observation: Callable[[np.ndarray], np.ndarray]
    nominal_noise_cov: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.nominal_noise_cov, dtype=float)
        object.__setattr__(self, "nominal_noise_cov", r)
        if r.ndim != 2 or r.shape[0] != r.shape[1]:
            raise ValueError("nominal_noise_cov must be square")
        scale = max(np.abs(r).max(), 1.0)
        if np.abs(r - r.T).max() > 1e-12 * scale:
            raise ValueError("nominal_noise_cov must be symmetric")
        if np.linalg.eigvalsh(r).min() <= 0.0:
            raise ValueError("nominal_noise_cov must be positive definite")


@dataclass(frozen=True)
class CoordinatedTurnParams:
    """Sampling period and process-noise intensities of the coordinated-turn model."""

    sampling_period: float = 1.0
    eta1: float = 0.1
    eta2: float = 1.75e-4

    def __post_init__(self):
        if self.sampling_period <= 0.0:
            raise ValueError("sampling_period must be > 0")
        if self.eta1 < 0.0 or self.eta2 < 0.0:
            raise ValueError("noise intensities must be >= 0")


def coordinated_turn_transition(x: np.ndarray, params: CoordinatedTurnParams) -> np.ndarray:
    """One step of the constant-turn-rate motion model.

    State layout is [x, vx, y, vy, omega]. For |omega| < 1e-8 the
    omega-dependent entries use second-order Taylor expansions so the map is
    continuous at omega = 0.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (5,):
        raise ValueError(f"state must be a 5-vector, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("state must be finite")

    zeta = params.sampling_period
    omega = x[4]
    if abs(omega) < SMALL_OMEGA:
        wz = omega * zeta
        # sin(wz)/w -> zeta, (cos(wz)-1)/w -> 0 as omega -> 0
        s_over = zeta * (1.0 - wz * wz / 6.0)
        cm1_over = -0.5 * omega * zeta * zeta * (1.0 - wz * wz / 12.0)
        cos_wz = 1.0 - 0.5 * wz * wz
        sin_wz = wz * (1.0 - wz * wz / 6.0)
    else:
        wz = omega * zeta
        sin_wz = np.sin(wz)
        # cos(x) - 1 as -2 sin^2(x/2) avoids cancellation for small x
        cos_minus_1 = -2.0 * np.sin(0.5 * wz) ** 2
        cos_wz = 1.0 + cos_minus_1
        s_over = sin_wz / omega
        cm1_over = cos_minus_1 / omega

    return np.array(
        [
            x[0] + s_over * x[1] + cm1_over * x[3],
            cos_wz * x[1] - sin_wz * x[3],
            -cm1_over * x[1] + x[2] + s_over * x[3],
            sin_wz * x[1] + cos_wz * x[3],
            omega,
        ]
    )


def coordinated_turn_Q(params: CoordinatedTurnParams) -> np.ndarray:
    """Process noise covariance: block-diag(eta1*M, eta1*M, eta2) with
    M = [[z^3/3, z^2/2], [z^2/2, z]]."""
    z = params.sampling_period
    m = np.array([[z**3 / 3.0, z**2 / 2.0], [z**2 / 2.0, z]])
    q = np.zeros((5, 5))
    q[0:2, 0:2] = params.eta1 * m
    q[2:4, 2:4] = params.eta1 * m
    q[4, 4] = params.eta2
    return q
