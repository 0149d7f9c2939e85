"""Filter step functions: the EM outlier-robust step, a frozen-rate ablation,
and plain / oracle-knowledge UKF baselines.

Every step function is pure: it maps a prior belief and one measurement to a
posterior belief. Within a step, the EM loop re-initializes the indicator
pattern to all-nominal and the rate to its configured start value, then
alternates Gaussian state updates, the rate update, and a coordinate sweep of
per-dimension indicator decisions until the state estimate stops moving.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .gaussian import (
    GaussianBelief,
    UkfParams,
    kalman_update,
    measurement_moments,
    posterior_residual_moment,
    predict,
)
from .noise import IndicatorVector, OutlierModelParams, build_R, indicator_decision, update_b
from .ssm import MeasurementModel, ProcessModel

__all__ = [
    "FilterConfig",
    "StepDiagnostics",
    "converged",
    "emorf2_step",
    "frozen_b_step",
    "plain_ukf_step",
    "ideal_ukf_step",
]


@dataclass(frozen=True)
class FilterConfig:
    """EM loop settings: outlier-model start values, convergence threshold,
    iteration cap, and unscented-transform spread parameters."""

    outlier_params: OutlierModelParams = field(default_factory=OutlierModelParams)
    convergence_threshold: float = 1e-4
    max_em_iterations: int = 100
    ukf: UkfParams = field(default_factory=UkfParams)

    def __post_init__(self):
        if self.convergence_threshold <= 0.0:
            raise ValueError("convergence_threshold must be > 0")
        if self.max_em_iterations < 1:
            raise ValueError("max_em_iterations must be >= 1")


@dataclass(frozen=True)
class StepDiagnostics:
    """Per-step EM bookkeeping."""

    em_iterations: int
    converged: bool
    initial_indicators: IndicatorVector
    final_indicators: IndicatorVector
    final_b_hat: float
    convergence_history: list[float]


def converged(prev_mean: np.ndarray, new_mean: np.ndarray, threshold: float) -> bool:
    """Normalized l2 change below threshold; absolute norm if the previous
    mean is (numerically) zero."""
    return _change_norm(prev_mean, new_mean) < threshold


def _change_norm(prev_mean: np.ndarray, new_mean: np.ndarray) -> float:
    prev_mean = np.asarray(prev_mean, dtype=float)
    new_mean = np.asarray(new_mean, dtype=float)
    delta = float(np.linalg.norm(new_mean - prev_mean))
    scale = float(np.linalg.norm(prev_mean))
    if scale < 1e-12:
        return delta
    return delta / scale


def _em_step(
    prior_belief: GaussianBelief,
    y: np.ndarray,
    process: ProcessModel,
    meas: MeasurementModel,
    cfg: FilterConfig,
    learn_rate: bool,
) -> tuple[GaussianBelief, StepDiagnostics]:
    y = np.asarray(y, dtype=float)
    m = y.shape[0]
    r_nom = meas.nominal_noise_cov

    predicted = predict(prior_belief, process, cfg.ukf)
    # Measurement moments depend only on the predictive belief; the indicator
    # pattern enters through the effective noise added at the innovation step,
    # so they are computed once per time step.
    mom = measurement_moments(predicted, meas, cfg.ukf)

    indicators = IndicatorVector.all_nominal(m)
    params = cfg.outlier_params

    posterior = predicted
    prev_mean = predicted.mean
    history: list[float] = []
    has_converged = False
    iterations = 0

    for _ in range(cfg.max_em_iterations):
        iterations += 1
        posterior = kalman_update(predicted, y, mom, build_R(indicators, r_nom))
        w = posterior_residual_moment(posterior, meas, y, cfg.ukf)
        if learn_rate:
            params = replace(params, b_hat=update_b(indicators, params))
        values = indicators.values.copy()
        for i in range(m):
            values[i] = indicator_decision(i, IndicatorVector(values), w, r_nom, params)
        indicators = IndicatorVector(values)

        delta = _change_norm(prev_mean, posterior.mean)
        history.append(delta)
        if delta < cfg.convergence_threshold:
            has_converged = True
            break
        prev_mean = posterior.mean

    diag = StepDiagnostics(
        em_iterations=iterations,
        converged=has_converged,
        initial_indicators=IndicatorVector.all_nominal(m),
        final_indicators=indicators,
        final_b_hat=params.b_hat,
        convergence_history=history,
    )
    return posterior, diag


def emorf2_step(
    prior_belief: GaussianBelief,
    y: np.ndarray,
    process: ProcessModel,
    meas: MeasurementModel,
    cfg: FilterConfig,
) -> tuple[GaussianBelief, StepDiagnostics]:
    """One filtering step with joint outlier detection and rate learning.

    Runs prediction, then EM iterations of (state update with the current
    indicator pattern, rate update, indicator sweep) until the normalized
    mean change drops below the threshold or the iteration cap is reached.
    Hitting the cap is reported through the diagnostics, not raised.
    """
    return _em_step(prior_belief, y, process, meas, cfg, learn_rate=True)


def frozen_b_step(
    prior_belief: GaussianBelief,
    y: np.ndarray,
    process: ProcessModel,
    meas: MeasurementModel,
    cfg: FilterConfig,
) -> tuple[GaussianBelief, StepDiagnostics]:
    """Ablation of :func:`emorf2_step` that never updates the Gamma rate; the
    rate stays at its configured initial value for the whole step."""
    return _em_step(prior_belief, y, process, meas, cfg, learn_rate=False)


def plain_ukf_step(
    prior_belief: GaussianBelief,
    y: np.ndarray,
    process: ProcessModel,
    meas: MeasurementModel,
    cfg: FilterConfig,
) -> GaussianBelief:
    """Standard unscented predict/update with the nominal noise covariance."""
    predicted = predict(prior_belief, process, cfg.ukf)
    mom = measurement_moments(predicted, meas, cfg.ukf)
    return kalman_update(predicted, np.asarray(y, dtype=float), mom, meas.nominal_noise_cov)


def ideal_ukf_step(
    prior_belief: GaussianBelief,
    y: np.ndarray,
    process: ProcessModel,
    meas: MeasurementModel,
    true_outlier_flags: np.ndarray,
    cfg: FilterConfig,
) -> GaussianBelief:
    """Oracle baseline with perfect knowledge of outlier instances.

    Corrupted dimensions are deleted from the measurement, the observation
    function and the nominal covariance; the update then runs on the reduced
    measurement. With every dimension corrupted the prediction is returned
    unchanged.
    """
    flags = np.asarray(true_outlier_flags, dtype=bool)
    y = np.asarray(y, dtype=float)
    if flags.shape != y.shape:
        raise ValueError("flags must match the measurement dimension")

    predicted = predict(prior_belief, process, cfg.ukf)
    if flags.all():
        return predicted

    keep = ~flags
    observe = meas.observation
    reduced = MeasurementModel(
        observation=lambda x: np.asarray(observe(x), dtype=float)[keep],
        nominal_noise_cov=meas.nominal_noise_cov[np.ix_(keep, keep)],
    )
    mom = measurement_moments(predicted, reduced, cfg.ukf)
    return kalman_update(predicted, y[keep], mom, reduced.nominal_noise_cov)
