"""Outlier-robust sigma-point filtering under correlated measurement noise.

The filter treats each measurement dimension's outlier state as a positive
latent indicator with a spike at 1 (nominal) and a Gamma branch whose rate is
learned online through its conjugate prior. Detection and state estimation
alternate in an expectation-maximization loop around a standard unscented
update. The package also ships the coordinated-turn / range-difference
tracking scenario used to benchmark the filter against plain and
oracle-knowledge baselines.
"""

from .bench import (
    FILTER_NAMES,
    RunResult,
    SweepSpec,
    compute_rmse,
    run_once,
    run_sweep,
    summarize,
)
from .filters import (
    FilterConfig,
    StepDiagnostics,
    converged,
    emorf2_step,
    frozen_b_step,
    ideal_ukf_step,
    plain_ukf_step,
)
from .gaussian import (
    GaussianBelief,
    MeasurementMoments,
    SigmaPointSet,
    UkfParams,
    kalman_update,
    measurement_moments,
    posterior_residual_moment,
    predict,
    sigma_points,
)
from .noise import (
    IndicatorVector,
    OutlierModelParams,
    build_R,
    indicator_decision,
    invert_R,
    log_gamma,
    update_b,
)
from .numerics import NumericalError
from .simulator import (
    GroundTruthRecord,
    ScenarioConfig,
    nominal_R,
    read_record,
    scenario_models,
    sensor_positions,
    simulate,
    tdoa_measurement,
    write_record,
)
from .ssm import (
    CoordinatedTurnParams,
    MeasurementModel,
    ProcessModel,
    coordinated_turn_Q,
    coordinated_turn_transition,
)

__version__ = "0.1.0"
