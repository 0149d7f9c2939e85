"""Ground-truth generation for the TDOA tracking scenario.

A target follows the coordinated-turn model; a zig-zag line of range sensors
produces range differences against sensor 1. Because every difference shares
the reference sensor, the nominal noise is fully correlated, and a corrupted
reference reading contaminates every measurement dimension at once. Outliers
are injected at the per-sensor (time-of-arrival) level with probability
``lam`` each, so a dimension is outlier-free with probability (1-lam)^2.
"""

from dataclasses import dataclass, field

import numpy as np

from .ssm import (
    CoordinatedTurnParams,
    MeasurementModel,
    ProcessModel,
    coordinated_turn_Q,
    coordinated_turn_transition,
)

__all__ = [
    "ScenarioConfig",
    "GroundTruthRecord",
    "sensor_positions",
    "tdoa_measurement",
    "nominal_R",
    "simulate",
    "scenario_models",
    "write_record",
    "read_record",
]

DEFAULT_X0 = (0.0, 1.0, 0.0, -1.0, -0.0524)


@dataclass(frozen=True)
class ScenarioConfig:
    """Complete description of one simulated tracking experiment."""

    num_sensors: int = 5
    lam: float = 0.0  # per-sensor corruption probability
    gamma: float = 1000.0  # outlier variance inflation
    horizon: int = 100
    sigma_sq: float = 10.0  # per-sensor range noise variance (all sensors equal)
    ct_params: CoordinatedTurnParams = field(default_factory=CoordinatedTurnParams)
    x0: np.ndarray = field(default_factory=lambda: np.array(DEFAULT_X0))
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float))
        if self.num_sensors < 2:
            raise ValueError("need at least two sensors (one reference)")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lam must lie in [0, 1]")
        if self.gamma <= 0.0:
            raise ValueError("gamma must be > 0")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.sigma_sq <= 0.0:
            raise ValueError("sigma_sq must be > 0")
        if self.x0.shape != (5,):
            raise ValueError("x0 must be a 5-vector")

    @property
    def meas_dim(self) -> int:
        return self.num_sensors - 1


@dataclass(frozen=True)
class GroundTruthRecord:
    """Simulated trajectory: states, measurements and outlier bookkeeping.

    ``outlier_flags[k, j]`` is True when measurement dimension j at step k
    contains an outlier; it equals ``toa_corrupt[k, 0] | toa_corrupt[k, j+1]``.
    """

    states: np.ndarray  # (K, 5)
    measurements: np.ndarray  # (K, m-1)
    outlier_flags: np.ndarray  # (K, m-1) bool
    toa_corrupt: np.ndarray  # (K, m) bool

    @property
    def horizon(self) -> int:
        return self.states.shape[0]


def sensor_positions(m: int) -> np.ndarray:
    """Zig-zag sensor layout: sensor i at (350(i-1), 350((i-1) mod 2))."""
    if m < 2:
        raise ValueError("need at least two sensors")
    idx = np.arange(m)
    return np.column_stack((350.0 * idx, 350.0 * (idx % 2)))


def tdoa_measurement(x: np.ndarray, positions: np.ndarray) -> np.ndarray:
    """Range differences against sensor 1 from state position (x[0], x[2]).

    The measurement itself is total; its gradient is singular exactly at a
    sensor location.
    """
    pos = np.asarray(positions, dtype=float)
    dists = np.hypot(x[0] - pos[:, 0], x[2] - pos[:, 1])
    return dists[0] - dists[1:]


def nominal_R(m: int, sigma_sq: float) -> np.ndarray:
    """Nominal TDOA noise covariance: sigma^2 on every off-diagonal (shared
    reference sensor) and 2 sigma^2 on the diagonal."""
    if m < 2:
        raise ValueError("need at least two sensors")
    d = m - 1
    return sigma_sq * (np.eye(d) + np.ones((d, d)))


def scenario_models(config: ScenarioConfig) -> tuple[ProcessModel, MeasurementModel]:
    """Process and measurement models matching the simulated scenario."""
    params = config.ct_params
    positions = sensor_positions(config.num_sensors)
    process = ProcessModel(
        transition=lambda x: coordinated_turn_transition(x, params),
        process_noise_cov=coordinated_turn_Q(params),
    )
    meas = MeasurementModel(
        observation=lambda x: tdoa_measurement(x, positions),
        nominal_noise_cov=nominal_R(config.num_sensors, config.sigma_sq),
    )
    return process, meas


def simulate(config: ScenarioConfig) -> GroundTruthRecord:
    """Generate one ground-truth record; bit-reproducible for a fixed seed."""
    rng = np.random.default_rng(np.random.SeedSequence(config.rng_seed))
    k_max = config.horizon
    m = config.num_sensors
    d = config.meas_dim
    positions = sensor_positions(m)

    chol_q = np.linalg.cholesky(coordinated_turn_Q(config.ct_params))
    chol_r = np.linalg.cholesky(nominal_R(m, config.sigma_sq))
    # Outlier magnitude variance gamma * (sigma_1^2 + sigma_j^2), all equal here.
    out_std = np.sqrt(config.gamma * (config.sigma_sq + config.sigma_sq))

    states = np.empty((k_max, 5))
    measurements = np.empty((k_max, d))
    toa_corrupt = np.empty((k_max, m), dtype=bool)

    x = config.x0
    for k in range(k_max):
        x = coordinated_turn_transition(x, config.ct_params) + chol_q @ rng.standard_normal(5)
        r = chol_r @ rng.standard_normal(d)
        corrupt = rng.random(m) < config.lam
        o = out_std * rng.standard_normal(d)
        flags = corrupt[0] | corrupt[1:]
        states[k] = x
        measurements[k] = tdoa_measurement(x, positions) + r + np.where(flags, o, 0.0)
        toa_corrupt[k] = corrupt

    outlier_flags = toa_corrupt[:, 0:1] | toa_corrupt[:, 1:]
    return GroundTruthRecord(states, measurements, outlier_flags, toa_corrupt)


# Columnar text format, one row per step:
#   k  x vx y vy omega  y_1..y_{m-1}  flag_1..flag_{m-1}  toa_1..toa_m
# Floats are written with repr so a round trip reproduces the exact bits.


def write_record(record: GroundTruthRecord, path) -> None:
    """Write a record in the columnar text format described above."""
    d = record.measurements.shape[1]
    m = record.toa_corrupt.shape[1]
    with open(path, "w") as fh:
        fh.write(f"# tdoa ground truth: steps={record.horizon} meas_dim={d} sensors={m}\n")
        fh.write(
            "# columns: k x vx y vy omega "
            + " ".join(f"y{j+1}" for j in range(d))
            + " "
            + " ".join(f"flag{j+1}" for j in range(d))
            + " "
            + " ".join(f"toa{i+1}" for i in range(m))
            + "\n"
        )
        for k in range(record.horizon):
            fields = [str(k)]
            fields += [repr(v) for v in record.states[k].tolist()]
            fields += [repr(v) for v in record.measurements[k].tolist()]
            fields += [str(int(v)) for v in record.outlier_flags[k]]
            fields += [str(int(v)) for v in record.toa_corrupt[k]]
            fh.write(" ".join(fields) + "\n")


def read_record(path) -> GroundTruthRecord:
    """Read a record written by :func:`write_record`."""
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("# tdoa ground truth:"):
            raise ValueError("not a ground-truth record file")
        meta = dict(part.split("=") for part in header.split(":", 1)[1].split())
        k_max, d, m = int(meta["steps"]), int(meta["meas_dim"]), int(meta["sensors"])
        fh.readline()  # column header
        states = np.empty((k_max, 5))
        measurements = np.empty((k_max, d))
        outlier_flags = np.empty((k_max, d), dtype=bool)
        toa_corrupt = np.empty((k_max, m), dtype=bool)
        row = -1
        for row, line in enumerate(fh):
            parts = line.split()
            if int(parts[0]) != row:
                raise ValueError(f"unexpected row index {parts[0]} at line {row + 3}")
            vals = parts[1:]
            states[row] = [float(v) for v in vals[0:5]]
            measurements[row] = [float(v) for v in vals[5 : 5 + d]]
            outlier_flags[row] = [bool(int(v)) for v in vals[5 + d : 5 + 2 * d]]
            toa_corrupt[row] = [bool(int(v)) for v in vals[5 + 2 * d : 5 + 2 * d + m]]
        if row + 1 != k_max:
            raise ValueError(f"expected {k_max} rows, found {row + 1}")
    return GroundTruthRecord(states, measurements, outlier_flags, toa_corrupt)
