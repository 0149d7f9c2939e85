"""Monte Carlo benchmark harness: paired runs, sweeps, box-plot summaries.

Every (sweep value, run index) cell derives one seed from the master seed, so
all filters in a cell consume the same simulated data and the same initial
belief; a hash of the record is stored per row to make the pairing checkable.
Wall time covers filtering only, never simulation.
"""

import dataclasses
import hashlib
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .filters import (
    FilterConfig,
    emorf2_step,
    frozen_b_step,
    ideal_ukf_step,
    plain_ukf_step,
)
from .gaussian import GaussianBelief
from .numerics import NumericalError
from .simulator import (
    GroundTruthRecord,
    ScenarioConfig,
    scenario_models,
    sensor_positions,
    simulate,
)
from .ssm import coordinated_turn_Q

__all__ = [
    "FILTER_NAMES",
    "RunResult",
    "SweepSpec",
    "SweepRow",
    "SweepResult",
    "CellSummary",
    "initial_belief",
    "run_filter",
    "run_once",
    "compute_rmse",
    "run_sweep",
    "summarize",
    "write_results_csv",
    "write_summary_json",
    "write_boxplot_data",
]

FILTER_NAMES = ("emorf2", "frozen_b", "plain_ukf", "ideal_ukf")

try:
    from . import _fast

    _HAVE_FAST = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_FAST = False


@dataclass(frozen=True)
class RunResult:
    """Outcome of one filter on one simulated trajectory."""

    filter_name: str
    rmse: float
    wall_time: float
    em_iterations_total: int
    seed: int
    data_hash: str


@dataclass(frozen=True)
class SweepSpec:
    """A one-dimensional sweep over ``lambda`` or ``m`` (sensor count)."""

    variable: str
    values: tuple
    base_config: ScenarioConfig = field(default_factory=ScenarioConfig)
    filter_config: FilterConfig = field(default_factory=FilterConfig)
    mc_runs: int = 100
    filters: tuple = FILTER_NAMES

    def __post_init__(self):
        if self.variable not in ("lambda", "m"):
            raise ValueError("sweep variable must be 'lambda' or 'm'")
        if not self.values:
            raise ValueError("sweep needs at least one value")
        if self.mc_runs < 1:
            raise ValueError("mc_runs must be >= 1")
        unknown = set(self.filters) - set(FILTER_NAMES)
        if unknown:
            raise ValueError(f"unknown filters: {sorted(unknown)}")

    def config_for(self, value) -> ScenarioConfig:
        if self.variable == "lambda":
            return replace(self.base_config, lam=float(value))
        return replace(self.base_config, num_sensors=int(value))


@dataclass(frozen=True)
class SweepRow:
    """One (value, run, filter) cell entry; ``error`` is set on failure."""

    variable: str
    value: float
    run_index: int
    filter_name: str
    result: RunResult | None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.result is not None


@dataclass(frozen=True)
class SweepResult:
    spec: SweepSpec
    master_seed: int
    rows: tuple

    @property
    def succeeded(self) -> tuple:
        return tuple(r for r in self.rows if r.ok)

    @property
    def failed(self) -> tuple:
        return tuple(r for r in self.rows if not r.ok)

    @property
    def expected_count(self) -> int:
        return len(self.spec.values) * self.spec.mc_runs * len(self.spec.filters)


@dataclass(frozen=True)
class CellSummary:
    """Five-number summary of one (value, filter) cell."""

    variable: str
    value: float
    filter_name: str
    count: int
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float
    empty: bool = False


def compute_rmse(truth: np.ndarray, estimates: np.ndarray) -> float:
    """Position RMSE over a trajectory (state components 0 and 2)."""
    truth = np.asarray(truth, dtype=float)
    estimates = np.asarray(estimates, dtype=float)
    if truth.shape != estimates.shape:
        raise ValueError("truth and estimates must have equal shapes")
    dx = estimates[:, 0] - truth[:, 0]
    dy = estimates[:, 2] - truth[:, 2]
    return float(np.sqrt(np.mean(dx * dx + dy * dy)))


def _record_hash(record: GroundTruthRecord) -> str:
    digest = hashlib.sha256()
    digest.update(record.states.tobytes())
    digest.update(record.measurements.tobytes())
    digest.update(record.outlier_flags.tobytes())
    digest.update(record.toa_corrupt.tobytes())
    return digest.hexdigest()[:16]


def initial_belief(config: ScenarioConfig, init_seed: int) -> GaussianBelief:
    """Initial posterior: mean drawn from N(x0, Q), covariance Q."""
    q = coordinated_turn_Q(config.ct_params)
    rng = np.random.default_rng(np.random.SeedSequence(init_seed))
    mean = config.x0 + np.linalg.cholesky(q) @ rng.standard_normal(5)
    return GaussianBelief(mean, q)


def run_filter(
    record: GroundTruthRecord,
    config: ScenarioConfig,
    filter_name: str,
    cfg: FilterConfig,
    belief0: GaussianBelief,
    engine: str = "auto",
) -> tuple[np.ndarray, int]:
    """Filter a full trajectory; returns (estimates, total update iterations).

    ``engine`` chooses the implementation for the EM filters: "auto" uses the
    compiled path when available, "reference" forces the pure-Python one.
    Numerical failures propagate with the failing step index attached.
    """
    if filter_name not in FILTER_NAMES:
        raise ValueError(f"unknown filter {filter_name!r}")
    k_max = record.horizon

    if filter_name in ("emorf2", "frozen_b") and engine == "auto" and _HAVE_FAST:
        theta = np.broadcast_to(
            np.asarray(cfg.outlier_params.theta, dtype=float), (config.meas_dim,)
        ).copy()
        est, iters_total, status, failed_step = _fast.run_em_trajectory(
            record.measurements,
            belief0.mean,
            belief0.cov,
            np.ascontiguousarray(scenario_models(config)[1].nominal_noise_cov),
            sensor_positions(config.num_sensors),
            config.ct_params.sampling_period,
            coordinated_turn_Q(config.ct_params),
            theta,
            cfg.outlier_params.a,
            cfg.outlier_params.A,
            cfg.outlier_params.B,
            cfg.outlier_params.b_hat,
            cfg.convergence_threshold,
            cfg.max_em_iterations,
            filter_name == "emorf2",
            cfg.ukf.alpha,
            cfg.ukf.beta,
            cfg.ukf.kappa,
        )
        if status != 0:
            raise NumericalError(f"step {failed_step}: fast EM kernel failed (status {status})")
        return est, int(iters_total)

    process, meas = scenario_models(config)
    estimates = np.empty((k_max, 5))
    iters_total = 0
    belief = belief0
    for k in range(k_max):
        y = record.measurements[k]
        try:
            if filter_name == "emorf2":
                belief, diag = emorf2_step(belief, y, process, meas, cfg)
                iters_total += diag.em_iterations
            elif filter_name == "frozen_b":
                belief, diag = frozen_b_step(belief, y, process, meas, cfg)
                iters_total += diag.em_iterations
            elif filter_name == "plain_ukf":
                belief = plain_ukf_step(belief, y, process, meas, cfg)
                iters_total += 1
            else:
                belief = ideal_ukf_step(
                    belief, y, process, meas, record.outlier_flags[k], cfg
                )
                iters_total += 1
        except NumericalError as exc:
            raise NumericalError(f"step {k}: {exc}") from exc
        estimates[k] = belief.mean
    return estimates, iters_total


def run_once(
    config: ScenarioConfig,
    filter_name: str,
    cfg: FilterConfig,
    seed: int,
    engine: str = "auto",
) -> RunResult:
    """Simulate once and filter once; wall time measures filtering only."""
    sim_seed, init_seed = (int(s) for s in np.random.SeedSequence(seed).generate_state(2))
    run_config = replace(config, rng_seed=sim_seed)
    record = simulate(run_config)
    belief0 = initial_belief(run_config, init_seed)

    t0 = time.perf_counter()
    estimates, iters_total = run_filter(record, run_config, filter_name, cfg, belief0, engine)
    wall = time.perf_counter() - t0

    return RunResult(
        filter_name=filter_name,
        rmse=compute_rmse(record.states, estimates),
        wall_time=max(wall, 1e-12),
        em_iterations_total=iters_total,
        seed=seed,
        data_hash=_record_hash(record),
    )


def _cell_seed(master_seed: int, value_index: int, run_index: int) -> int:
    return int(np.random.SeedSequence([master_seed, value_index, run_index]).generate_state(1)[0])


def _run_cell(args) -> list:
    spec, master_seed, value_index, run_index = args
    value = spec.values[value_index]
    config = spec.config_for(value)
    seed = _cell_seed(master_seed, value_index, run_index)
    rows = []
    for name in spec.filters:
        try:
            result = run_once(config, name, spec.filter_config, seed)
            rows.append(SweepRow(spec.variable, float(value), run_index, name, result))
        except Exception as exc:  # failed runs stay accounted for
            rows.append(
                SweepRow(spec.variable, float(value), run_index, name, None, str(exc))
            )
    return rows


def run_sweep(
    spec: SweepSpec,
    master_seed: int = 0,
    jobs: int = 1,
    warmup: bool = False,
) -> SweepResult:
    """Run all (value, run, filter) combinations with derived seeds.

    ``warmup`` executes one discarded run per (value, filter) before the
    recorded ones; use it together with ``jobs=1`` for clean timing.
    """
    if warmup:
        for vi, value in enumerate(spec.values):
            config = spec.config_for(value)
            seed = _cell_seed(master_seed, vi, spec.mc_runs)
            for name in spec.filters:
                try:
                    run_once(config, name, spec.filter_config, seed)
                except Exception:
                    pass

    tasks = [
        (spec, master_seed, vi, run)
        for vi in range(len(spec.values))
        for run in range(spec.mc_runs)
    ]
    rows: list[SweepRow] = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for chunk in pool.map(_run_cell, tasks, chunksize=4):
                rows.extend(chunk)
    else:
        for task in tasks:
            rows.extend(_run_cell(task))

    order = {name: i for i, name in enumerate(spec.filters)}
    values_order = {float(v): i for i, v in enumerate(spec.values)}
    rows.sort(key=lambda r: (values_order[r.value], r.run_index, order[r.filter_name]))
    return SweepResult(spec=spec, master_seed=master_seed, rows=tuple(rows))


def summarize(result: SweepResult) -> list[CellSummary]:
    """Five-number summary (min, quartiles, max) of RMSE per (value, filter)."""
    summaries = []
    for value in result.spec.values:
        for name in result.spec.filters:
            cell = [
                r.result.rmse
                for r in result.rows
                if r.ok and r.value == float(value) and r.filter_name == name
            ]
            if not cell:
                summaries.append(
                    CellSummary(
                        result.spec.variable, float(value), name, 0,
                        float("nan"), float("nan"), float("nan"), float("nan"), float("nan"),
                        empty=True,
                    )
                )
                continue
            arr = np.asarray(cell)
            q1, med, q3 = np.percentile(arr, [25.0, 50.0, 75.0])
            summaries.append(
                CellSummary(
                    result.spec.variable, float(value), name, arr.size,
                    float(arr.min()), float(q1), float(med), float(q3), float(arr.max()),
                )
            )
    return summaries


def write_results_csv(result: SweepResult, path) -> None:
    """One row per (value, run, filter). ``wall_time_s`` is the only
    non-deterministic column for a fixed master seed."""
    with open(path, "w") as fh:
        fh.write(
            "variable,value,run,filter,seed,status,rmse,em_iterations,data_hash,wall_time_s,error\n"
        )
        for r in result.rows:
            if r.ok:
                fh.write(
                    f"{r.variable},{r.value!r},{r.run_index},{r.filter_name},"
                    f"{r.result.seed},ok,{r.result.rmse!r},{r.result.em_iterations_total},"
                    f"{r.result.data_hash},{r.result.wall_time!r},\n"
                )
            else:
                msg = (r.error or "").replace(",", ";").replace("\n", " ")
                fh.write(
                    f"{r.variable},{r.value!r},{r.run_index},{r.filter_name},,failed,,,,,{msg}\n"
                )


def write_summary_json(result: SweepResult, path) -> None:
    import json

    payload = {
        "variable": result.spec.variable,
        "values": [float(v) for v in result.spec.values],
        "filters": list(result.spec.filters),
        "mc_runs": result.spec.mc_runs,
        "master_seed": result.master_seed,
        "rows_succeeded": len(result.succeeded),
        "rows_failed": len(result.failed),
        "rows_expected": result.expected_count,
        "cells": [dataclasses.asdict(c) for c in summarize(result)],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_boxplot_data(result: SweepResult, path, metric: str = "rmse") -> None:
    """Plain-text box-plot data: one column per (filter, value) cell, one row
    per run; failed runs leave a blank field. ``metric`` is ``rmse`` or
    ``step_time`` (wall time per step, seconds)."""
    if metric not in ("rmse", "step_time"):
        raise ValueError("metric must be 'rmse' or 'step_time'")
    horizon = result.spec.base_config.horizon
    cells = [
        (name, float(value))
        for name in result.spec.filters
        for value in result.spec.values
    ]
    columns = {}
    for name, value in cells:
        rows = [r for r in result.rows if r.filter_name == name and r.value == value]
        rows.sort(key=lambda r: r.run_index)
        vals = []
        for r in rows:
            if not r.ok:
                vals.append("")
            elif metric == "rmse":
                vals.append(repr(r.result.rmse))
            else:
                vals.append(repr(r.result.wall_time / horizon))
        columns[(name, value)] = vals
    depth = max((len(v) for v in columns.values()), default=0)
    with open(path, "w") as fh:
        fh.write("\t".join(f"{n}@{result.spec.variable}={v:g}" for n, v in cells) + "\n")
        for i in range(depth):
            fh.write(
                "\t".join(
                    columns[c][i] if i < len(columns[c]) else "" for c in cells
                )
                + "\n"
            )
