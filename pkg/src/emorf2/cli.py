"""Command-line entry point: simulate, single runs, sweeps, default config.

Configuration is JSON with four optional sections (``scenario``, ``filter``,
``run``, ``sweep``); every field is optional and falls back to the built-in
defaults printed by ``print-defaults``. Unknown keys are rejected. Machine
output goes to stdout, progress messages to stderr.
"""

import argparse
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .bench import (
    FILTER_NAMES,
    SweepSpec,
    run_once,
    run_sweep,
    write_boxplot_data,
    write_results_csv,
    write_summary_json,
)
from .filters import FilterConfig
from .gaussian import UkfParams
from .noise import OutlierModelParams
from .simulator import DEFAULT_X0, ScenarioConfig, simulate, write_record
from .ssm import CoordinatedTurnParams

__all__ = ["main", "default_config", "load_config"]

DEFAULT_CONFIG = {
    "scenario": {
        "num_sensors": 5,
        "lambda": 0.0,
        "gamma": 1000.0,
        "horizon": 100,
        "sigma_sq": 10.0,
        "zeta": 1.0,
        "eta1": 0.1,
        "eta2": 1.75e-4,
        "x0": list(DEFAULT_X0),
    },
    "filter": {
        "a": 1.0,
        "A": 10000.0,
        "B": 1000.0,
        "b0": 10000.0,
        "theta": 0.5,
        "convergence_threshold": 1e-4,
        "max_em_iterations": 100,
        "ukf_alpha": 1.0,
        "ukf_beta": 2.0,
        "ukf_kappa": 0.0,
    },
    "run": {"filter": "emorf2"},
    "sweep": {
        "variable": "lambda",
        "values": [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
        "mc_runs": 100,
        "filters": list(FILTER_NAMES),
    },
    "seed": 0,
}

FIGURE_PRESETS = {
    # lambda sweep at m=5, gamma=1000
    "fig1": {"variable": "lambda", "values": [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
             "num_sensors": 5, "gamma": 1000.0, "lambda": None},
    # sensor-count sweep at lambda=0.4, gamma=1000
    "fig2": {"variable": "m", "values": [5, 10, 15, 20],
             "num_sensors": None, "gamma": 1000.0, "lambda": 0.4},
    # same sweep, execution-time focus (run with --jobs 1 for clean numbers)
    "fig3": {"variable": "m", "values": [5, 10, 15, 20],
             "num_sensors": None, "gamma": 1000.0, "lambda": 0.4},
}


class ConfigError(ValueError):
    pass


def default_config() -> dict:
    return json.loads(json.dumps(DEFAULT_CONFIG))


def _merge_section(name: str, defaults: dict, given) -> dict:
    if not isinstance(given, dict):
        raise ConfigError(f"section '{name}' must be an object")
    merged = dict(defaults)
    for key, value in given.items():
        if key not in defaults:
            raise ConfigError(f"unknown key '{name}.{key}'")
        merged[key] = value
    return merged


def load_config(path: str | None) -> dict:
    """Load a JSON config file merged over the defaults; None gives defaults."""
    merged = default_config()
    if path is None:
        return merged
    try:
        with open(path) as fh:
            user = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(user, dict):
        raise ConfigError("config root must be an object")
    for key, value in user.items():
        if key == "seed":
            merged["seed"] = int(value)
        elif key in ("scenario", "filter", "run", "sweep"):
            merged[key] = _merge_section(key, merged[key], value)
        else:
            raise ConfigError(f"unknown key '{key}'")
    return merged


def scenario_from_config(cfg: dict) -> ScenarioConfig:
    s = cfg["scenario"]
    return ScenarioConfig(
        num_sensors=int(s["num_sensors"]),
        lam=float(s["lambda"]),
        gamma=float(s["gamma"]),
        horizon=int(s["horizon"]),
        sigma_sq=float(s["sigma_sq"]),
        ct_params=CoordinatedTurnParams(
            sampling_period=float(s["zeta"]), eta1=float(s["eta1"]), eta2=float(s["eta2"])
        ),
        x0=np.asarray(s["x0"], dtype=float),
        rng_seed=int(cfg["seed"]),
    )


def filter_from_config(cfg: dict) -> FilterConfig:
    f = cfg["filter"]
    theta = f["theta"]
    return FilterConfig(
        outlier_params=OutlierModelParams(
            a=float(f["a"]),
            b_hat=float(f["b0"]),
            A=float(f["A"]),
            B=float(f["B"]),
            theta=np.asarray(theta, dtype=float) if isinstance(theta, list) else float(theta),
        ),
        convergence_threshold=float(f["convergence_threshold"]),
        max_em_iterations=int(f["max_em_iterations"]),
        ukf=UkfParams(
            alpha=float(f["ukf_alpha"]), beta=float(f["ukf_beta"]), kappa=float(f["ukf_kappa"])
        ),
    )


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def cmd_print_defaults(_args) -> int:
    json.dump(DEFAULT_CONFIG, sys.stdout, indent=2)
    print()
    return 0


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    scenario = scenario_from_config(cfg)
    record = simulate(scenario)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_record(record, out)
    _log(f"wrote {record.horizon} steps to {out}")
    return 0


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    name = args.filters if args.filters else cfg["run"]["filter"]
    if name not in FILTER_NAMES:
        _log(f"error: unknown filter '{name}' (choose from {', '.join(FILTER_NAMES)})")
        return 2
    scenario = scenario_from_config(cfg)
    result = run_once(scenario, name, filter_from_config(cfg), int(cfg["seed"]))
    json.dump(
        {
            "filter": result.filter_name,
            "rmse": result.rmse,
            "em_iterations": result.em_iterations_total,
            "wall_time_s": result.wall_time,
            "seed": result.seed,
        },
        sys.stdout,
    )
    print()
    return 0


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed

    filters = tuple(cfg["sweep"]["filters"])
    if args.filters:
        filters = tuple(p.strip() for p in args.filters.split(",") if p.strip())
    unknown = set(filters) - set(FILTER_NAMES)
    if unknown:
        _log(f"error: unknown filters {sorted(unknown)}")
        return 2

    scenario = scenario_from_config(cfg)
    sweep_cfg = cfg["sweep"]
    if args.figure == "custom":
        variable = sweep_cfg["variable"]
        values = tuple(sweep_cfg["values"])
    else:
        preset = FIGURE_PRESETS[args.figure]
        variable = preset["variable"]
        values = tuple(preset["values"])
        scenario = replace(scenario, gamma=preset["gamma"])
        if preset["lambda"] is not None:
            scenario = replace(scenario, lam=preset["lambda"])
        if preset["num_sensors"] is not None:
            scenario = replace(scenario, num_sensors=preset["num_sensors"])

    spec = SweepSpec(
        variable=variable,
        values=values,
        base_config=scenario,
        filter_config=filter_from_config(cfg),
        mc_runs=int(sweep_cfg["mc_runs"]),
        filters=filters,
    )

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    _log(
        f"sweep {variable} over {list(values)}: {spec.mc_runs} runs x "
        f"{len(filters)} filters, jobs={args.jobs}"
    )
    t0 = time.perf_counter()
    result = run_sweep(
        spec, master_seed=int(cfg["seed"]), jobs=args.jobs, warmup=args.figure == "fig3"
    )
    _log(f"finished in {time.perf_counter() - t0:.1f} s")

    write_results_csv(result, outdir / "results.csv")
    write_summary_json(result, outdir / "summary.json")
    write_boxplot_data(result, outdir / "boxplot_rmse.txt", metric="rmse")
    write_boxplot_data(result, outdir / "boxplot_step_time.txt", metric="step_time")

    failed = len(result.failed)
    if failed:
        _log(f"{failed} of {result.expected_count} runs failed; see results.csv")
        return 1
    _log(f"all {result.expected_count} runs succeeded; outputs in {outdir}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="emorf2",
        description="Outlier-robust filtering benchmark for correlated TDOA noise.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="write a ground-truth record file")
    p_sim.add_argument("--config", default=None)
    p_sim.add_argument("--out", required=True, help="output file path")
    p_sim.add_argument("--seed", type=int, default=None)

    p_run = sub.add_parser("run", help="one filter over one trajectory; JSON to stdout")
    p_run.add_argument("--config", default=None)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--filters", default=None, help="filter name (overrides config)")

    p_sweep = sub.add_parser("sweep", help="Monte Carlo sweep; CSV/JSON/box-plot output")
    p_sweep.add_argument("--figure", choices=["fig1", "fig2", "fig3", "custom"], default="custom")
    p_sweep.add_argument("--config", default=None)
    p_sweep.add_argument("--out", required=True, help="output directory")
    p_sweep.add_argument("--seed", type=int, default=None)
    p_sweep.add_argument("--jobs", type=int, default=1)
    p_sweep.add_argument("--filters", default=None, help="comma-separated filter names")

    sub.add_parser("print-defaults", help="print the default config as JSON")

    args = parser.parse_args(argv)
    try:
        if args.command == "simulate":
            return cmd_simulate(args)
        if args.command == "run":
            return cmd_run(args)
        if args.command == "sweep":
            return cmd_sweep(args)
        return cmd_print_defaults(args)
    except ConfigError as exc:
        _log(f"error: {exc}")
        return 2
    except ValueError as exc:
        _log(f"error: {exc}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
