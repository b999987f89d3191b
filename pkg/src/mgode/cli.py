"""Batch front end: run configured solve/dual/estimate/adapt pipelines and
write plot-ready artifacts.

One JSON config describes one run; outputs are deterministic (byte-identical
for identical configs): trajectory.csv, dual.csv, error_report.json,
adapt_log.jsonl and partition.json in the output directory.  Exit status is
0 on success, 2 when the tolerance was not met within the round budget, and
1 on configuration or solver errors.
"""

from __future__ import annotations

import argparse
import importlib
import json
import sys
from pathlib import Path

import numpy as np
from jsonschema import Draft202012Validator

from . import __version__
from .controller import AdaptSettings, adapt
from .models import model, model_names
from .partition import build_partition
from .solver import OdeProblem, SolveSettings, SolverError, Trajectory
from .tableau import MAX_ORDER, MCG, MDG, TableauError, tableau

_NUMBER = {"type": "number"}
_STEP_SPEC = {
    "oneOf": [
        {"type": "number", "exclusiveMinimum": 0},
        {"type": "array", "minItems": 1, "items": {
            "oneOf": [
                {"type": "number", "exclusiveMinimum": 0},
                {"type": "array", "minItems": 1,
                 "items": {"type": "number", "exclusiveMinimum": 0}},
            ]}},
    ]
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["steps", "orders"],
    "properties": {
        "model": {"type": "string"},
        "problem_import": {"type": "string"},
        "T": {"type": "number", "exclusiveMinimum": 0},
        "u0": {"type": "array", "items": _NUMBER, "minItems": 1},
        "methods": {
            "oneOf": [
                {"type": "string", "enum": [MCG, MDG]},
                {"type": "array", "minItems": 1,
                 "items": {"type": "string", "enum": [MCG, MDG]}},
            ]
        },
        "orders": {
            "oneOf": [
                {"type": "integer", "minimum": 0, "maximum": MAX_ORDER},
                {"type": "array", "minItems": 1, "items": {
                    "oneOf": [
                        {"type": "integer", "minimum": 0, "maximum": MAX_ORDER},
                        {"type": "array", "minItems": 1,
                         "items": {"type": "integer", "minimum": 0,
                                   "maximum": MAX_ORDER}},
                    ]}},
            ]
        },
        "steps": _STEP_SPEC,
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "tolerance": {"type": "number", "exclusiveMinimum": 0},
                "max_sweeps": {"type": "integer", "minimum": 1},
                "damping": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "quad_depth": {"type": "integer", "minimum": 0},
            },
        },
        "dual": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "phi_T": {
                    "oneOf": [
                        {"type": "string", "enum": ["unit"]},
                        {"type": "array", "items": _NUMBER, "minItems": 1},
                    ]
                },
                "order_increment": {"type": "integer", "minimum": 0},
                "refine": {"type": "integer", "minimum": 1},
                "s_points": {"type": "integer", "minimum": 1},
            },
        },
        "adapt": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "theta": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "max_rounds": {"type": "integer", "minimum": 1},
                "k_min": {"type": "number", "exclusiveMinimum": 0},
                "k_max": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "out": {"type": "string"},
    },
}


class ConfigError(ValueError):
    pass


def load_config(path: Path) -> dict:
    """Parse and schema-check one run configuration."""
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}"
        ) from exc
    validator = Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        msgs = []
        for err in errors[:5]:
            where = "$" + "".join(
                f".{p}" if isinstance(p, str) else f"[{p}]"
                for p in err.absolute_path
            )
            msgs.append(f"{path}: at {where}: {err.message}")
        raise ConfigError("\n".join(msgs))
    if ("model" in data) == ("problem_import" in data):
        raise ConfigError(
            f"{path}: exactly one of 'model' or 'problem_import' is required"
        )
    return data


def _resolve_problem(config: dict) -> OdeProblem:
    if "model" in config:
        try:
            entry = model(config["model"])
        except KeyError as exc:
            raise ConfigError(str(exc)) from exc
        problem = entry.problem(
            T=config.get("T"),
            u0=config.get("u0"),
            methods=config.get("methods", MCG),
        )
    else:
        mod_name, _, attr = config["problem_import"].partition(":")
        if not attr:
            raise ConfigError(
                "problem_import must look like 'package.module:attribute'"
            )
        try:
            factory = getattr(importlib.import_module(mod_name), attr)
        except (ImportError, AttributeError) as exc:
            raise ConfigError(f"cannot import {config['problem_import']}: {exc}") from exc
        problem = factory()
        if not isinstance(problem, OdeProblem):
            raise ConfigError(
                f"{config['problem_import']} did not produce an ODE problem"
            )
        if "methods" in config:
            problem.methods = config["methods"]
            problem.__post_init__()
        if "T" in config:
            problem.T = float(config["T"])
        if "u0" in config:
            problem.u0 = np.asarray(config["u0"], dtype=float)
    return problem


def _float_str(x: float) -> str:
    """Shortest round-trip decimal representation (<= 17 significant digits)."""
    return repr(float(x))


def _write_trajectory_csv(path: Path, traj: Trajectory) -> None:
    lines = ["component,interval,node_time,value"]
    for i in range(traj.dimension):
        for j in range(traj.partition.n_intervals(i)):
            times = traj.node_times(i, j)
            vals = traj.coefficients(i, j)
            for t, v in zip(times, vals):
                lines.append(f"{i},{j},{_float_str(t)},{_float_str(v)}")
    path.write_text("\n".join(lines) + "\n")


def _trajectory_json_dict(traj: Trajectory, dual: bool = False) -> dict:
    return {
        "dual": dual,
        "T": traj.T,
        "methods": list(traj.methods),
        "components": [
            {
                "breakpoints": [float(t) for t in traj.partition.breakpoints[i]],
                "orders": [int(q) for q in traj.partition.orders[i]],
                "coefficients": [
                    [float(v) for v in traj.coefficients(i, j)]
                    for j in range(traj.partition.n_intervals(i))
                ],
            }
            for i in range(traj.dimension)
        ],
    }


def run_command(args) -> int:
    try:
        config = load_config(Path(args.config))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    out_dir = Path(args.out or config.get("out", "."))
    out_dir.mkdir(parents=True, exist_ok=True)

    try:
        problem = _resolve_problem(config)
        solver_settings = SolveSettings(**config.get("solver", {}))
        partition = build_partition(config["steps"], config["orders"],
                                    problem.T, methods=problem.methods)
        dual_cfg = config.get("dual", {})
        phi_T = dual_cfg.get("phi_T", "unit")
        if isinstance(phi_T, str):
            phi_T = None  # unit default handled by the adaptation loop
        else:
            phi_T = np.asarray(phi_T, dtype=float)
        adapt_cfg = config.get("adapt", {})
        settings = AdaptSettings(
            tol=adapt_cfg.get("tol", float("inf")),
            theta=adapt_cfg.get("theta", 0.5),
            max_rounds=adapt_cfg.get("max_rounds", 1),
            k_min=adapt_cfg.get("k_min", 1e-8),
            k_max=adapt_cfg.get("k_max", problem.T),
            dual_order_increment=dual_cfg.get("order_increment", 1),
            dual_refine=dual_cfg.get("refine", 1),
            phi_T=phi_T,
            s_points=dual_cfg.get("s_points", 3),
            solver=solver_settings,
        )
        result = adapt(problem, partition, settings)

        # re-solve the final dual for export
        from .dual import DualSpec, dual_partition_for, solve_dual

        phi_T_eff = settings.phi_T
        if phi_T_eff is None:
            n = problem.dimension
            phi_T_eff = np.full(n, 1.0 / np.sqrt(n))
        dual = solve_dual(
            DualSpec(problem=problem, primal=result.trajectory,
                     phi_T=phi_T_eff, s_points=settings.s_points),
            dual_partition_for(result.partition, settings.dual_order_increment,
                               settings.dual_refine),
            solver_settings,
        )
    except (ConfigError, ValueError, TableauError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 1

    _write_trajectory_csv(out_dir / "trajectory.csv", result.trajectory)
    _write_trajectory_csv(out_dir / "dual.csv", dual.export_trajectory())
    (out_dir / "error_report.json").write_text(
        json.dumps(result.report.to_json_dict(), indent=2) + "\n")
    rows = result.report.csv_summary_rows()
    header = ",".join(rows[0].keys())
    lines = [header] + [
        ",".join(_float_str(v) if isinstance(v, float) else str(v)
                 for v in row.values())
        for row in rows
    ]
    (out_dir / "error_summary.csv").write_text("\n".join(lines) + "\n")
    (out_dir / "adapt_log.jsonl").write_text(
        "".join(line + "\n" for line in result.log_lines()))
    (out_dir / "partition.json").write_text(
        json.dumps(result.partition.to_json_dict(), indent=2) + "\n")
    (out_dir / "trajectory.json").write_text(
        json.dumps(_trajectory_json_dict(result.trajectory), indent=2) + "\n")
    (out_dir / "dual.json").write_text(
        json.dumps(_trajectory_json_dict(dual.export_trajectory(), dual=True),
                   indent=2) + "\n")

    if not result.met:
        print(f"tolerance not met after {result.rounds} rounds "
              f"(bound {result.report.explicit_total:.6e})", file=sys.stderr)
        return 2
    return 0


def tableau_command(args) -> int:
    try:
        tab = tableau(args.method, args.q)
    except (ValueError, TableauError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(tab.to_json_dict(), indent=2))
    return 0


def models_command(args) -> int:
    from .models import _CATALOG

    for name in model_names():
        entry = _CATALOG[name]
        print(f"{name}: dimension {entry.dimension}; {entry.description}")
    return 0


def version_command(args) -> int:
    print(__version__)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mgode",
        description="Multirate Galerkin ODE solver with global error control",
    )
    parser.add_argument("--threads", type=int, default=0,
                        help="worker threads (0 = auto); the reference "
                             "implementation runs sequentially")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a configured pipeline")
    p_run.add_argument("--config", required=True, help="path to a JSON run config")
    p_run.add_argument("--out", default=None, help="output directory override")
    p_run.set_defaults(fn=run_command)

    p_tab = sub.add_parser("tableau", help="dump one scheme tableau as JSON")
    p_tab.add_argument("method", choices=[MCG, MDG])
    p_tab.add_argument("q", type=int)
    p_tab.set_defaults(fn=tableau_command)

    p_models = sub.add_parser("models", help="list the built-in model catalog")
    p_models.set_defaults(fn=models_command)

    p_version = sub.add_parser("version", help="print the package version")
    p_version.set_defaults(fn=version_command)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
