"""Command-line entry point: ``frozencsp <command> [flags]``.

Exit codes: 0 success, 2 bad input or config, 3 beyond desk scale,
4 an invariant check failed.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import CheckFailure, ConfigError, ContractError, CSPError, ScaleError
from .experiments import COMMANDS, csv_for

STOCHASTIC = {"sample", "core-scan", "freeze-scan", "greedy-solve"}
DEFAULTS = {"model": "2col", "trials": 1, "jobs": 1, "ell": [1], "json": False, "mode": "csp"}
CONFIG_KEYS = {"model", "k", "n", "r", "M", "trials", "seed", "jobs", "out", "json", "ell",
               "grid_steps", "r_grid", "budget", "max_expansions", "mode"}


def _int_list(text: str) -> list:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _float_list(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", help="built-in model name (2col, nae) or JSON model file")
    common.add_argument("--k", type=int, help="arity")
    common.add_argument("--n", type=int, help="number of variables")
    dens = common.add_mutually_exclusive_group()
    dens.add_argument("--r", type=float, help="clause density; M = round(r n)")
    dens.add_argument("--M", type=int, help="number of constraints")
    common.add_argument("--trials", type=int)
    common.add_argument("--seed", type=int, help="root seed (required for stochastic commands)")
    common.add_argument("--jobs", type=int, help="worker processes for independent trials")
    common.add_argument("--out", help="CSV output (instance file for sample)")
    common.add_argument("--json", action="store_const", const=True, default=None,
                        help="print the run summary as JSON")
    common.add_argument("--config", help="JSON file with the same keys as the flags")

    parser = argparse.ArgumentParser(prog="frozencsp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("thresholds", parents=[common], help="threshold constants for a model")
    p.add_argument("--grid-steps", type=int)
    p.add_argument("--r-grid", type=_float_list, help="densities at which to report lambda")
    p = sub.add_parser("sample", parents=[common], help="write a random instance")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--planted", dest="mode", action="store_const", const="planted")
    mode.add_argument("--uniform-small", dest="mode", action="store_const", const="uniform-small")
    sub.add_parser("core-scan", parents=[common], help="planted instances -> *-core statistics")
    p = sub.add_parser("freeze-scan", parents=[common], help="exact frozen sets on small instances")
    p.add_argument("--ell", type=_int_list, help="comma-separated move budgets, e.g. 1,2,4")
    p = sub.add_parser("greedy-solve", parents=[common], help="incremental greedy solver (heuristic)")
    p.add_argument("--r-grid", type=_float_list, help="densities to attempt")
    p.add_argument("--budget", type=int, help="max variables changed per repair")
    p.add_argument("--max-expansions", type=int, help="search states per repair")
    return parser


def resolve_config(args: argparse.Namespace) -> dict:
    """Merge flags over the optional JSON config, then defaults; validate."""
    flags = {k: v for k, v in vars(args).items() if k not in ("config",)}
    cfg = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config!r}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(data) - CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(data)
    for key, value in flags.items():
        if value is not None:
            cfg[key] = value
    for key, value in DEFAULTS.items():
        cfg.setdefault(key, value)
    cmd = cfg["command"]
    if cfg.get("r") is not None and cfg.get("M") is not None:
        raise ConfigError("--r and --M are mutually exclusive")
    if cmd in STOCHASTIC:
        if cfg.get("seed") is None:
            raise ConfigError(f"{cmd} needs --seed")
        if cfg.get("n") is None:
            raise ConfigError(f"{cmd} needs --n")
        if cfg.get("r") is None and cfg.get("M") is None and not (cmd == "greedy-solve" and cfg.get("r_grid")):
            raise ConfigError(f"{cmd} needs --r or --M")
        if cfg["n"] < 1:
            raise ConfigError("--n must be positive")
    if cfg.get("trials", 1) < 1 or cfg.get("jobs", 1) < 1:
        raise ConfigError("--trials and --jobs must be positive")
    return cfg


def _print_human(summary) -> None:
    print(f"# {summary.command}")
    if summary.command == "thresholds":
        for key, value in summary.records[0].items():
            print(f"{key:>18}: {value}")
        for r, lam in summary.predictions.get("lambda", {}).items():
            print(f"{'lambda(r=' + r + ')':>18}: {lam}")
        return
    if summary.command == "sample":
        print(" ".join(f"{k}={v}" for k, v in summary.records[0].items()))
        return
    for key, agg in summary.aggregates.items():
        if isinstance(agg, dict) and "mean" in agg:
            print(f"{key:>20}: mean={agg['mean']} se={agg['stderr']} n={agg['count']}")
        else:
            print(f"{key:>20}: {json.dumps(agg)}")
    for key, value in summary.predictions.items():
        print(f"{'pred ' + key:>20}: {json.dumps(value)}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        fn = COMMANDS[cfg["command"]][0]
        summary = fn(cfg)
        text = csv_for(summary)
        if text is not None and cfg.get("out"):
            Path(cfg["out"]).write_text(text)
        if cfg.get("json"):
            print(summary.to_json())
        else:
            _print_human(summary)
    except ScaleError as exc:
        print(f"scale error: {exc}", file=sys.stderr)
        return 3
    except (CheckFailure, ContractError) as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return 4
    except CSPError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
