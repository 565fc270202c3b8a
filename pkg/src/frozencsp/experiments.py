"""Experiment drivers behind the CLI subcommands.

Each ``cmd_*`` takes a validated config dict and returns a RunSummary.  Trial
work runs in top-level functions so it can be farmed out to worker
processes; results are always gathered in trial order so CSV output does
not depend on ``jobs``.
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import thresholds as th
from .core import build_gamma, core_stats, peel_star_core
from .errors import ConfigError, ScaleError
from .freeze import FreezeScan, freeze_trial
from .greedy import greedy_solve
from .model import load_model
from .sampler import (MAX_UNIFORM_N, derive_seed, sample_csp, sample_planted,
                      sample_uniform_small, write_instance)

SCHEMA_VERSION = 1

CORE_COLUMNS = ["trial", "seed", "n", "k", "r", "M", "essential_edges", "alpha_hat",
                "core_vertices", "core_edges", "core_lplus", "h1_plus", "h1_minus", "rounds",
                "rho_pred", "lambda_pred", "branching_ratio"]
GREEDY_COLUMNS = ["trial", "seed", "n", "k", "r", "M", "success", "constraints_added",
                  "density_reached", "repairs", "flips"]


@dataclass
class RunSummary:
    command: str
    config: dict
    records: list = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)
    predictions: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION
    csv_rows: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("csv_rows")
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_json_default)


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def aggregate(records: list, keys) -> dict:
    """Mean, standard error and count for each numeric key."""
    out = {}
    for key in keys:
        vals = np.array([float(r[key]) for r in records if r.get(key) is not None], dtype=float)
        vals = vals[np.isfinite(vals)]
        if vals.size == 0:
            out[key] = {"mean": None, "stderr": None, "count": 0}
            continue
        se = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
        out[key] = {"mean": float(vals.mean()), "stderr": se, "count": int(vals.size)}
    return out


def csv_text(rows: list, columns: list) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for row in rows:
        w.writerow({c: _fmt(row.get(c)) for c in columns})
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _run_trials(fn, config: dict, trials: int, jobs: int) -> tuple:
    args = [(config, t) for t in range(trials)]
    start = time.perf_counter()
    if jobs and jobs > 1 and trials > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_call, [fn] * trials, args))
    else:
        results = [_call(fn, a) for a in args]
    return results, time.perf_counter() - start


def _call(fn, a):
    return fn(*a)


def _model(config):
    return load_model(config["model"], config.get("k"))


def _clause_count(config: dict) -> int:
    if config.get("M") is not None:
        return int(config["M"])
    return int(round(config["r"] * config["n"]))


def _density(config: dict) -> float:
    if config.get("r") is not None:
        return float(config["r"])
    return config["M"] / config["n"]


# -- thresholds --------------------------------------------------------------

def cmd_thresholds(config: dict) -> RunSummary:
    start = time.perf_counter()
    m = _model(config)
    report = th.threshold_report(m, config.get("grid_steps") or th.DEFAULT_GRID_STEPS)
    rec = report.as_dict()
    rec["model"] = m.name
    rec["r_f_below_r_p"] = report.r_f < report.r_p
    summary = RunSummary("thresholds", config, [rec])
    r_values = list(config.get("r_grid") or [])
    if config.get("r") is not None:
        r_values.insert(0, config["r"])
    summary.predictions = {"lambda": {repr(float(r)): th.lambda_(m, r) for r in r_values},
                           "rho_k_at_xi_r": {repr(float(r)): th.rho_k(m.arity, report.xi * r)
                                             for r in r_values}}
    summary.aggregates = aggregate([rec], ["r_f", "r_p", "xi"])
    summary.timings = {"total_seconds": time.perf_counter() - start}
    return summary


# -- sample ------------------------------------------------------------------

def cmd_sample(config: dict) -> RunSummary:
    start = time.perf_counter()
    m = _model(config)
    n, M, seed = config["n"], _clause_count(config), config["seed"]
    mode = config.get("mode") or "csp"
    rec = {"n": n, "M": M, "k": m.arity, "seed": seed, "mode": mode}
    if mode == "planted":
        pp = sample_planted(m, n, M, seed)
        F, sigma = pp.instance, pp.sigma
        rec["rejection_count"] = pp.rejection_count
    elif mode == "uniform-small":
        ud = sample_uniform_small(m, n, M, seed)
        F, sigma = ud.instance, ud.sigma
        rec["retries"] = ud.retries
        rec["n_solutions"] = ud.n_solutions
    else:
        F, sigma = sample_csp(m, n, M, seed), None
    if config.get("out"):
        write_instance(config["out"], F, sigma)
    summary = RunSummary("sample", config, [rec])
    summary.timings = {"total_seconds": time.perf_counter() - start}
    return summary


# -- core scan ---------------------------------------------------------------

def core_trial(config: dict, trial: int) -> dict:
    t0 = time.perf_counter()
    m = _model(config)
    n, M = config["n"], _clause_count(config)
    seed = derive_seed(config["seed"], trial)
    pp = sample_planted(m, n, M, seed)
    mm = m.explicit()
    g = build_gamma(pp.instance, pp.sigma, mm)
    core, trace = peel_star_core(g)
    st = core_stats(core)
    alpha_hat = g.n_edges / n
    return {
        "trial": trial, "seed": seed, "n": n, "k": m.arity, "r": _density(config), "M": M,
        "essential_edges": g.n_edges, "alpha_hat": alpha_hat,
        "core_vertices": st.core_vertices, "core_edges": st.core_edges,
        "core_lplus": st.core_lplus, "h1_plus": st.h1_plus, "h1_minus": st.h1_minus,
        "rounds": trace.rounds, "rho_pred": th.rho_k(m.arity, alpha_hat),
        "lambda_pred": th.lambda_(m, M / n), "branching_ratio": st.branching_ratio,
        "_seconds": time.perf_counter() - t0,
    }


def cmd_core_scan(config: dict) -> RunSummary:
    m = _model(config)
    records, wall = _run_trials(core_trial, config, config["trials"], config.get("jobs", 1))
    summary = RunSummary("core-scan", config)
    for r in records:
        r["core_fraction"] = r["core_vertices"] / r["n"]
        r["essential_fraction"] = r["essential_edges"] / r["M"] if r["M"] else 0.0
    summary.timings = {"total_seconds": wall, "trial_seconds": [r.pop("_seconds") for r in records]}
    summary.records = records
    summary.aggregates = aggregate(records, ["core_fraction", "essential_fraction", "alpha_hat",
                                             "branching_ratio", "rounds"])
    xi = th.xi(m)
    r = _clause_count(config) / config["n"]
    fp = th.fixed_point_trace(m.arity, xi * r)
    a_k = th.alpha_k(m.arity).alpha
    summary.predictions = {"xi": xi, "alpha": xi * r, "alpha_k": a_k, "rho": th.rho_k(m.arity, xi * r),
                           "lambda": th.lambda_(m, r), "gamma_margin": fp.gamma_margin,
                           "r_f": a_k / xi}
    return summary


# -- freeze scan -------------------------------------------------------------

def _freeze_worker(config: dict, trial: int) -> dict:
    t0 = time.perf_counter()
    m = _model(config)
    M = _clause_count(config)
    ft = freeze_trial(m, config["n"], M, config["ell"], trial, derive_seed(config["seed"], trial))
    return {"trial": ft, "_seconds": time.perf_counter() - t0}


def freeze_columns(ells) -> list:
    return (["trial", "variable", "in_core", "star_depth"]
            + [f"frozen_at_ell{ell}" for ell in ells] + ["near_short_cycle"])


def cmd_freeze_scan(config: dict) -> RunSummary:
    n = config["n"]
    if n > MAX_UNIFORM_N:
        raise ScaleError(f"freeze-scan enumerates solutions; n={n} exceeds {MAX_UNIFORM_N}")
    ells = list(config["ell"])
    results, wall = _run_trials(_freeze_worker, config, config["trials"], config.get("jobs", 1))
    rows, per_trial = [], []
    for res in results:
        ft = res["trial"]
        for v in range(n):
            row = {"trial": ft.trial, "variable": v + 1, "in_core": bool(ft.in_core[v]),
                   "star_depth": "inf" if math.isinf(ft.star_depth[v]) else int(ft.star_depth[v]),
                   "near_short_cycle": bool(ft.near_cycle[v])}
            for ell in ells:
                row[f"frozen_at_ell{ell}"] = bool(ft.frozen[ell][v])
            rows.append(row)
        rec = {"trial": ft.trial, "seed": ft.seed, "n_solutions": ft.n_solutions,
               "core_size": int(ft.in_core.sum()), "difference_ok": ft.difference_ok, "retries": ft.retries}
        for ell in ells:
            rec[f"frozen_at_ell{ell}"] = int(ft.frozen[ell].sum())
        per_trial.append(rec)
    summary = RunSummary("freeze-scan", config, per_trial)
    summary.timings = {"total_seconds": wall, "trial_seconds": [r["_seconds"] for r in results]}
    summary.aggregates = aggregate(per_trial, ["core_size", "n_solutions"]
                                   + [f"frozen_at_ell{ell}" for ell in ells])
    scan = FreezeScan(n, _clause_count(config), tuple(ells), [r["trial"] for r in results])
    summary.predictions = {"agreement": {str(ell): scan.agreement(ell) for ell in ells}}
    summary.notes.append("exceptions are annotated by near_short_cycle")
    summary.csv_rows = rows
    return summary


# -- greedy ------------------------------------------------------------------

def greedy_trial(config: dict, trial: int) -> dict:
    t0 = time.perf_counter()
    m = _model(config)
    n = config["n"]
    seed = derive_seed(config["seed"], trial)
    rows = []
    for r in config["r_grid"]:
        M = int(round(r * n))
        res = greedy_solve(m, n, M, seed, config.get("budget") or 30,
                           config.get("max_expansions") or 10_000)
        rows.append({"trial": trial, "seed": seed, "n": n, "k": m.arity, "r": r, "M": M,
                     "success": res.success, "constraints_added": res.constraints_added,
                     "density_reached": res.density_reached, "repairs": res.repairs,
                     "flips": res.flips})
    return {"rows": rows, "_seconds": time.perf_counter() - t0}


def cmd_greedy_solve(config: dict) -> RunSummary:
    cfg = dict(config)
    if not cfg.get("r_grid"):
        cfg["r_grid"] = [_clause_count(config) / config["n"]]
    results, wall = _run_trials(greedy_trial, cfg, cfg["trials"], cfg.get("jobs", 1))
    records = [row for res in results for row in res["rows"]]
    summary = RunSummary("greedy-solve", config, records)
    rates = {}
    for r in cfg["r_grid"]:
        sub = [x for x in records if x["r"] == r]
        rates[repr(float(r))] = aggregate(sub, ["success", "density_reached"])
    summary.aggregates = rates
    ordered = [rates[repr(float(r))]["success"]["mean"] for r in sorted(cfg["r_grid"])]
    summary.predictions = {"success_nonincreasing_in_r": all(a >= b for a, b in zip(ordered, ordered[1:]))}
    summary.notes.append("heuristic repair search; no guarantee of success at any density")
    summary.timings = {"total_seconds": wall, "trial_seconds": [r["_seconds"] for r in results]}
    return summary


COMMANDS = {
    "thresholds": (cmd_thresholds, None),
    "sample": (cmd_sample, None),
    "core-scan": (cmd_core_scan, CORE_COLUMNS),
    "freeze-scan": (cmd_freeze_scan, None),
    "greedy-solve": (cmd_greedy_solve, GREEDY_COLUMNS),
}


def csv_for(summary: RunSummary) -> str | None:
    if summary.command == "freeze-scan":
        return csv_text(summary.csv_rows, freeze_columns(summary.config["ell"]))
    cols = COMMANDS[summary.command][1]
    return csv_text(summary.records, cols) if cols else None
