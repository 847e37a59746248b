"""Command-line front end: configuration, experiment dispatch, deterministic
CSV/JSON output.

Subcommands: ``cone-math``, ``qsd``, ``harnack``, ``excursion``,
``extinction``, ``polyhedral``.  Every run requires an explicit ``--seed``
(there is no implicit entropy; every result must be replayable), writes
``summary.json`` plus raw CSV tables into the output directory, and exits 0
iff all configured criteria pass, 1 on a criterion failure, 2 on a runtime
error.  Outputs are byte-identical for identical config and seed, whatever
``--threads`` says.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import experiments as ex
from .conemath import theta_pd
from .fleming_viot import histogram_to_csv
from .geometry import (Ball, Box, Domain, GeometryError, Interval, Wedge2D,
                       domain_from_dict)
from .stochastic import PathConfig, RngStream

__all__ = ["ConfigError", "ExperimentConfig", "parse_config", "dispatch", "main"]

EXPERIMENTS = ("cone-math", "qsd", "harnack", "excursion", "extinction", "polyhedral")

L_SHAPE = [[0.0, 0.0], [1.0, 0.0], [1.0, 0.5], [0.5, 0.5], [0.5, 1.0], [0.0, 1.0]]


class ConfigError(ValueError):
    """Invalid or incomplete experiment configuration."""


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int
    out: Path
    threads: int
    params: dict = field(default_factory=dict)


# --------------------------------------------------------------------------
# Parsing
# --------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fv-lab",
        description="Monte Carlo experiments on branching Brownian particle systems",
    )
    sub = parser.add_subparsers(dest="experiment")
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=str, default=None,
                       help="JSON config file; flags override its fields")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", type=str, default=None)
        p.add_argument("--threads", type=int, default=None)
        if name == "cone-math":
            p.add_argument("--p", type=str, default=None,
                           help="comma-separated exponent grid")
            p.add_argument("--d", type=str, default=None,
                           help="comma-separated dimension grid")
        else:
            p.add_argument("--domain", type=str, default=None,
                           help="domain literal as JSON")
            p.add_argument("--dt", type=float, default=None)
            p.add_argument("--horizon", type=float, default=None)
        if name == "qsd":
            p.add_argument("--N", type=int, default=None)
            p.add_argument("--burn-in", dest="burn_in", type=float, default=None)
            p.add_argument("--bins", type=int, default=None)
            p.add_argument("--obs-dt", dest="obs_dt", type=float, default=None)
            p.add_argument("--l1-max", dest="l1_max", type=float, default=None)
        elif name == "harnack":
            p.add_argument("--target", type=str, default=None,
                           help="target-set literal as JSON")
            p.add_argument("--n-paths", dest="n_paths", type=int, default=None)
            p.add_argument("--mode", type=str, default=None,
                           choices=("span", "radial"))
        elif name == "excursion":
            p.add_argument("--epsilon", type=float, default=None)
            p.add_argument("--n-paths", dest="n_paths", type=int, default=None)
            p.add_argument("--exponent-tol", dest="exponent_tol", type=float,
                           default=None)
        elif name == "extinction":
            p.add_argument("--n-reps", dest="n_reps", type=int, default=None)
            p.add_argument("--n-jumps", dest="n_jumps", type=int, default=None)
        elif name == "polyhedral":
            p.add_argument("--n-reps", dest="n_reps", type=int, default=None)
    return parser


_DEFAULTS = {
    "cone-math": {"p": [2.0], "d": [2]},
    "qsd": {"domain": {"type": "interval", "a": 0.0, "b": 1.0}, "N": 100,
            "dt": 1e-4, "horizon": 50.0, "burn_in": None, "bins": None,
            "obs_dt": 0.01, "l1_max": None},
    "harnack": {"domain": {"type": "interval", "a": 0.0, "b": 1.0},
                "target": None, "query_points": None, "n_paths": 100_000,
                "dt": 1e-4, "horizon": 50.0, "mode": None, "span_max": 10.0,
                "slope_target": 2.0, "slope_tol": 1.0},
    "excursion": {"domain": {"type": "wedge2d", "vertex": [0.0, 0.0],
                             "axis": [0.0, 1.0], "half_angle": math.pi / 2},
                  "epsilon": 0.1, "n_paths": 100_000, "dt": 1e-4,
                  "horizon": 20.0, "exponent_tol": 0.1},
    "extinction": {"n_reps": 10_000, "n_jumps": 21, "dt": 1e-4, "horizon": 50.0},
    "polyhedral": {"domain": {"type": "polygon2d", "vertices": L_SHAPE},
                   "n_reps": 100, "dt": 1e-4, "horizon": 10.0,
                   "ratio_tol": 0.25},
}


def _parse_grid(value, name: str) -> list:
    if isinstance(value, (list, tuple)):
        out = [float(v) for v in value]
    else:
        try:
            out = [float(v) for v in str(value).split(",") if v != ""]
        except ValueError as exc:
            raise ConfigError(f"field '{name}' must be a comma-separated number list") from exc
    if not out:
        raise ConfigError(f"field '{name}' must not be empty")
    return out


def _require_positive(params: dict, *names: str):
    for name in names:
        if name in params and params[name] is not None:
            v = params[name]
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigError(f"field '{name}' must be a positive number, got {v!r}")


def parse_config(argv: Optional[List[str]] = None) -> ExperimentConfig:
    """Parse CLI flags and an optional JSON config file into a validated
    experiment configuration.  Flags override file values; the seed is
    mandatory."""
    parser = _build_parser()
    ns = parser.parse_args(argv)
    if ns.experiment is None:
        raise ConfigError(
            f"an experiment name is required: one of {', '.join(EXPERIMENTS)}"
        )
    name = ns.experiment
    params = dict(_DEFAULTS[name])
    file_common: dict = {}
    if ns.config is not None:
        try:
            with open(ns.config) as f:
                raw = json.load(f)
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a JSON object")
        file_exp = raw.get("experiment")
        if file_exp is not None and file_exp != name:
            raise ConfigError(
                f"config file is for experiment '{file_exp}', not '{name}'"
            )
        for key, val in raw.items():
            if key == "experiment":
                continue
            if key in ("seed", "out", "threads"):
                file_common[key] = val
            elif key in params:
                params[key] = val
            else:
                raise ConfigError(f"unknown field '{key}' for experiment '{name}'")
    # Flags override the file.
    for key in params:
        flag = getattr(ns, key, None)
        if flag is not None:
            params[key] = flag
    seed = ns.seed if ns.seed is not None else file_common.get("seed")
    if seed is None:
        raise ConfigError(
            "field 'seed' is required: runs must be reproducible, so there is "
            "no implicit entropy"
        )
    out = ns.out if ns.out is not None else file_common.get("out", "out")
    threads = ns.threads if ns.threads is not None else file_common.get("threads")
    if threads is None:
        threads = os.cpu_count() or 1
    if int(threads) < 1:
        raise ConfigError(f"field 'threads' must be >= 1, got {threads}")

    params = _validate_params(name, params)
    return ExperimentConfig(
        experiment=name,
        seed=int(seed),
        out=Path(out),
        threads=int(threads),
        params=params,
    )


def _validate_params(name: str, params: dict) -> dict:
    if name == "cone-math":
        params["p"] = _parse_grid(params["p"], "p")
        params["d"] = [int(v) for v in _parse_grid(params["d"], "d")]
        if any(v <= 0 for v in params["p"]):
            raise ConfigError("field 'p' must contain positive values")
        if any(v < 2 for v in params["d"]):
            raise ConfigError("field 'd' must contain integers >= 2")
        return params
    # Experiments with a domain.
    dom = params.get("domain")
    if dom is not None:
        if isinstance(dom, str):
            try:
                dom = json.loads(dom)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"field 'domain' is not valid JSON: {exc}") from exc
        try:
            params["_domain_obj"] = domain_from_dict(dom)
        except GeometryError as exc:
            raise ConfigError(f"field 'domain' is malformed: {exc}") from exc
        params["domain"] = dom
    _require_positive(params, "dt", "horizon", "N", "n_paths", "n_reps",
                      "n_jumps", "epsilon", "obs_dt", "bins", "l1_max",
                      "burn_in", "exponent_tol", "ratio_tol", "span_max",
                      "slope_tol")
    if name == "qsd":
        if params["burn_in"] is None:
            params["burn_in"] = params["horizon"] / 5.0
        if params["burn_in"] >= params["horizon"]:
            raise ConfigError("field 'burn_in' must be below 'horizon'")
    if name == "harnack":
        tgt = params.get("target")
        if isinstance(tgt, str):
            try:
                tgt = json.loads(tgt)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"field 'target' is not valid JSON: {exc}") from exc
            params["target"] = tgt
        if tgt is not None:
            try:
                params["_target_obj"] = domain_from_dict(tgt)
            except GeometryError as exc:
                raise ConfigError(f"field 'target' is malformed: {exc}") from exc
    if name in ("qsd", "harnack", "excursion", "extinction", "polyhedral"):
        if params["dt"] >= params["horizon"]:
            raise ConfigError("field 'dt' must be below 'horizon'")
    return params


# --------------------------------------------------------------------------
# Dispatch
# --------------------------------------------------------------------------


def dispatch(cfg: ExperimentConfig) -> int:
    """Run the configured experiment, write ``summary.json`` and CSV tables
    into the output directory, and return the exit code."""
    try:
        runner = _RUNNERS[cfg.experiment]
    except KeyError:
        raise ConfigError(f"unknown experiment '{cfg.experiment}'") from None
    cfg.out.mkdir(parents=True, exist_ok=True)
    criteria, extras = runner(cfg)
    ok = all(c.passed for c in criteria)
    summary = {
        "experiment": cfg.experiment,
        "seed": cfg.seed,
        "pass": ok,
        "criteria": [c.as_dict() for c in criteria],
        "params": _echo_params(cfg.params),
    }
    summary.update(extras)
    with open(cfg.out / "summary.json", "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    return 0 if ok else 1


def _echo_params(params: dict) -> dict:
    return {k: v for k, v in params.items() if not k.startswith("_")}


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path: Path, header: List[str], rows) -> None:
    with open(path, "w", newline="") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_fmt(v) for v in row) + "\n")


def _path_cfg(params: dict) -> PathConfig:
    return PathConfig(dt=float(params["dt"]), horizon=float(params["horizon"]))


def _run_cone_math(cfg: ExperimentConfig):
    rows = []
    lines = ["p,d,theta,threshold"]
    for d in cfg.params["d"]:
        for p in cfg.params["p"]:
            theta = theta_pd(p, d)
            threshold = max(1.0 / math.tan(theta), 0.0) if theta < math.pi else 0.0
            rows.append([p, d, theta, threshold])
            lines.append(f"{_fmt(float(p))},{d},{_fmt(theta)},{_fmt(threshold)}")
    _write_csv(cfg.out / "table.csv", ["p", "d", "theta", "threshold"], rows)
    print("\n".join(lines))
    return [], {"rows": len(rows)}


def _run_qsd(cfg: ExperimentConfig):
    params = cfg.params
    domain: Domain = params["_domain_obj"]
    l1_max = params["l1_max"]
    if l1_max is None:
        l1_max = 0.08 if domain.dim == 1 else 0.15
    rng = RngStream(cfg.seed)
    report = ex.qsd_experiment(
        domain, int(params["N"]), _path_cfg(params), float(params["burn_in"]),
        rng, bins=params["bins"], obs_dt=float(params["obs_dt"]),
    )
    histogram_to_csv(report.histogram, cfg.out / "histogram.csv")
    ref = report.histogram
    d = ref.dim
    rows = []
    for idx in np.ndindex(*ref.masses.shape):
        lo = [ref.edges[i][idx[i]] for i in range(d)]
        hi = [ref.edges[i][idx[i] + 1] for i in range(d)]
        rows.append(lo + hi + [float(report.reference_masses[idx])])
    header = [f"bin_lo_{i}" for i in range(d)] + [f"bin_hi_{i}" for i in range(d)] + ["mass"]
    _write_csv(cfg.out / "reference.csv", header, rows)
    crit = [ex.Criterion("l1_distance_to_ground_state", report.l1_distance,
                         f"< {l1_max}", report.l1_distance < l1_max)]
    return crit, {"estimates": {"l1_distance": report.l1_distance,
                                "n_particles": report.n_particles}}


def _default_target(domain: Domain) -> Domain:
    lo, hi = domain.bounding_box()
    center = 0.5 * (lo + hi)
    diam = float(np.linalg.norm(hi - lo))
    if domain.dim == 1:
        h = diam / 8.0
        return Interval(float(center[0] - h), float(center[0] + h))
    return Ball(center, diam / 8.0)


def _run_harnack(cfg: ExperimentConfig):
    params = cfg.params
    domain: Domain = params["_domain_obj"]
    target: Optional[Domain] = params.get("_target_obj")
    if target is None:
        target = _default_target(domain)
    mode = params["mode"]
    if mode is None:
        mode = "radial" if isinstance(domain, Wedge2D) else "span"
    pts = params["query_points"]
    if pts is None:
        if isinstance(domain, Wedge2D):
            pts = [domain.vertex + r * domain.axis for r in (0.4, 0.2, 0.1)]
        elif domain.dim == 1:
            lo, hi = domain.bounding_box()
            grid = np.linspace(lo[0], hi[0], 21)[1:-1]
            pts = [[g] for g in grid]
        else:
            raise ConfigError(
                "field 'query_points' is required for this domain type"
            )
    rng = RngStream(cfg.seed)
    report = ex.harnack_experiment(
        domain, target, np.asarray(pts, float), int(params["n_paths"]),
        _path_cfg(params), rng, threads=cfg.threads,
    )
    d = domain.dim
    header = [f"x_{i}" for i in range(d)] + [
        "f_hat", "f_se", "g_hat", "g_se", "ratio", "censored_fraction", "n_paths"
    ]
    rows = []
    for p in report.points:
        rows.append(list(p.x) + [p.f_hat, p.f_se, p.g_hat, p.g_se, p.ratio,
                                 p.censored_fraction, p.n_paths])
    _write_csv(cfg.out / "points.csv", header, rows)
    crit = []
    extras = {}
    if mode == "span":
        span = ex.ratio_span(report)
        span_max = float(params["span_max"])
        crit.append(ex.Criterion("ratio_span", span, f"< {span_max}",
                                 span < span_max))
        extras["estimates"] = {"ratio_span": span}
    else:
        slope, se = ex.ratio_radius_slope(report)
        target_slope = float(params["slope_target"])
        tol = float(params["slope_tol"])
        crit.append(ex.Criterion(
            "log_ratio_vs_log_radius_slope", slope,
            f"{target_slope} +- {tol}", abs(slope - target_slope) <= tol,
        ))
        extras["estimates"] = {"ratio_slope": slope, "ratio_slope_se": se}
    return crit, extras


def _run_excursion(cfg: ExperimentConfig):
    params = cfg.params
    domain = params["_domain_obj"]
    rng = RngStream(cfg.seed)
    report = ex.excursion_tail_experiment(
        domain, float(params["epsilon"]), int(params["n_paths"]),
        _path_cfg(params), rng, threads=cfg.threads,
    )
    _write_csv(cfg.out / "survival.csv", ["t", "survival"],
               zip(report.t_grid, report.survival))
    tol = float(params["exponent_tol"])
    crit = [ex.Criterion(
        "tail_exponent", report.exponent,
        f"{report.expected_exponent} +- {tol}",
        abs(report.exponent - report.expected_exponent) <= tol,
    )]
    extras = {"estimates": {
        "exponent": report.exponent,
        "exponent_se": report.exponent_se,
        "expected_exponent": report.expected_exponent,
        "censored_fraction": report.censored_fraction,
    }}
    return crit, extras


def _run_extinction(cfg: ExperimentConfig):
    params = cfg.params
    rng = RngStream(cfg.seed)
    report = ex.extinction_experiment(
        int(params["n_reps"]), _path_cfg(params), rng,
        n_jumps=int(params["n_jumps"]), threads=cfg.threads,
    )
    crit = [
        ex.Criterion("mean_first_absorption_time", report.e_sigma1,
                     f"<= 0.25 + 3 SE ({0.25 + 3 * report.se_sigma1:.4g})",
                     report.e_sigma1 <= 0.25 + 3 * report.se_sigma1),
        ex.Criterion("survivor_second_moment", report.e_alpha2,
                     f"< 1 - 3 SE ({1 - 3 * report.se_alpha2:.4g})",
                     report.e_alpha2 < 1.0 - 3 * report.se_alpha2),
        ex.Criterion("survivor_fourth_moment", report.e_alpha4,
                     f"<= 1 + 3 SE ({1 + 3 * report.se_alpha4:.4g})",
                     report.e_alpha4 <= 1.0 + 3 * report.se_alpha4),
        ex.Criterion("collapsing_fraction", report.collapsing_fraction,
                     ">= 0.95", report.collapsing_fraction >= 0.95),
        ex.Criterion("gap_ratio_matches_alpha2",
                     report.fitted_gap_ratio,
                     f"within 0.1 of {report.e_alpha2:.4g}",
                     abs(report.fitted_gap_ratio - report.e_alpha2) <= 0.1),
    ]
    _write_csv(cfg.out / "replicas.csv",
               ["replica", "sigma1", "alpha1", "slope"],
               [[i, report.sigma1[i], report.alpha1[i], s]
                for i, s in enumerate(report.replica_slopes)])
    extras = {"estimates": {
        "e_sigma1": report.e_sigma1, "se_sigma1": report.se_sigma1,
        "e_alpha2": report.e_alpha2, "se_alpha2": report.se_alpha2,
        "e_alpha4": report.e_alpha4, "se_alpha4": report.se_alpha4,
        "tau_inf_bound": report.tau_inf_bound,
        "fitted_gap_ratio": report.fitted_gap_ratio,
        "censored_pairs": report.censored_pairs,
    }}
    return crit, extras


def _run_polyhedral(cfg: ExperimentConfig):
    params = cfg.params
    domain: Domain = params["_domain_obj"]
    rng = RngStream(cfg.seed)
    horizon = float(params["horizon"])
    report = ex.polyhedral_experiment(
        domain, horizon, int(params["n_reps"]), _path_cfg(params), rng,
        threads=cfg.threads,
    )
    rows = []
    for i, r in enumerate(report.replicas):
        try:
            slope = r.slope()
        except ex.InvalidFitError:
            slope = math.nan
        rows.append([
            i, r.n_jumps, r.n_jumps_before(horizon / 2.0), r.min_gap, slope,
            r.collapsing(), r.max_excursion, r.extinct,
        ])
    _write_csv(cfg.out / "replicas.csv",
               ["replica", "n_jumps", "n_jumps_half", "min_gap", "slope",
                "collapsing", "max_excursion", "extinct"], rows)
    ratio = report.jump_count_ratio()
    tol = float(params["ratio_tol"])
    crit = [
        ex.Criterion("collapsing_replicas", report.collapsing_count, "== 0",
                     report.collapsing_count == 0),
        ex.Criterion("jump_count_ratio", ratio,
                     f"within {tol} of 2", abs(ratio - 2.0) <= 2.0 * tol),
    ]
    extras = {"estimates": {
        "total_jumps": report.total_jumps,
        "jump_count_ratio": ratio,
        "extinct_replicas": report.extinct_count,
        "extinct_frequency": report.extinct_count / max(1, len(report.replicas)),
    }}
    return crit, extras


_RUNNERS = {
    "cone-math": _run_cone_math,
    "qsd": _run_qsd,
    "harnack": _run_harnack,
    "excursion": _run_excursion,
    "extinction": _run_extinction,
    "polyhedral": _run_polyhedral,
}


def main(argv: Optional[List[str]] = None) -> int:
    try:
        cfg = parse_config(argv)
    except ConfigError as exc:
        print(f"fv-lab: config error: {exc}", file=sys.stderr)
        return 2
    try:
        return dispatch(cfg)
    except (ConfigError, GeometryError, ex.InvalidFitError, ValueError) as exc:
        print(f"fv-lab: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
