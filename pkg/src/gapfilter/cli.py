"""Command-line front end: ``gapfilter <mode> --config FILE``.

Each run writes CSV tables (first line names the units), ``summary.json`` and
``manifest.json`` into a fresh run-stamped directory. ``manifest.json`` can be passed
back as ``--config`` to repeat the run with identical numbers.

Exit status: 0 success, 2 invalid configuration, 1 solve failure, 3 a numerical
check failed, 4 the minimax search did not converge.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import logging
import os
import platform
import sys
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__
from .config import MANIFEST_KEY, MODES, ExperimentConfig, build_class, load_document, parse_config
from .exceptions import ConfigError, GapFilterError
from .filtering import CONSTRAINT_RTOL, MSE_RTOL, SOLVER_RTOL, convergence_study, solve_filter
from .grid import as_grid
from .indices import observed_indices
from .oracle import oracle_mse
from .spectral import check_minimality, covariance_from_density

logger = logging.getLogger("gapfilter")

OUT_ENV = "GAPFILTER_OUT"
EXIT_OK, EXIT_SOLVE, EXIT_CONFIG, EXIT_CHECK, EXIT_NOT_CONVERGED = 0, 1, 2, 3, 4
ORACLE_THRESHOLD = 1e-2
SIM_SE_FACTOR = 3.0


# --- output helpers ---------------------------------------------------------------


class RunWriter:
    """Collects files of one run under ``root/<mode>-<stamp>-<hash>``."""

    def __init__(self, root: Path, cfg: ExperimentConfig):
        digest = hashlib.sha256(json.dumps(cfg.raw, sort_keys=True).encode()).hexdigest()[:8]
        stamp = _dt.datetime.now().strftime("%Y%m%dT%H%M%S")
        base = root / f"{cfg.mode}-{stamp}-{digest}"
        path, k = base, 1
        while path.exists():
            path = base.with_name(f"{base.name}-{k}")
            k += 1
        path.mkdir(parents=True)
        self.path = path
        self.files: list[str] = []

    def table(self, name: str, units: str, header: list[str], rows) -> None:
        with (self.path / name).open("w", newline="") as fh:
            fh.write(f"# units: {units}\n")
            w = csv.writer(fh)
            w.writerow(header)
            for row in rows:
                w.writerow([_cell(v) for v in row])
        self.files.append(name)

    def json(self, name: str, payload) -> None:
        (self.path / name).write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
        self.files.append(name)


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (complex, np.complexfloating)):
        return repr(complex(v)) if complex(v).imag else float(complex(v).real)
    if isinstance(v, np.floating):
        return float(v)
    if isinstance(v, (np.integer, np.bool_)):
        return v.item()
    return v



# --- modes ------------------------------------------------------------------------


def _solve(cfg: ExperimentConfig, check: bool = True):
    return solve_filter(cfg.signal, cfg.noise, cfg.pattern, cfg.functional, cfg.truncation, cfg.grid, check=check)


def run_filter(cfg: ExperimentConfig, out: RunWriter) -> tuple[int, dict]:
    sol = _solve(cfg)
    T = cfg.dim
    rows = []
    for j, vec in sol.coefficients().items():
        rows += [[j, k, float(vec[k].real), float(vec[k].imag)] for k in range(T)]
    out.table("coefficients.csv", "c(j) dimensionless weights on U_K", ["j", "component", "re", "im"], rows)
    lam = sol.grid.lam
    out.table(
        "characteristic.csv", "h(lambda) dimensionless; lambda in radians",
        ["lambda"] + [f"{p}{k}" for k in range(T) for p in ("re", "im")],
        ([lam[n]] + [v for k in range(T) for v in (sol.h[n, k].real, sol.h[n, k].imag)] for n in range(lam.size)),
    )
    weights = sol.impulse_response(cfg.window)
    obs = observed_indices(cfg.pattern, cfg.window)
    out.table(
        "impulse_response.csv", "h~(t) dimensionless weights on observed times", ["t", "component", "re", "im"],
        ([t, k, float(weights[t][k].real), float(weights[t][k].imag)] for t in obs for k in range(T)),
    )
    summary = {
        "mse": sol.mse,
        "mse_integral": sol.mse_integral,
        "truncation": sol.K,
        "projection_residual": sol.projection_residual(),
        "orthogonality_residual": sol.orthogonality_residual(cfg.window),
        "positive_definite": sol.ops.positive_definite,
    }
    return EXIT_OK, summary


def run_mse(cfg: ExperimentConfig, out: RunWriter) -> tuple[int, dict]:
    rep = check_minimality(cfg.signal, cfg.noise, cfg.grid)
    sol = _solve(cfg)
    out.table(
        "mse.csv", "mean-square error in squared signal units",
        ["truncation", "grid", "mse_quadratic", "mse_integral"],
        [[sol.K, sol.grid.size, sol.mse, sol.mse_integral]],
    )
    return EXIT_OK, {
        "mse": sol.mse,
        "mse_integral": sol.mse_integral,
        "truncation": sol.K,
        "minimality": {"passed": rep.passed, "integral": rep.integral, "growth": rep.growth, "message": rep.message},
    }


def run_oracle_check(cfg: ExperimentConfig, out: RunWriter) -> tuple[int, dict]:
    sec = cfg.section("oracle")
    threshold = float(sec.get("threshold", ORACLE_THRESHOLD))
    sol = _solve(cfg)
    orc = oracle_mse(cfg.signal, cfg.noise, cfg.pattern, cfg.functional, cfg.window, cfg.grid)
    rel = abs(sol.mse - orc.mse) / max(abs(sol.mse), 1e-300)
    passed = rel <= threshold
    out.table(
        "oracle_check.csv", "mean-square errors in squared signal units; rel_diff dimensionless",
        ["truncation", "window", "mse_spectral", "mse_oracle", "rel_diff", "threshold", "passed"],
        [[sol.K, cfg.window, sol.mse, orc.mse, rel, threshold, passed]],
    )
    summary = {"mse_spectral": sol.mse, "mse_oracle": orc.mse, "rel_diff": rel, "threshold": threshold, "passed": passed}
    return (EXIT_OK if passed else EXIT_CHECK), summary


def run_converge(cfg: ExperimentConfig, out: RunWriter) -> tuple[int, dict]:
    sec = cfg.section("converge")
    Ks = sec.get("truncations", [8, 16, 32, 64])
    if not isinstance(Ks, list) or not Ks:
        raise ConfigError("converge.truncations", f"expected a list of integers, got {Ks!r}")
    try:
        Ks = sorted(int(k) for k in Ks)
    except (TypeError, ValueError):
        raise ConfigError("converge.truncations", f"expected a list of integers, got {Ks!r}") from None
    rows = convergence_study(cfg.signal, cfg.noise, cfg.pattern, cfg.functional, Ks, cfg.grid)
    out.table(
        "convergence.csv", "mse in squared signal units; rel_change dimensionless",
        ["truncation", "mse", "rel_change"], [[r.K, r.mse, r.rel_change] for r in rows],
    )
    return EXIT_OK, {"rows": [{"truncation": r.K, "mse": r.mse, "rel_change": r.rel_change} for r in rows]}


def run_simulate(cfg: ExperimentConfig, out: RunWriter) -> tuple[int, dict]:
    from .simulation import empirical_covariance, empirical_mse, sample_paths, tail_mass

    sec = cfg.section("simulate")
    n_paths = int(sec.get("n_paths", 10000))
    length = int(sec.get("length", max(2 * cfg.window, cfg.functional.max_index + 1)))
    lags = int(sec.get("lags", 5))
    workers = int(sec.get("workers", 1))
    sim_grid = int(sec.get("grid", cfg.grid))
    if n_paths < 2:
        raise ConfigError("simulate.n_paths", f"need at least 2 paths, got {n_paths}")
    if cfg.window > length:
        raise ConfigError("window", f"window {cfg.window} exceeds path length {length}")
    try:
        as_grid(sim_grid).require(length, "path length")
    except GapFilterError as exc:
        raise ConfigError("simulate.grid", str(exc)) from None
    batch = sample_paths(cfg.signal, n_paths, length, cfg.seed, sim_grid, noise=cfg.noise, workers=workers)
    T = cfg.dim
    cov_rows, worst = [], 0.0
    for lag in range(lags + 1):
        est, se = empirical_covariance(batch, lag)
        target = covariance_from_density(cfg.signal, lag, sim_grid)
        for i in range(T):
            for j in range(T):
                for part, e, s, t in (("re", est[i, j].real, se[i, j].real, target[i, j].real),
                                      ("im", est[i, j].imag, se[i, j].imag, target[i, j].imag)):
                    if s > 0:
                        z = abs(e - t) / s
                    else:  # exactly determined entry, e.g. the imaginary part of a lag-0 variance
                        z = 0.0 if abs(e - t) <= 1e-12 * max(1.0, abs(t)) else np.inf
                    worst = max(worst, z)
                    cov_rows.append([lag, i, j, part, e, s, t, z])
    out.table(
        "covariance.csv", "covariance in squared signal units; z in standard errors",
        ["lag", "row", "col", "part", "empirical", "std_error", "analytic", "z"], cov_rows,
    )
    sol = _solve(cfg)
    mean, se = empirical_mse(sol, batch, L=cfg.window)
    z_mse = abs(mean - sol.mse) / se if se > 0 else 0.0
    tail = tail_mass(sol, cfg.window)
    out.table(
        "mse.csv", "mean-square error in squared signal units; z in standard errors; tail_mass dimensionless",
        ["n_paths", "window", "mse_theory", "mse_empirical", "std_error", "z", "tail_mass"],
        [[n_paths, cfg.window, sol.mse, mean, se, z_mse, tail]],
    )
    passed = worst <= SIM_SE_FACTOR and z_mse <= SIM_SE_FACTOR
    summary = {
        "mse_theory": sol.mse, "mse_empirical": mean, "std_error": se, "z_mse": z_mse,
        "tail_mass": tail, "max_covariance_z": worst, "passed": passed,
    }
    return (EXIT_OK if passed else EXIT_CHECK), summary


def run_minimax(cfg: ExperimentConfig, out: RunWriter) -> tuple[int, dict]:
    from .minimax import SearchConfig, fixed_class, search_least_favorable, verify_saddle

    sec = cfg.section("minimax")
    raw = cfg.raw
    if "signal_class" in sec:
        cF = build_class(sec["signal_class"], "signal", cfg.dim, "minimax.signal_class")
    elif raw.get("signal") is not None:
        cF = fixed_class("signal", cfg.signal)
    else:
        raise ConfigError("minimax.signal_class", "give a signal class or a known signal density")
    if "noise_class" in sec:
        cG = build_class(sec["noise_class"], "noise", cfg.dim, "minimax.noise_class")
    elif raw.get("noise") is not None:
        cG = fixed_class("noise", cfg.noise)
    else:
        raise ConfigError("minimax.noise_class", "give a noise class or a known noise density")
    search = sec.get("search", {}) or {}
    if not isinstance(search, dict):
        raise ConfigError("minimax.search", f"expected a mapping, got {search!r}")
    known = {"n_cells", "restarts", "max_iter", "tol", "memory", "armijo"}
    extra = set(search) - known
    if extra:
        raise ConfigError(f"minimax.search.{sorted(extra)[0]}", f"unknown option; expected one of {sorted(known)}")
    scfg = SearchConfig(seed=cfg.seed, **search)
    sol = search_least_favorable(cF, cG, cfg.pattern, cfg.functional, cfg.truncation, cfg.grid, scfg)
    n_samples = int(sec.get("saddle_samples", 200))
    saddle = verify_saddle(sol, n_samples, seed=cfg.seed)
    T = cfg.dim
    cm = sol.cmap
    centers = cm.centers()
    for name, D in (("F0", sol.F0), ("G0", sol.G0)):
        cells = cm.cells_of(D)
        out.table(
            f"{name}_cells.csv", "spectral density per cell in squared signal units per radian; lambda in radians",
            ["cell", "lambda_center", "row", "col", "re", "im"],
            ([c, centers[c], i, j, cells[c, i, j].real, cells[c, i, j].imag]
             for c in range(cm.n_cells) for i in range(T) for j in range(T)),
        )
    lam = sol.grid.lam
    out.table(
        "h0.csv", "robust characteristic h0(lambda) dimensionless; lambda in radians",
        ["lambda"] + [f"{p}{k}" for k in range(T) for p in ("re", "im")],
        ([lam[n]] + [v for k in range(T) for v in (sol.h0[n, k].real, sol.h0[n, k].imag)] for n in range(lam.size)),
    )
    rel = sol.relations
    out.table(
        "relations.csv", "residuals dimensionless (relative)",
        ["relation", "residual", "active_cells", "violations", "note"],
        [[r.name, r.residual, r.active_cells, r.violations, r.note] for r in rel.results],
    )
    summary = {
        "pair": sol.pair,
        "delta0": sol.delta0,
        "restart_values": sol.restart_values,
        "iterations": sol.iterations,
        "converged": sol.converged,
        "stationarity": sol.stationarity,
        "membership": sol.membership(),
        "relations_max_residual": rel.max_residual,
        "relations_violations": rel.violations,
        "relations_passed": rel.passed,
        "saddle": {
            "samples": saddle.n_samples,
            "max_excess": saddle.max_excess,
            "right_violations": len(saddle.right_violations),
            "left_violations": len(saddle.left_violations),
            "passed": saddle.passed,
        },
        "notes": sol.notes,
    }
    if not sol.converged:
        return EXIT_NOT_CONVERGED, summary
    return (EXIT_OK if saddle.passed else EXIT_CHECK), summary


RUNNERS = {
    "filter": run_filter,
    "mse": run_mse,
    "oracle-check": run_oracle_check,
    "minimax": run_minimax,
    "simulate": run_simulate,
    "converge": run_converge,
}


# --- entry point ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gapfilter", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        s = sub.add_parser(mode)
        s.add_argument("--config", required=True, help="YAML/JSON experiment config or a run manifest")
        s.add_argument("--out", help=f"output root (default: ${OUT_ENV} or ./runs)")
        s.add_argument("--grid", type=int, help="frequency grid size (overrides config)")
        s.add_argument("--truncation", type=int, help="truncation K (overrides config)")
        s.add_argument("--seed", type=int, help="random seed (overrides config)")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def _manifest(cfg: ExperimentConfig, files: list[str], status: int) -> dict:
    return {
        MANIFEST_KEY: 1,
        "mode": cfg.mode,
        "config": cfg.raw,
        "status": status,
        "outputs": files,
        "tolerances": {
            "solver_rtol": SOLVER_RTOL,
            "constraint_rtol": CONSTRAINT_RTOL,
            "mse_rtol": MSE_RTOL,
            "oracle_threshold": ORACLE_THRESHOLD,
            "simulation_se_factor": SIM_SE_FACTOR,
        },
        "versions": {
            "gapfilter": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "pyyaml": yaml.__version__,
        },
    }


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        doc = load_document(args.config)
        overrides = {"grid": args.grid, "truncation": args.truncation, "seed": args.seed, "out": args.out}
        cfg = parse_config(doc, args.mode, overrides)
    except ConfigError as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    root = Path(cfg.out or os.environ.get(OUT_ENV) or "runs")
    # the output root is machine-specific; keep it out of the recorded config
    cfg.raw.pop("out", None)
    out = RunWriter(root, cfg)
    try:
        status, summary = RUNNERS[cfg.mode](cfg, out)
    except ConfigError as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        status, summary = EXIT_CONFIG, {"error": str(exc)}
    except GapFilterError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        status, summary = EXIT_SOLVE, {"error": f"{type(exc).__name__}: {exc}"}
    summary = {"mode": cfg.mode, "status": status, **summary}
    out.json("summary.json", summary)
    out.json("manifest.json", _manifest(cfg, list(out.files), status))
    for key, value in summary.items():
        if not isinstance(value, (dict, list)):
            print(f"{key}: {value}")
    print(f"output: {out.path}")
    return status


if __name__ == "__main__":
    sys.exit(main())
