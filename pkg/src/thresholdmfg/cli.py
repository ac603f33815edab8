"""Command-line interface: reproducible solver runs from declarative configs.

Every subcommand reads a YAML config (strictly validated against the schema
below), writes machine-readable CSV/JSON results into the output directory
and renders a matplotlib figure next to them.

Exit codes: 0 success, 1 config error, 2 solver/verification failure,
3 cross-check failure in `example2`.
"""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click
import numpy as np
import yaml

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .equilibrium import GameModel, solve_equilibrium, verify_equilibrium
from .kernels import MultiplicativeGapKernel, TabulatedKernel, UniformKernel
from .mdp import Threshold, linear_cost, power_cost, threshold_cost_curve
from .numerics import make_grid
from .sensitivity import (
    finite_difference_check,
    solve_sensitivities,
    solve_uniform_equilibrium_closed_form,
    solve_uniform_sensitivity_closed_form,
)
from .simulate import SimConfig, empirical_vs_stationary, simulate_population
from .stationary import mean_field_of_theta, stationary_distribution


class ConfigError(ValueError):
    """Raised with a field-path diagnostic when a config is invalid."""


_SCHEMA = {
    "model": {
        "kernel": str,
        "kernel_csv": str,
        "kernel_deriv_csv": str,
        "cost": str,
        "c": float,
        "k": float,
        "gamma": float,
        "beta": float,
    },
    "numerics": {
        "grid_n": int,
        "bellman_tol": float,
        "fixed_point_tol": float,
    },
    "output": {
        "dir": str,
    },
    "simulate": {
        "N": int,
        "T": int,
        "burn_in": int,
        "seed": int,
        "bins": int,
        "window": int,
        "initial_law": str,
        "theta": float,
    },
    "curve": {
        "r_min": float,
        "r_max": float,
        "points": int,
        "rho": float,
    },
    "sensitivity": {
        "eps": float,
        "finite_difference": bool,
    },
}


def _check_block(block: dict, schema: dict, path: str):
    if not isinstance(block, dict):
        raise ConfigError(f"config error at {path}: expected a mapping")
    for key, value in block.items():
        where = f"{path}.{key}" if path else key
        if key not in schema:
            raise ConfigError(f"config error at {where}: unknown key")
        expected = schema[key]
        if isinstance(expected, dict):
            _check_block(value, expected, where)
        elif expected is float:
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ConfigError(f"config error at {where}: expected a number")
        elif expected is int:
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigError(f"config error at {where}: expected an integer")
        elif not isinstance(value, expected):
            raise ConfigError(
                f"config error at {where}: expected {expected.__name__}"
            )


def load_config(path: str) -> dict:
    """Parse and strictly validate a YAML run configuration."""
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config error: file not found: {path}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"config error: invalid YAML in {path}: {exc}")
    if raw is None:
        raw = {}
    _check_block(raw, _SCHEMA, "")
    return raw


def build_model(cfg: dict, grid_n_override=None) -> GameModel:
    """Assemble a GameModel from the validated config blocks."""
    m = cfg.get("model", {})
    kind = m.get("kernel", "uniform")
    if kind == "uniform":
        kernel = UniformKernel()
    elif kind == "gap":
        kernel = MultiplicativeGapKernel()
    elif kind == "tabulated":
        if "kernel_csv" not in m:
            raise ConfigError("config error at model.kernel_csv: required for tabulated kernel")
        kernel = TabulatedKernel.from_csv(m["kernel_csv"], m.get("kernel_deriv_csv"))
    else:
        raise ConfigError(f"config error at model.kernel: unknown kernel {kind!r}")

    gamma = float(m.get("gamma", 0.5))
    beta = float(m.get("beta", 0.9))
    c = float(m.get("c", 0.2))
    if not 0.0 < beta < 1.0:
        raise ConfigError(f"config error at model.beta: must lie in (0,1), got {beta}")
    if gamma <= 0:
        raise ConfigError(f"config error at model.gamma: must be positive, got {gamma}")
    family = m.get("cost", "linear")
    if family == "linear":
        cost = linear_cost(c, gamma, beta)
    elif family == "power":
        cost = power_cost(c, float(m.get("k", 2.0)), gamma, beta)
    else:
        raise ConfigError(f"config error at model.cost: unknown cost family {family!r}")

    num = cfg.get("numerics", {})
    n = int(grid_n_override or num.get("grid_n", 2000))
    return GameModel(
        kernel=kernel,
        cost=cost,
        grid=make_grid(n),
        bellman_tol=float(num.get("bellman_tol", 1e-8)),
        fixed_point_tol=float(num.get("fixed_point_tol", 1e-6)),
    )


def _out_dir(cfg: dict, override) -> Path:
    d = Path(override or cfg.get("output", {}).get("dir", "out"))
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write_json(path: Path, obj: dict):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _fail(exc: Exception, code: int):
    click.echo(f"error: {exc}", err=True)
    sys.exit(code)


_config_opt = click.option("--config", "config_path", required=True, type=str)
_out_opt = click.option("--out-dir", default=None, type=str)
_grid_opt = click.option("--grid-n", default=None, type=int)
_seed_opt = click.option("--seed", default=None, type=int)
_threads_opt = click.option(
    "--threads", default=1, type=int, help="Upper bound on worker parallelism."
)


@click.group()
def main():
    """Threshold mean field game solvers."""


@main.command()
@_config_opt
@_out_opt
@_grid_opt
@_threads_opt
def solve(config_path, out_dir, grid_n, threads):
    """Solve the stationary equilibrium and write the profile and summary."""
    try:
        cfg = load_config(config_path)
        model = build_model(cfg, grid_n)
    except ConfigError as exc:
        _fail(exc, 1)
    out = _out_dir(cfg, out_dir)
    try:
        sol = solve_equilibrium(model)
    except Exception as exc:
        _fail(exc, 2)
    _write_json(out / "solution.json", sol.summary())
    x = model.grid.nodes
    _write_csv(
        out / "profile.csv",
        ["x", "v", "p"],
        zip(x, sol.v.v.values, sol.mu.density.values),
    )
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    axes[0].plot(x, sol.v.v.values)
    axes[0].set_xlabel("x")
    axes[0].set_ylabel("v(x)")
    axes[1].plot(x, sol.mu.density.values)
    axes[1].set_xlabel("x")
    axes[1].set_ylabel("stationary density")
    for ax in axes:
        if sol.theta.value is not None:
            ax.axvline(sol.theta.value, ls="--", lw=0.8, color="gray")
    fig.tight_layout()
    fig.savefig(out / "solve.png", dpi=150)
    plt.close(fig)
    click.echo(f"wrote {out}/solution.json, profile.csv, solve.png")


@main.command()
@_config_opt
@_out_opt
@_grid_opt
@_threads_opt
def sensitivity(config_path, out_dir, grid_n, threads):
    """Effort-cost sensitivities: analytic plus optional finite differences."""
    try:
        cfg = load_config(config_path)
        model = build_model(cfg, grid_n)
    except ConfigError as exc:
        _fail(exc, 1)
    out = _out_dir(cfg, out_dir)
    opts = cfg.get("sensitivity", {})
    try:
        sol = solve_equilibrium(model)
        sens = solve_sensitivities(model, sol)
        payload = {"equilibrium": sol.summary(), "sensitivity": sens.summary()}
        if opts.get("finite_difference", False):
            fd = finite_difference_check(
                model, sol, eps=float(opts.get("eps", 1e-3)), analytic=sens
            )
            payload["finite_difference"] = fd.as_dict()
    except Exception as exc:
        _fail(exc, 2)
    _write_json(out / "sensitivity.json", payload)
    x = model.grid.nodes
    branch = np.where(x <= sens.w.boundary, "lower", "upper")
    _write_csv(
        out / "w.csv", ["x", "w", "branch"], zip(x, sens.w.values, branch)
    )
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    axes[0].plot(x, sol.v.v.values)
    axes[0].set_ylabel("v(x)")
    lo = x <= sens.w.boundary
    axes[1].plot(x[lo], sens.w.values[lo], color="C1")
    axes[1].plot(x[~lo], sens.w.values[~lo], color="C1")
    axes[1].set_ylabel("w(x)")
    for ax in axes:
        ax.set_xlabel("x")
        ax.axvline(sens.w.boundary, ls="--", lw=0.8, color="gray")
    fig.tight_layout()
    fig.savefig(out / "sensitivity.png", dpi=150)
    plt.close(fig)
    click.echo(f"wrote {out}/sensitivity.json, w.csv, sensitivity.png")


@main.command()
@_config_opt
@_out_opt
@_grid_opt
@_threads_opt
def curve(config_path, out_dir, grid_n, threads):
    """Sweep the threshold against the effort cost, and the mean against theta."""
    try:
        cfg = load_config(config_path)
        model = build_model(cfg, grid_n)
    except ConfigError as exc:
        _fail(exc, 1)
    out = _out_dir(cfg, out_dir)
    opts = cfg.get("curve", {})
    rho = float(opts.get("rho", model.cost.beta))
    r_min = float(opts.get("r_min", 0.05))
    r_max = float(opts.get("r_max", 5.0))
    points = int(opts.get("points", 25))
    try:
        tc = threshold_cost_curve(
            model.cost.R1, model.kernel, rho, np.linspace(r_min, r_max, points), model.grid
        )
        thetas = np.linspace(0.05, 0.95, 19)
        zs = [mean_field_of_theta(model.kernel, t, model.grid) for t in thetas]
    except Exception as exc:
        _fail(exc, 2)
    _write_csv(
        out / "threshold_curve.csv",
        ["r", "kind", "theta"],
        [(r, th.kind.value, th.cut) for r, th in zip(tc.r_values, tc.thresholds)],
    )
    _write_csv(out / "mean_curve.csv", ["theta", "z"], zip(thetas, zs))
    _write_json(out / "curve.json", {"r_lower": tc.r_lower, "r_upper": tc.r_upper})
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    cuts = [min(th.cut, 1.05) for th in tc.thresholds]
    axes[0].plot(tc.r_values, cuts, marker=".")
    axes[0].set_xlabel("effort cost r")
    axes[0].set_ylabel("threshold")
    axes[1].plot(thetas, zs, marker=".")
    axes[1].set_xlabel("theta")
    axes[1].set_ylabel("stationary mean z")
    fig.tight_layout()
    fig.savefig(out / "curve.png", dpi=150)
    plt.close(fig)
    click.echo(f"wrote {out}/threshold_curve.csv, mean_curve.csv, curve.json, curve.png")


@main.command()
@_config_opt
@_out_opt
@_grid_opt
@_seed_opt
@_threads_opt
def simulate(config_path, out_dir, grid_n, seed, threads):
    """Run a finite population under a threshold policy and summarize it."""
    try:
        cfg = load_config(config_path)
        model = build_model(cfg, grid_n)
    except ConfigError as exc:
        _fail(exc, 1)
    out = _out_dir(cfg, out_dir)
    opts = cfg.get("simulate", {})
    try:
        if "theta" in opts:
            policy = Threshold.interior(float(opts["theta"]))
        else:
            policy = solve_equilibrium(model).theta
        sim_cfg = SimConfig(
            N=int(opts.get("N", 10_000)),
            T=int(opts.get("T", 2000)),
            seed=int(seed if seed is not None else opts.get("seed", 0)),
            policy=policy,
            burn_in=int(opts.get("burn_in", 500)),
            initial_law=opts.get("initial_law", "all-zero"),
            bins=int(opts.get("bins", 50)),
            window=int(opts.get("window", 100)),
        )
        stats = simulate_population(model, sim_cfg)
        payload = stats.summary()
        payload["policy"] = {"kind": policy.kind.value, "value": policy.value}
        if policy.kind.value == "interior":
            dist = stationary_distribution(model.kernel, policy, model.grid)
            tv, w1 = empirical_vs_stationary(stats, dist)
            payload["tv_distance"] = tv
            payload["w1_distance"] = w1
    except (ValueError,) as exc:
        _fail(exc, 1)
    except Exception as exc:
        _fail(exc, 2)
    _write_json(out / "simulate.json", payload)
    _write_csv(
        out / "trajectory.csv",
        ["t", "population_avg"],
        enumerate(stats.trajectory),
    )
    _write_csv(
        out / "histogram.csv",
        ["bin_left", "bin_right", "mass"],
        zip(stats.hist_edges[:-1], stats.hist_edges[1:], stats.hist_masses),
    )
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    axes[0].plot(stats.trajectory)
    axes[0].set_xlabel("t")
    axes[0].set_ylabel("population average")
    centers = 0.5 * (stats.hist_edges[:-1] + stats.hist_edges[1:])
    axes[1].bar(centers, stats.hist_masses, width=np.diff(stats.hist_edges))
    axes[1].set_xlabel("x")
    axes[1].set_ylabel("mass")
    fig.tight_layout()
    fig.savefig(out / "simulate.png", dpi=150)
    plt.close(fig)
    click.echo(f"wrote {out}/simulate.json, trajectory.csv, histogram.csv, simulate.png")


@main.command()
@_config_opt
@_out_opt
@_grid_opt
@_threads_opt
def verify(config_path, out_dir, grid_n, threads):
    """Solve, then re-check every residual of the equilibrium system."""
    try:
        cfg = load_config(config_path)
        model = build_model(cfg, grid_n)
    except ConfigError as exc:
        _fail(exc, 1)
    out = _out_dir(cfg, out_dir)
    try:
        sol = solve_equilibrium(model)
        report = verify_equilibrium(model, sol)
    except Exception as exc:
        _fail(exc, 2)
    payload = {"solution": sol.summary(), "verification": report.as_dict()}
    _write_json(out / "verify.json", payload)
    click.echo(f"wrote {out}/verify.json")
    if not report.passed:
        click.echo("verification FAILED", err=True)
        sys.exit(2)
    click.echo("verification passed")


@main.command()
@_out_opt
@click.option("--grid-n", default=4000, type=int)
@_threads_opt
def example2(out_dir, grid_n, threads):
    """Built-in benchmark: linear cost c=0.2, gamma=0.5, beta=0.9, uniform kernel.

    Emits the six headline values (v0, theta, z from the closed-form
    equilibrium; w0, theta_gamma, z_gamma from the closed-form sensitivity
    system), cross-checked against the independent grid pipeline. Exits 3 if
    any cross-check misses its documented tolerance.
    """
    c, gamma, beta = 0.2, 0.5, 0.9
    out = Path(out_dir or "out")
    out.mkdir(parents=True, exist_ok=True)
    try:
        v0, theta, z = solve_uniform_equilibrium_closed_form(c, gamma, beta)
        w0, theta_g, z_g = solve_uniform_sensitivity_closed_form(
            (v0, theta, z), gamma, beta, c
        )
        model = GameModel(
            kernel=UniformKernel(),
            cost=linear_cost(c, gamma, beta),
            grid=make_grid(grid_n),
        )
        sol = solve_equilibrium(model)
        sens = solve_sensitivities(model, sol)
    except Exception as exc:
        _fail(exc, 2)

    checks = {
        "v0": (v0, float(sol.v.v.values[0]), 2e-3),
        "theta": (theta, sol.theta.value, 2e-3),
        "z": (z, sol.z, 2e-3),
        "w0": (w0, sens.w0, 1e-2),
        "theta_gamma": (theta_g, sens.theta_gamma, 1e-2),
        "z_gamma": (z_g, sens.z_gamma, 1e-2),
    }
    cross = {
        name: {
            "closed_form": a,
            "grid": b,
            "tolerance": tol,
            "ok": abs(a - b) <= tol,
        }
        for name, (a, b, tol) in checks.items()
    }
    payload = {
        "values": {
            "v0": v0,
            "theta": theta,
            "z": z,
            "w0": w0,
            "theta_gamma": theta_g,
            "z_gamma": z_g,
        },
        "cross_checks": cross,
    }
    _write_json(out / "example2.json", payload)

    x = model.grid.nodes
    branch = np.where(x <= sens.w.boundary, "lower", "upper")
    _write_csv(
        out / "fig1.csv",
        ["x", "v", "w", "branch"],
        zip(x, sol.v.v.values, sens.w.values, branch),
    )
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    axes[0].plot(x, sol.v.v.values)
    axes[0].set_ylabel("v(x)")
    lo = x <= sens.w.boundary
    axes[1].plot(x[lo], sens.w.values[lo], color="C1")
    axes[1].plot(x[~lo], sens.w.values[~lo], color="C1")
    axes[1].set_ylabel("w(x)")
    for ax in axes:
        ax.set_xlabel("x")
        ax.axvline(theta, ls="--", lw=0.8, color="gray")
    fig.tight_layout()
    fig.savefig(out / "example2.png", dpi=150)
    plt.close(fig)
    click.echo(f"wrote {out}/example2.json, fig1.csv, example2.png")
    if not all(item["ok"] for item in cross.values()):
        click.echo("cross-check FAILED", err=True)
        sys.exit(3)


if __name__ == "__main__":
    main()
