"""Command-line entry point.

Precedence, lowest to highest: built-in defaults, the ``--config`` file,
``--set key=value`` overrides, then the dedicated flags (``--seed``).

Exit codes: 0 success, 1 I/O error, 2 invalid configuration or arguments,
3 a checked inequality was violated, 4 the solver hit a numerical fault.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
from typing import Optional

import numpy as np

from . import montecarlo as mc
from .config import Config, ConfigError, describe_keys, load_config
from .functionals import tau_lower, tau_star
from .noise import TimeGrid, sample_noise_batch
from .spde import NumericalFault, check_sandwich, eigen_initial, solve_rpde

EXIT_OK, EXIT_IO, EXIT_CONFIG, EXIT_VIOLATION, EXIT_FAULT = 0, 1, 2, 3, 4


def _common() -> argparse.ArgumentParser:
    # SUPPRESS lets the same flags appear before or after the command name
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", metavar="PATH", default=argparse.SUPPRESS, help="key=value config file")
    p.add_argument("--seed", type=int, metavar="U64", default=argparse.SUPPRESS, help="master seed (overrides mc.seed)")
    p.add_argument("--workers", type=int, metavar="N", default=argparse.SUPPRESS, help="worker processes (default 1)")
    p.add_argument("--out", metavar="DIR", default=argparse.SUPPRESS, help="output directory (default: results)")
    p.add_argument(
        "--set", action="append", metavar="KEY=VALUE", default=argparse.SUPPRESS, help="override one config key"
    )
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(
        prog="spdeblowup",
        description="Blowup times and blowup-probability bounds for a semilinear SPDE with mixed noise.",
        epilog="config keys:\n" + describe_keys(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
        parents=[common],
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("noise", parents=[common], help="write sampled B, B^H, N paths as columns")
    p.add_argument("--paths", type=int, default=1, help="number of paths to write (default 1)")

    sub.add_parser("tau", parents=[common], help="per-path lower/upper hitting times, sufficient-condition time, envelope status")

    p = sub.add_parser("bounds", parents=[common], help="analytic bounds against Monte Carlo estimates")
    p.add_argument("--scale-bounds", type=float, default=1.0, help="multiply every bound (negative control)")

    p = sub.add_parser("solve", parents=[common], help="solve the SPDE path by path and write traces")
    p.add_argument("--paths", type=int, default=1, help="number of trajectories to solve (default 1)")

    p = sub.add_parser("dycheck", parents=[common], help="Kolmogorov-Smirnov check of the exponential-functional law")
    p.add_argument("--mu", type=float, default=1.0, help="drift mu > 0 (default 1)")
    p.add_argument("--n-paths", type=int, default=10_000, help="number of paths (default 10000)")
    p.add_argument("--horizon", type=float, default=30.0, help="truncation horizon (default 30)")
    p.add_argument("--n-steps", type=int, default=30_000, help="time steps over the horizon (default 30000)")

    p = sub.add_parser("suite", parents=[common], help="tau table and bound report together")
    p.add_argument("--scale-bounds", type=float, default=1.0, help="multiply every bound (negative control)")
    return parser


def resolve_config(args) -> Config:
    cfg = load_config(args.config) if getattr(args, "config", None) else Config.default()
    updates = {}
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        updates[key.strip()] = value
    if getattr(args, "seed", None) is not None:
        updates["mc.seed"] = str(args.seed)
    return cfg.override(updates) if updates else cfg


def _write(out_dir: str, name: str, text: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    with open(path, "w") as fh:
        fh.write(text)
    return path


def _num(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "censored"
    return f"{x:.10g}"


def _header(cfg: Config) -> str:
    return "".join(f"# {line}\n" for line in cfg.echo().splitlines())


# ---------------------------------------------------------------- commands


def cmd_noise(cfg: Config, out: str, n_paths: int) -> int:
    grid, p = cfg.grid(), cfg.params()
    batch = sample_noise_batch(grid, p.H, p.a, p.b, cfg.dependence(), cfg["mc.seed"], np.arange(n_paths))
    for row in range(n_paths):
        cols = np.column_stack([grid.times, batch.bm[row], batch.fbm[row], batch.mixed[row]])
        lines = [f"{t:.10g} {b:.17g} {bh:.17g} {n:.17g}" for t, b, bh, n in cols]
        text = _header(cfg) + f"# path = {row}\n# t B BH N\n" + "\n".join(lines) + "\n"
        _write(out, f"noise_{row:06d}.txt", text)
    print(f"wrote {n_paths} path file(s) to {out}")
    return EXIT_OK


def tau_text(cfg: Config, workers: int):
    rows = mc.hitting_table(cfg.experiment(), workers)
    lines = ["# path tau_lower tau_star cond2_w cc4 ordered"]
    for r in rows:
        lines.append(
            f"{r.index} {_num(r.tau_lower)} {_num(r.tau_star)} {_num(r.cond2)} {r.cc4.value} {'yes' if r.ordered else 'no'}"
        )
    bad = sum(not r.ordered for r in rows)
    return _header(cfg) + "\n".join(lines) + f"\n# ordering failures: {bad}\n", bad


def cmd_tau(cfg: Config, out: str, workers: int) -> int:
    text, bad = tau_text(cfg, workers)
    _write(out, "tau.txt", text)
    sys.stdout.write(text)
    return EXIT_VIOLATION if bad else EXIT_OK


def cmd_bounds(cfg: Config, out: str, workers: int, scale: float) -> int:
    report = mc.run_bound_suite(cfg.experiment(), workers, scale)
    _write(out, "bounds.csv", report.to_csv())
    _write(out, "bounds.txt", report.to_table())
    sys.stdout.write(report.to_table())
    return EXIT_VIOLATION if report.n_violations else EXIT_OK


def cmd_solve(cfg: Config, out: str, n_paths: int) -> int:
    domain = cfg.domain()
    params, grid = cfg.params(domain), cfg.grid()
    if not math.isclose(params.lambda0, domain.lambda0):
        raise ConfigError(f"model.lambda0 must equal the domain eigenvalue {domain.lambda0} for the solver")
    batch = sample_noise_batch(grid, params.H, params.a, params.b, cfg.dependence(), cfg["mc.seed"], np.arange(n_paths))
    substeps = cfg["solver.substeps"] or None
    lines = ["# path tau_lower tau_num tau_star sandwich"]
    failures = 0
    os.makedirs(out, exist_ok=True)
    for row in range(n_paths):
        N = batch.path(row)
        rec = solve_rpde(
            eigen_initial(params.p_scale, domain), params, N, cfg["solver.threshold"], domain, substeps
        )
        rec.write_trace(os.path.join(out, f"trace_{row:06d}.txt"))
        lo, up = tau_lower(params, N), tau_star(params, N)
        sw = check_sandwich(lo, rec.tau_num, up, grid.dt)
        failures += not sw.ok
        lines.append(f"{row} {lo} {rec.tau_num} {up} {'ok' if sw.ok else 'FAIL: ' + sw.reason}")
    text = _header(cfg) + "\n".join(lines) + "\n"
    _write(out, "solve.txt", text)
    sys.stdout.write(text)
    return EXIT_VIOLATION if failures else EXIT_OK


def cmd_dycheck(cfg: Config, out: str, workers: int, mu: float, n_paths: int, horizon: float, n_steps: int) -> int:
    rep = mc.dufresne_yor_check(mu, n_paths, TimeGrid(horizon, n_steps), cfg["mc.seed"], workers)
    text = (
        f"# mu = {mu!r}\n# n_paths = {n_paths}\n# horizon = {horizon!r}\n# n_steps = {n_steps}\n"
        f"# seed = {cfg['mc.seed']}\n"
        f"ks {rep.ks:.10g}\np_value {rep.p_value:.10g}\ncritical {rep.critical:.10g}\n"
        f"allowance {rep.allowance:.10g}\ntail_bound {rep.tail_bound:.3g}\n"
        f"result {'pass' if rep.passed else 'FAIL'}\n"
    )
    _write(out, "dycheck.txt", text)
    sys.stdout.write(text)
    return EXIT_OK if rep.passed else EXIT_VIOLATION


def cmd_suite(cfg: Config, out: str, workers: int, scale: float) -> int:
    _write(out, "config.txt", cfg.echo())
    text, bad = tau_text(cfg, workers)
    _write(out, "tau.txt", text)
    report = mc.run_bound_suite(cfg.experiment(), workers, scale)
    _write(out, "bounds.csv", report.to_csv())
    _write(out, "bounds.txt", report.to_table())
    sys.stdout.write(report.to_table())
    print(f"ordering failures: {bad}")
    return EXIT_VIOLATION if (bad or report.n_violations) else EXIT_OK


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    workers = getattr(args, "workers", 1)
    out = getattr(args, "out", "results")
    try:
        if workers < 1:
            raise ConfigError("--workers must be >= 1")
        cfg = resolve_config(args)
        if args.command == "noise":
            return cmd_noise(cfg, out, args.paths)
        if args.command == "tau":
            return cmd_tau(cfg, out, workers)
        if args.command == "bounds":
            return cmd_bounds(cfg, out, workers, args.scale_bounds)
        if args.command == "solve":
            return cmd_solve(cfg, out, args.paths)
        if args.command == "dycheck":
            return cmd_dycheck(cfg, out, workers, args.mu, args.n_paths, args.horizon, args.n_steps)
        return cmd_suite(cfg, out, workers, args.scale_bounds)
    except NumericalFault as exc:
        print(f"numerical fault: {exc}", file=sys.stderr)
        return EXIT_FAULT
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
