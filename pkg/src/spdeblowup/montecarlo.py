"""Reproducible Monte Carlo ensembles and the bound-verification suite.

Trajectory k always draws from ``path_stream(master_seed, k)`` and paths are
processed in fixed-size chunks, so every statistic is a function of the
config alone. Worker processes only change who computes a chunk; results are
reduced in trajectory order.
"""
from __future__ import annotations

import functools
import math
import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from . import bounds as bd
from .functionals import (
    CC4Status,
    ModelParams,
    cc4_check,
    check_cond2,
    crossing_batch,
    log_integrand,
    running_integral,
)
from .noise import (
    DependenceKind,
    DependenceMode,
    TimeGrid,
    cholesky_factor,
    path_stream,
    sample_noise_batch,
    volterra_matrix,
)
from .special import reg_gamma_upper

DEFAULT_CHUNK = 250
LEVEL = 0.95


@dataclass(frozen=True)
class ExperimentConfig:
    params: ModelParams
    dependence: DependenceMode
    grid: TimeGrid
    n_paths: int
    master_seed: int = 0
    T_values: tuple = ()
    gamma: Optional[bd.GammaLawParams] = None
    chunk: int = DEFAULT_CHUNK
    rule: str = "trapezoid"

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError(f"n_paths must be >= 1, got {self.n_paths}")
        if self.chunk < 1:
            raise ValueError("chunk must be >= 1")
        object.__setattr__(self, "T_values", tuple(float(t) for t in self.T_values))
        for T in self.T_values:
            if not 0 < T <= self.grid.T * (1 + 1e-12):
                raise ValueError(f"T={T} outside (0, horizon={self.grid.T}]")

    def header(self) -> list:
        """Every input that influences the results, in a fixed order."""
        p = self.params
        rows = [
            ("model.H", p.H),
            ("model.beta", p.beta),
            ("model.C", p.C_low),
            ("model.Lambda", p.Lambda),
            ("model.lambda0", p.lambda0),
            ("model.p_scale", p.p_scale),
            ("model.pairing", p.pairing),
            ("model.psi_sup", p.psi_sup),
        ]
        for name in ("a", "b", "k"):
            f = getattr(p, name)
            rows += [(f"coeff.{name}.c", f.c), (f"coeff.{name}.e", f.e)]
        rows += [
            ("noise.mode", str(self.dependence)),
            ("grid.T", self.grid.T),
            ("grid.n_steps", self.grid.n_steps),
            ("mc.n_paths", self.n_paths),
            ("mc.seed", self.master_seed),
            ("mc.chunk", self.chunk),
            ("experiment.T_values", " ".join(_fmt(t) for t in self.T_values)),
            ("experiment.eta", None if self.gamma is None else self.gamma.eta),
            ("experiment.c1", None if self.gamma is None else self.gamma.c1),
            ("quadrature", self.rule),
        ]
        return rows


# ---------------------------------------------------------------- intervals


@dataclass(frozen=True)
class EstimateResult:
    estimate: float
    lo: float
    hi: float
    n_effective: int
    censored_fraction: float = 0.0
    label: str = ""

    def __post_init__(self):
        if not (self.lo <= self.estimate <= self.hi):
            raise ValueError(f"interval [{self.lo}, {self.hi}] excludes {self.estimate}")
        if not 0.0 <= self.censored_fraction <= 1.0:
            raise ValueError("censored fraction outside [0, 1]")


def wilson(k: int, n: int, level: float = LEVEL):
    ci = stats.binomtest(int(k), int(n)).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


def proportion(k: int, n: int, censored: float = 0.0, label: str = "") -> EstimateResult:
    lo, hi = wilson(k, n)
    est = k / n
    return EstimateResult(est, min(lo, est), max(hi, est), n, censored, label)


def mean_interval(x: np.ndarray, censored: float = 0.0, label: str = "") -> EstimateResult:
    x = np.asarray(x, dtype=float)
    n = len(x)
    m = float(x.mean())
    if n < 2:
        return EstimateResult(m, -math.inf, math.inf, n, censored, label)
    half = stats.t.ppf(0.5 + LEVEL / 2, n - 1) * float(x.std(ddof=1)) / math.sqrt(n)
    return EstimateResult(m, m - half, m + half, n, censored, label)


# ---------------------------------------------------------------- chunked execution


def chunk_indices(n_paths: int, size: int) -> list:
    return [np.arange(i, min(i + size, n_paths)) for i in range(0, n_paths, size)]


def map_chunks(fn: Callable, chunks: Sequence, workers: int = 1) -> list:
    """``[fn(c) for c in chunks]``, optionally across forked processes, in order."""
    if workers <= 1 or len(chunks) <= 1:
        return [fn(c) for c in chunks]
    ctx = mp.get_context("fork")
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
        return list(pool.map(fn, chunks))


def warm_caches(config: ExperimentConfig) -> None:
    """Build kernel matrices in the parent so forked workers share them."""
    p, grid = config.params, config.grid
    if p.b.is_zero:
        return
    if config.dependence.kind is DependenceKind.INDEPENDENT:
        cholesky_factor(grid, p.H)
    else:
        volterra_matrix(grid, p.H)


def _path_stats(config: ExperimentConfig, want_mxi: bool, indices: np.ndarray) -> dict:
    p, grid = config.params, config.grid
    batch = sample_noise_batch(
        grid, p.H, p.a, p.b, config.dependence, config.master_seed, indices, with_fbm=False
    )
    E = running_integral(log_integrand(p, grid.times, batch.mixed), grid.dt, config.rule)
    out = {
        "tau_star": crossing_batch(E, p.xi, grid.times)[0],
        "tau_lower": crossing_batch(E, p.lower_threshold, grid.times)[0],
    }
    if want_mxi:
        out["m_sup"], out["m_horizon"] = bd.m_xi_samples(p, grid, batch.mixed)
    return out


def path_statistics(config: ExperimentConfig, want_mxi: bool = False, workers: int = 1) -> dict:
    warm_caches(config)
    fn = functools.partial(_path_stats, config, want_mxi)
    parts = map_chunks(fn, chunk_indices(config.n_paths, config.chunk), workers)
    return {key: np.concatenate([part[key] for part in parts]) for key in parts[0]}


# ---------------------------------------------------------------- estimators


def cdf_from_times(tau: np.ndarray, T_values, horizon: float) -> list:
    """Empirical P(tau <= T); NaN entries are paths censored at ``horizon``."""
    n = len(tau)
    censored = float(np.mean(np.isnan(tau)))
    out = []
    for T in T_values:
        k = int(np.sum(tau <= T))  # NaN compares False
        out.append(proportion(k, n, censored, f"P(tau* <= {_fmt(T)})"))
    return out


def estimate_tau_star_cdf(config: ExperimentConfig, T_values=None, workers: int = 1) -> list:
    T_values = config.T_values if T_values is None else tuple(T_values)
    for T in T_values:
        if T > config.grid.T * (1 + 1e-12):
            raise ValueError(f"T={T} exceeds the grid horizon {config.grid.T}")
    tau = path_statistics(config, workers=workers)["tau_star"]
    return cdf_from_times(tau, T_values, config.grid.T)


def estimate_m_xi(config: ExperimentConfig, workers: int = 1) -> EstimateResult:
    """Mean of the per-path supremum entering the m_xi lower bound.

    The censoring fraction counts paths whose integrand had not decayed below
    the truncation ratio within the grid.
    """
    if config.dependence.kind is not DependenceKind.IDENTICAL:
        raise ValueError("m_xi is defined for the identical coupling only")
    st = path_statistics(config, want_mxi=True, workers=workers)
    censored = float(np.mean(np.isnan(st["m_horizon"])))
    return mean_interval(st["m_sup"], censored, "m_xi")


@dataclass(frozen=True)
class HittingRow:
    index: int
    tau_lower: float
    tau_star: float
    cond2: Optional[float]
    cc4: CC4Status

    @property
    def ordered(self) -> bool:
        lo = math.inf if math.isnan(self.tau_lower) else self.tau_lower
        up = math.inf if math.isnan(self.tau_star) else self.tau_star
        return lo <= up


def _hitting_rows(config: ExperimentConfig, indices: np.ndarray) -> list:
    p, grid = config.params, config.grid
    batch = sample_noise_batch(
        grid, p.H, p.a, p.b, config.dependence, config.master_seed, indices, with_fbm=False
    )
    E = running_integral(log_integrand(p, grid.times, batch.mixed), grid.dt, config.rule)
    up = crossing_batch(E, p.xi, grid.times)[0]
    low = crossing_batch(E, p.lower_threshold, grid.times)[0]
    rows = []
    for r, k in enumerate(indices):
        path = batch.path(r)
        w = check_cond2(p, path, config.rule)
        rows.append(HittingRow(int(k), float(low[r]), float(up[r]), w.value, cc4_check(p, path, rule=config.rule)))
    return rows


def hitting_table(config: ExperimentConfig, workers: int = 1) -> list:
    """Per-path lower time, upper time, sufficient-condition time and global-envelope status."""
    warm_caches(config)
    fn = functools.partial(_hitting_rows, config)
    parts = map_chunks(fn, chunk_indices(config.n_paths, config.chunk), workers)
    return [row for part in parts for row in part]


# ---------------------------------------------------------------- exponential functional law


@dataclass(frozen=True)
class DYReport:
    mu: float
    n_paths: int
    horizon: float
    dt: float
    ks: float
    p_value: float
    critical: float
    allowance: float
    tail_bound: float

    @property
    def passed(self) -> bool:
        return self.ks < self.critical + self.allowance


def dy_cdf(x, mu: float):
    """P(int_0^inf exp(2(B_s - mu s)) ds <= x) = Q(mu, 1/(2x))."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = [reg_gamma_upper(mu, 0.5 / v) for v in x[pos]]
    return out


def dy_tail_bound(mu: float, horizon: float) -> float:
    """Rough size of the neglected tail, using a 3 sqrt(s) envelope for B_s."""
    rate = 2 * mu - 3 / math.sqrt(horizon)
    if rate <= 0:
        return math.inf
    return math.exp(2 * (3 * math.sqrt(horizon) - mu * horizon)) / rate


def dy_grid_allowance(mu: float, dt: float) -> float:
    """KS distance produced by a relative error sqrt(dt) in the integral."""
    x = np.logspace(-4, 4, 4001)
    return float(np.max(np.abs(dy_cdf(x * (1 + math.sqrt(dt)), mu) - dy_cdf(x, mu))))


def _dy_chunk(mu: float, grid: TimeGrid, seed: int, indices: np.ndarray) -> np.ndarray:
    n = grid.n_steps
    out = np.empty(len(indices))
    sq = math.sqrt(grid.dt)
    drift = mu * grid.times
    for row, k in enumerate(indices):
        z = path_stream(seed, int(k)).standard_normal(n)
        B = np.concatenate(([0.0], np.cumsum(z * sq)))
        f = np.exp(2 * (B - drift))
        out[row] = grid.dt * (f.sum() - 0.5 * (f[0] + f[-1]))
    return out


def dufresne_yor_check(
    mu: float,
    n_paths: int,
    grid: TimeGrid,
    seed: int = 0,
    workers: int = 1,
    chunk: int = 1000,
    tail_tol: float = 1e-6,
) -> DYReport:
    """KS comparison of the truncated integral of exp(2(B_s - mu s)) with 1/(2 Z_mu)."""
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")
    tail = dy_tail_bound(mu, grid.T)
    if not tail < tail_tol:
        raise ValueError(f"horizon {grid.T} leaves a tail of about {tail:.3g}; use a longer horizon")
    fn = functools.partial(_dy_chunk, mu, grid, seed)
    samples = np.concatenate(map_chunks(fn, chunk_indices(n_paths, chunk), workers))
    res = stats.kstest(samples, lambda x: dy_cdf(x, mu))
    return DYReport(
        mu,
        n_paths,
        grid.T,
        grid.dt,
        float(res.statistic),
        float(res.pvalue),
        1.36 / math.sqrt(n_paths),
        dy_grid_allowance(mu, grid.dt),
        tail,
    )


# ---------------------------------------------------------------- the suite


@dataclass
class BoundRow:
    name: str
    T: Optional[float]
    kind: str
    applicable: bool
    value: Optional[float]
    vacuous: bool
    estimate: Optional[EstimateResult]
    relation: str
    violated: bool
    note: str = ""


COLUMNS = (
    "bound", "T", "kind", "applicable", "value", "vacuous",
    "mc_estimate", "ci_lo", "ci_hi", "censored", "relation", "violated", "note",
)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "yes" if x else "no"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, float):
        return f"{x:.10g}"
    return str(x)


@dataclass
class BoundReport:
    header: list
    rows: list = field(default_factory=list)

    @property
    def n_violations(self) -> int:
        return sum(r.violated for r in self.rows)

    def _cells(self, r: BoundRow) -> list:
        e = r.estimate
        return [
            r.name, r.T, r.kind, r.applicable, r.value, r.vacuous,
            None if e is None else e.estimate,
            None if e is None else e.lo,
            None if e is None else e.hi,
            None if e is None else e.censored_fraction,
            r.relation, r.violated, r.note,
        ]

    def _header_lines(self) -> list:
        return [f"# {k} = {_fmt(v)}" for k, v in self.header]

    def to_csv(self) -> str:
        lines = self._header_lines() + [",".join(COLUMNS)]
        for r in self.rows:
            lines.append(",".join(_fmt(c).replace(",", ";") for c in self._cells(r)))
        return "\n".join(lines) + "\n"

    def to_table(self) -> str:
        cells = [list(COLUMNS)] + [[_fmt(c) for c in self._cells(r)] for r in self.rows]
        widths = [max(len(row[i]) for row in cells) for i in range(len(COLUMNS))]
        body = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in cells]
        body.insert(1, "  ".join("-" * w for w in widths))
        tail = f"violations: {self.n_violations}"
        return "\n".join(self._header_lines() + [""] + body + ["", tail]) + "\n"


def _upper_row(bv: bd.BoundValue, T: float, est: EstimateResult, scale: float) -> BoundRow:
    if not bv.applicable:
        return BoundRow(bv.name, T, "upper", False, None, False, est, "P(tau* <= T) <= bound", False, bv.reason)
    value = bv.value * scale
    return BoundRow(bv.name, T, "upper", True, value, value >= 1.0, est, "P(tau* <= T) <= bound", est.lo > value)


def _lower_row(bv: bd.BoundValue, est: EstimateResult, scale: float, relation: str, note: str = "") -> BoundRow:
    if not bv.applicable:
        return BoundRow(bv.name, None, "lower", False, None, False, est, relation, False, bv.reason)
    value = bv.value * scale
    return BoundRow(bv.name, None, "lower", True, value, value <= 0.0, est, relation, value > est.hi, note)


def run_bound_suite(config: ExperimentConfig, workers: int = 1, bound_scale: float = 1.0) -> BoundReport:
    """Evaluate every analytic bound next to its Monte Carlo counterpart on shared paths.

    Lower bounds target P(tau < inf); the simulable proxy is P(tau* <= horizon),
    and the chain P(tau < inf) >= P(tau* < inf) >= P(tau* <= horizon) makes the
    comparison one-sided. ``bound_scale`` multiplies every bound (a negative
    control: 0.01 must trip the upper-bound checks).
    """
    p, dep, grid = config.params, config.dependence, config.grid
    mxi_reason = bd.thm4_applicability(p, dep)
    st = path_statistics(config, want_mxi=not mxi_reason, workers=workers)
    tau = st["tau_star"]
    report = BoundReport(config.header())

    cdf = cdf_from_times(tau, config.T_values, grid.T)
    for T, est in zip(config.T_values, cdf):
        identical = dep.kind is DependenceKind.IDENTICAL
        if identical:
            report.rows.append(_upper_row(bd.thm2_upper(p, T, dependence=dep), T, est, bound_scale))
        else:
            report.rows.append(
                _upper_row(bd.BoundValue.inapplicable("malliavin_tail", "upper", "requires identical coupling"), T, est, 1.0)
            )
        report.rows.append(_upper_row(bd.thm3_dependent_upper(p, T), T, est, bound_scale))
        report.rows.append(_upper_row(bd.thm3_independent_upper(p, T, dep), T, est, bound_scale))

    proxy = cdf_from_times(tau, [grid.T], grid.T)[0]
    chain = "P(tau<inf) >= P(tau*<inf) >= P(tau*<=horizon) ~ bound"
    if mxi_reason:
        b4 = bd.BoundValue.inapplicable("mxi_lower", "lower", mxi_reason)
        note = ""
    else:
        b4 = bd.thm4_from_samples(p, st["m_sup"], st["m_horizon"])
        note = f"m_xi={_fmt(b4.extras['m_xi'])} L_xi={_fmt(b4.extras['L_xi'])}"
    report.rows.append(_lower_row(b4, proxy, bound_scale, "consistent-with: " + chain, note))

    if config.gamma is None:
        b5 = bd.BoundValue.inapplicable("gamma_law", "lower", "eta and c1 not given")
    else:
        b5 = bd.thm5_lower(p, config.gamma, dep)
    report.rows.append(_lower_row(b5, proxy, bound_scale, "consistent-with: " + chain))

    rem = bd.remark_const_lower(p)
    note = ""
    if rem.applicable:
        inside = proxy.lo <= rem.value * bound_scale <= proxy.hi
        note = "equality inside CI" if inside else "equality outside CI"
    report.rows.append(_lower_row(rem, proxy, bound_scale, "equals P(tau*<inf) ~ P(tau*<=horizon)", note))
    return report
