"""Analytic blowup-probability bounds.

Upper bounds on P(tau* <= T) and lower bounds on P(tau* < inf). Every
function returns a ``BoundValue``; hypotheses that fail are reported through
``applicable=False`` rather than raised, and bounds are never clamped to
[0, 1].
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate, optimize

from .functionals import ModelParams, log_integrand, running_integral
from .noise import (
    CoefficientSpec,
    DependenceKind,
    DependenceMode,
    TimeGrid,
    c_H,
    is_high_hurst,
    kernel_KH_closed,
    sample_noise_batch,
)
from .special import reg_gamma_lower

NEG_INF = -math.inf
EQ_RTOL = 1e-12
DECAY_RATIO = 1e-12


@dataclass
class BoundValue:
    name: str
    kind: str  # "upper" or "lower"
    value: Optional[float]
    applicable: bool = True
    reason: str = ""
    extras: dict = field(default_factory=dict)

    @property
    def vacuous(self) -> bool:
        if self.value is None:
            return False
        return self.value >= 1.0 if self.kind == "upper" else self.value <= 0.0

    @classmethod
    def inapplicable(cls, name: str, kind: str, reason: str) -> "BoundValue":
        return cls(name, kind, None, False, reason)


def _eq(x: float, y: float) -> bool:
    return math.isclose(x, y, rel_tol=EQ_RTOL, abs_tol=EQ_RTOL)


# ---------------------------------------------------------------- exponents


@dataclass(frozen=True)
class ExponentTriple:
    """Growth exponents of int a^2 ~ C1 t^2l, int b^2 ~ C2 t^2m, int k^2 ~ C3 t^2p.

    A coefficient that vanishes identically has exponent -inf and amplitude 0.
    """

    l: float
    m: float
    p: float
    C1: float
    C2: float
    C3: float

    @staticmethod
    def _of(f: CoefficientSpec):
        return (NEG_INF, 0.0) if f.is_zero else (f.q, f.amplitude)

    @classmethod
    def from_params(cls, params: ModelParams) -> "ExponentTriple":
        (l, C1), (m, C2), (p, C3) = cls._of(params.a), cls._of(params.b), cls._of(params.k)
        return cls(l, m, p, C1, C2, C3)

    def fbm_exponent(self, H: float) -> float:
        """H + m - 1/2."""
        return H + self.m - 0.5

    def f_exponent(self, H: float) -> float:
        return max(self.fbm_exponent(H), self.l)


@dataclass(frozen=True)
class GammaLawParams:
    eta: float  # may be math.inf
    c1: float

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError(f"eta must lie in (0, inf], got {self.eta}")
        if not (self.c1 > 0 and math.isfinite(self.c1)):
            raise ValueError(f"c1 must be positive, got {self.c1}")

    def mu(self, beta: float) -> float:
        return (2.0 / beta) * (1.0 / self.eta + 0.5)

    def theta(self, beta: float, xi: float) -> float:
        return 2.0 * self.c1 / (beta**2 * xi)


def mu_hat(params: ModelParams) -> float:
    """Gamma shape for constant k, a: (lambda0 k^2 + a^2) / (a^2 beta)."""
    k, a = params.k.c, params.a.c
    return (params.lambda0 * k**2 + a**2) / (a**2 * params.beta)


# ---------------------------------------------------------------- M(T), mu(T)


def M_T(params: ModelParams, T):
    """2 beta^2 int_0^T a^2 + 4 beta^2 H T^(2H-1) int_0^T b^2."""
    T = np.asarray(T, dtype=float)
    b2 = params.beta**2
    out = 2 * b2 * params.a.sq_integral(T) + 4 * b2 * params.H * T ** (2 * params.H - 1) * params.b.sq_integral(T)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class MuEstimate:
    value: float
    stderr: float
    mode: str

    def __float__(self):
        return self.value


def _weighted_kernel(t: float, s: float, params: ModelParams) -> float:
    """s^(H-1/2) int_s^t b(r) d/dr K^H(r, s) dr, finite as s -> 0."""
    H, b = params.H, params.b
    h = H - 0.5
    if b.is_zero or s >= t:
        return 0.0
    if s <= 0.0:
        # limit: C_H int_0^t b(r) r^(2H-2) dr
        return c_H(H) * b.c * t ** (2 * h + b.e) / (2 * h + b.e)
    if b.is_constant:
        return b.c * float(kernel_KH_closed(t, s, H)) * s**h
    val, _ = integrate.quad(
        lambda r: b.c * r**b.e * r**h, s, t, weight="alg", wvar=(H - 1.5, 0.0), limit=200
    )
    return c_H(H) * val


@functools.lru_cache(maxsize=64)
def kernel_mass(H: float) -> float:
    """int_0^1 K^H(1, s) ds = Cov(B_1, B^H_1) under the Volterra coupling."""
    unit = ModelParams(H=H, b=CoefficientSpec(1.0))
    val, _ = integrate.quad(
        lambda s: _weighted_kernel(1.0, s, unit), 0.0, 1.0, weight="alg", wvar=(0.5 - H, 0.0), limit=200
    )
    return val


def exp_moment_variance(params: ModelParams, t: float) -> float:
    """Var N_t = int_0^t (a(s) + int_s^t b(r) d/dr K^H(r,s) dr)^2 ds (Identical mode)."""
    if t <= 0:
        return 0.0
    H, a = params.H, params.a
    h = H - 0.5

    def integrand(s):
        # multiplied by s^(2H-1); the weight s^(1-2H) restores it
        return (a.c * s**a.e * s**h + _weighted_kernel(t, s, params)) ** 2

    if params.b.is_zero:
        return float(a.sq_integral(t))
    if a.is_constant and params.b.is_constant:
        # self-similarity: int_0^t K(t,s) ds = t^(H+1/2) int_0^1 K(1,s) ds
        b = params.b.c
        return a.c**2 * t + 2 * a.c * b * kernel_mass(H) * t ** (H + 0.5) + b**2 * t ** (2 * H)
    val, _ = integrate.quad(integrand, 0.0, t, weight="alg", wvar=(1.0 - 2 * H, 0.0), limit=200)
    return val


def _mu_analytic(params: ModelParams, T: float) -> float:
    beta = params.beta

    def f(t):
        return math.exp(-beta * params.drift(t) + 0.5 * beta**2 * exp_moment_variance(params, t))

    try:
        val, err = integrate.quad(f, 0.0, T, limit=200)
    except (OverflowError, integrate.IntegrationWarning) as exc:
        raise ArithmeticError(f"analytic mu(T) quadrature failed ({exc}); use montecarlo mode") from exc
    if not math.isfinite(val):
        raise ArithmeticError("analytic mu(T) is not finite; use montecarlo mode")
    return val


def mu_T(
    params: ModelParams,
    T: float,
    mode: str = "analytic",
    dependence: Optional[DependenceMode] = None,
    n_paths: int = 4000,
    n_steps: int = 256,
    seed: int = 0,
) -> MuEstimate:
    """mu(T) = int_0^T exp(-beta(lambda0 K + A)) E[exp(beta N_t)] dt.

    ``analytic`` needs the Identical coupling (nested quadrature over the
    Volterra representation); ``montecarlo`` averages the pathwise functional
    E(T) and works for any coupling.
    """
    dependence = dependence or DependenceMode.identical()
    if not T > 0:
        raise ValueError(f"T must be positive, got {T}")
    if mode == "analytic":
        if dependence.kind is not DependenceKind.IDENTICAL:
            raise ValueError("analytic mu(T) requires the identical coupling; use montecarlo mode")
        return MuEstimate(_mu_analytic(params, T), 0.0, mode)
    if mode != "montecarlo":
        raise ValueError(f"unknown mode {mode!r}")
    grid = TimeGrid(T, n_steps)
    batch = sample_noise_batch(grid, params.H, params.a, params.b, dependence, seed, np.arange(n_paths))
    E = running_integral(log_integrand(params, grid.times, batch.mixed), grid.dt, "trapezoid")[:, -1]
    return MuEstimate(float(E.mean()), float(E.std(ddof=1) / math.sqrt(n_paths)), mode)


# ---------------------------------------------------------------- tail and moment upper bounds


def thm2_upper(
    params: ModelParams,
    T: float,
    mu: Optional[float] = None,
    dependence: Optional[DependenceMode] = None,
) -> BoundValue:
    """2 exp(-ln^2[C beta pairing^beta mu(T)] / (2 M(T))), valid while xi > mu(T)."""
    name = "malliavin_tail"
    dependence = dependence or DependenceMode.identical()
    if dependence.kind is not DependenceKind.IDENTICAL:
        return BoundValue.inapplicable(name, "upper", "requires identical coupling")
    mu = float(mu_T(params, T)) if mu is None else float(mu)
    xi = params.xi
    extras = {"T": T, "mu": mu, "M": M_T(params, T), "xi": xi}
    if not xi > mu:
        return BoundValue(name, "upper", None, False, f"xi={xi:.6g} <= mu(T)={mu:.6g}", extras)
    M = extras["M"]
    x = mu / xi  # = C beta pairing^beta mu
    if mu == 0.0 or M == 0.0:
        value = 0.0
    else:
        value = 2.0 * math.exp(-math.log(x) ** 2 / (2.0 * M))
    return BoundValue(name, "upper", value, True, "", extras)


def _prefactor(params: ModelParams) -> float:
    return params.C_low * params.beta * params.pairing**params.beta


def _quad_exp(log_f, T: float) -> float:
    val, _ = integrate.quad(lambda t: math.exp(min(log_f(t), 700.0)), 0.0, T, limit=200)
    return val


def thm3_dependent_upper(params: ModelParams, T: float) -> BoundValue:
    """Holder/Chebyshev bound, valid for any Brownian driver W of the fBm."""
    beta, H = params.beta, params.H
    a2, b2, k2 = params.a.sq_integral, params.b.sq_integral, params.k.sq_integral

    def first(t):
        return -beta * params.lambda0 * k2(t) + 2 * beta**2 * a2(t)

    def second(t):
        return -beta * a2(t) + 4 * beta**2 * H * t ** (2 * H - 1) * b2(t)

    integral = _quad_exp(first, T) + _quad_exp(second, T)
    return BoundValue("holder_any_driver", "upper", _prefactor(params) * integral, True, "", {"T": T})


def thm3_independent_upper(
    params: ModelParams, T: float, dependence: Optional[DependenceMode] = None
) -> BoundValue:
    name = "independent_drivers"
    if dependence is not None and dependence.kind is not DependenceKind.INDEPENDENT:
        return BoundValue.inapplicable(name, "upper", "requires independent B and B^H")
    beta, H = params.beta, params.H

    def log_f(t):
        return (
            -beta * params.lambda0 * params.K(t)
            + 0.5 * (beta**2 - beta) * params.a.sq_integral(t)
            + beta**2 * H * t ** (2 * H - 1) * params.b.sq_integral(t)
        )

    return BoundValue(name, "upper", _prefactor(params) * _quad_exp(log_f, T), True, "", {"T": T})


# ---------------------------------------------------------------- lower bound through m_xi


def thm4_conditions(ex: ExponentTriple, beta: float, H: float) -> bool:
    fb = ex.fbm_exponent(H)
    if _eq(beta, 0.5):
        return ex.p > fb and not _eq(ex.p, fb)
    if beta < 0.5:
        top = max(ex.p, ex.l)
        return top > fb and not _eq(top, fb)
    top = max(ex.l, fb)
    return ex.p > top and not _eq(ex.p, top)


def _f_power(params: ModelParams) -> float:
    return ExponentTriple.from_params(params).f_exponent(params.H)


def L_xi(params: ModelParams, n_grid: int = 2000, t_range=(1e-3, 1e6)):
    """sup_t M(t) / (ln(xi+1) + f(t))^2: log-grid search then golden-section polish.

    Returns (value, argmax).
    """
    fexp = _f_power(params)
    c = math.log(params.xi + 1.0)

    def ratio(t):
        return M_T(params, t) / (c + t**fexp) ** 2

    lt = np.linspace(math.log(t_range[0]), math.log(t_range[1]), n_grid)
    vals = ratio(np.exp(lt))
    i = int(np.argmax(vals))
    best, best_t = float(vals[i]), float(math.exp(lt[i]))
    lo, hi = lt[max(i - 1, 0)], lt[min(i + 1, n_grid - 1)]
    if hi > lo:
        res = optimize.minimize_scalar(
            lambda x: -ratio(math.exp(x)), bounds=(lo, hi), method="bounded", options={"xatol": 1e-10}
        )
        if -res.fun > best:
            best, best_t = float(-res.fun), float(math.exp(res.x))
    return best, best_t


def m_xi_samples(params: ModelParams, grid: TimeGrid, mixed: np.ndarray):
    """Per-path sup_t (ln(E(t)+1) + f(t)) / (ln(xi+1) + f(t)) on the grid.

    Each value is floored at 1, the t -> inf limit of the ratio. Also returns,
    per path, the time where the integrand first stays below DECAY_RATIO of
    its running maximum (NaN if it never does within the grid).
    """
    mixed = np.atleast_2d(mixed)
    times = grid.times
    logf = log_integrand(params, times, mixed)
    E = running_integral(logf, grid.dt, "trapezoid")
    ft = times ** _f_power(params)
    ratio = (np.log1p(E) + ft) / (math.log(params.xi + 1.0) + ft)
    sup = np.maximum(1.0, ratio.max(axis=1))
    runmax = np.maximum.accumulate(logf, axis=1)
    below = logf < runmax + math.log(DECAY_RATIO)
    # first index from which the integrand never recovers above the cutoff
    tail_ok = np.flip(np.logical_and.accumulate(np.flip(below, axis=1), axis=1), axis=1)
    has = tail_ok.any(axis=1)
    first = np.argmax(tail_ok, axis=1)
    horizon = np.where(has, times[first], np.nan)
    return sup, horizon


def thm4_bound_from(m_xi: float, L: float) -> float:
    return 1.0 - math.exp(-((m_xi - 1.0) ** 2) / (2.0 * L))


def thm4_applicability(params: ModelParams, dependence: Optional[DependenceMode] = None) -> str:
    """Empty string when the hypotheses hold, else the reason they fail."""
    dependence = dependence or DependenceMode.identical()
    if dependence.kind is not DependenceKind.IDENTICAL:
        return "requires identical coupling"
    if params.a.is_zero and params.b.is_zero:
        return "no noise"
    if not thm4_conditions(ExponentTriple.from_params(params), params.beta, params.H):
        return "exponent conditions fail"
    return ""


def thm4_from_samples(params: ModelParams, sup: np.ndarray, horizon: np.ndarray) -> BoundValue:
    """Assemble the bound from per-path suprema (see ``m_xi_samples``)."""
    L, t_arg = L_xi(params)
    n = len(sup)
    m = float(np.mean(sup))
    se = float(np.std(sup, ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    truncated = float(np.max(horizon)) if np.all(np.isfinite(horizon)) else None
    extras = {"m_xi": m, "m_xi_se": se, "L_xi": L, "L_argmax": t_arg, "truncation": truncated}
    return BoundValue("mxi_lower", "lower", thm4_bound_from(m, L), True, "", extras)


def thm4_lower(
    params: ModelParams,
    mc_budget: int = 2000,
    grid: Optional[TimeGrid] = None,
    seed: int = 0,
    dependence: Optional[DependenceMode] = None,
) -> BoundValue:
    """1 - exp(-(m_xi - 1)^2 / (2 L_xi)) with m_xi estimated by Monte Carlo.

    ``extras["truncation"]`` is None when some path's integrand had not yet
    decayed within the grid; m_xi is then less reliable.
    """
    reason = thm4_applicability(params, dependence)
    if reason:
        return BoundValue.inapplicable("mxi_lower", "lower", reason)
    grid = grid or TimeGrid(10.0, 2000)
    batch = sample_noise_batch(
        grid, params.H, params.a, params.b, DependenceMode.identical(), seed, np.arange(mc_budget)
    )
    return thm4_from_samples(params, *m_xi_samples(params, grid, batch.mixed))


@dataclass(frozen=True)
class CaseReport:
    case: Optional[int]
    holds: bool
    reason: str

    def __bool__(self):
        return self.holds


def thm4_corollary(params: ModelParams) -> CaseReport:
    """Which single-noise case applies and whether its condition holds."""
    ex = ExponentTriple.from_params(params)
    beta, H = params.beta, params.H
    if params.a.is_zero and not params.b.is_zero:
        fb = ex.fbm_exponent(H)
        if ex.p > fb and not _eq(ex.p, fb):
            return CaseReport(1, True, "a = 0, p > H + m - 1/2")
        if _eq(ex.p, fb):
            crit = ex.C3 * params.lambda0 / (4 * ex.C2 * H)
            ok = beta < crit and not _eq(beta, crit)
            return CaseReport(2, ok, f"a = 0, p = H + m - 1/2, need beta < {crit:.6g}")
        return CaseReport(None, False, "a = 0 but p < H + m - 1/2")
    if params.b.is_zero:
        if beta <= 0.5 or _eq(beta, 0.5):
            return CaseReport(3, True, "b = 0, beta <= 1/2")
        if ex.p > ex.l and not _eq(ex.p, ex.l):
            return CaseReport(4, True, "b = 0, beta > 1/2, p > l")
        if _eq(ex.p, ex.l):
            lhs, rhs = ex.C3 * params.lambda0, ex.C1 * (2 * beta - 1)
            ok = lhs > rhs and not _eq(lhs, rhs)
            return CaseReport(4, ok, f"b = 0, p = l, C3 lambda0 = {lhs:.6g} vs C1(2 beta - 1) = {rhs:.6g}")
        return CaseReport(4, False, "b = 0, beta > 1/2, p < l")
    return CaseReport(None, False, "neither a nor b vanishes")


# ---------------------------------------------------------------- gamma-law lower bounds


@dataclass(frozen=True)
class PBResult:
    holds: bool
    worst_margin: float
    worst_t: float

    def __bool__(self):
        return self.holds


def check_PB(params: ModelParams, eta: float, c1: float, t_grid) -> PBResult:
    """(1/a^2) exp(-beta lambda0 K) >= c1 exp(-2 beta A / eta) on every node, in logs."""
    t = np.asarray(t_grid, dtype=float)
    a = np.broadcast_to(params.a(t), t.shape)
    if np.any(a <= 0):
        raise ValueError("condition needs a(t) > 0 at every node")
    decay = 0.0 if math.isinf(eta) else 2 * params.beta * params.A(t) / eta
    margin = -2 * np.log(a) - params.beta * params.lambda0 * params.K(t) - (math.log(c1) - decay)
    margin = np.atleast_1d(margin)
    i = int(np.argmin(margin))
    worst = float(margin[i])
    return PBResult(worst >= -1e-12, worst, float(np.atleast_1d(t)[i]))


def _proportional(a: CoefficientSpec, b: CoefficientSpec) -> bool:
    return b.is_zero or (not a.is_zero and a.e == b.e)


def thm5_lower(
    params: ModelParams,
    gamma: GammaLawParams,
    dependence: Optional[DependenceMode] = None,
    t_grid=None,
) -> BoundValue:
    """P(Z_mu <= theta) for H > 3/4, independent drivers and b = c a."""
    name = "gamma_law"
    dependence = dependence or DependenceMode.independent()
    if not is_high_hurst(params.H):
        return BoundValue.inapplicable(name, "lower", "requires H in (3/4, 1)")
    if dependence.kind is not DependenceKind.INDEPENDENT:
        return BoundValue.inapplicable(name, "lower", "requires independent B and B^H")
    if params.a.is_zero or params.k.is_zero:
        return BoundValue.inapplicable(name, "lower", "requires positive a and k")
    if not _proportional(params.a, params.b):
        return BoundValue.inapplicable(name, "lower", "requires b proportional to a")
    t_grid = np.linspace(0.0, 50.0, 5001) if t_grid is None else t_grid
    if params.a.e > 0:
        t_grid = np.asarray(t_grid)[np.asarray(t_grid) > 0]
    pb = check_PB(params, gamma.eta, gamma.c1, t_grid)
    mu, theta = gamma.mu(params.beta), gamma.theta(params.beta, params.xi)
    extras = {"mu": mu, "theta": theta, "pb_margin": pb.worst_margin}
    if not pb:
        return BoundValue(name, "lower", None, False, f"condition fails at t={pb.worst_t:.6g}", extras)
    return BoundValue(name, "lower", reg_gamma_lower(mu, theta), True, "", extras)


def remark_const_lower(params: ModelParams) -> BoundValue:
    """P(Z_muhat <= 2 C pairing^beta / (a^2 beta)), exact for P(tau* < inf) with constant k, a and b = 0."""
    name = "gamma_law_const"
    if not (params.a.is_constant and params.k.is_constant):
        return BoundValue.inapplicable(name, "lower", "requires constant k and a")
    if not params.b.is_zero:
        return BoundValue.inapplicable(name, "lower", "requires b = 0")
    if params.a.is_zero:
        return BoundValue.inapplicable(name, "lower", "requires a > 0")
    shape = mu_hat(params)
    theta = 2 * params.C_low * params.pairing**params.beta / (params.a.c**2 * params.beta)
    return BoundValue(name, "lower", reg_gamma_lower(shape, theta), True, "", {"mu": shape, "theta": theta})
