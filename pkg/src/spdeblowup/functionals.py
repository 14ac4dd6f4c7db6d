"""Exponential functionals of the mixed noise and the hitting times built on them.

Both blowup-time bounds (the upper time ``tau_star`` and the lower time
``tau_lower``) are first-passage times of the running integral

    E(t) = int_0^t exp(-beta (lambda0 K(r) + A(r)) + beta N_r) dr

across a constant threshold. Functions here take a single ``NoisePath``;
the ``*_batch`` helpers do the same work on a 2-D array of paths.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .noise import CoefficientSpec, NoisePath, TimeGrid, validate_hurst

EXP_LIMIT = 700.0
RULES = ("trapezoid", "left")


class FunctionalOverflow(ArithmeticError):
    """beta * N exceeded the exponent limit: the path has numerically exploded."""


class EnvelopeDomainError(ValueError):
    """Envelope evaluated at or beyond the hitting time where it ceases to exist."""


@dataclass(frozen=True)
class ModelParams:
    H: float = 0.75
    beta: float = 1.0
    C_low: float = 1.0
    Lambda: float = 1.0
    lambda0: float = 1.0
    a: CoefficientSpec = field(default_factory=lambda: CoefficientSpec(0.0))
    b: CoefficientSpec = field(default_factory=lambda: CoefficientSpec(0.0))
    k: CoefficientSpec = field(default_factory=lambda: CoefficientSpec(math.sqrt(2.0)))
    pairing: float = 1.0
    psi_sup: float = 0.5
    p_scale: float = 1.0

    def __post_init__(self):
        validate_hurst(self.H)
        for name in ("beta", "Lambda", "lambda0", "pairing", "psi_sup", "p_scale"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive and finite, got {v}")
        if not (self.C_low >= 0 and math.isfinite(self.C_low)):
            raise ValueError(f"C must be nonnegative and finite, got {self.C_low}")
        if self.C_low > self.Lambda:
            raise ValueError(f"need C <= Lambda, got C={self.C_low}, Lambda={self.Lambda}")

    @property
    def xi(self) -> float:
        """Threshold of the upper hitting time: pairing^-beta / (C beta); infinite when C = 0."""
        if self.C_low == 0.0:
            return math.inf
        return self.pairing ** (-self.beta) / (self.C_low * self.beta)

    @property
    def init_sup(self) -> float:
        """Sup norm p * ||psi0|| of the eigenfunction initial condition."""
        return self.p_scale * self.psi_sup

    @property
    def lower_threshold(self) -> float:
        return self.init_sup ** (-self.beta) / (self.Lambda * self.beta)

    def K(self, t, s=0.0):
        return 0.5 * self.k.sq_integral(t, s)

    def A(self, t, s=0.0):
        return 0.5 * self.a.sq_integral(t, s)

    def drift(self, t):
        """lambda0 K(t) + A(t)."""
        return self.lambda0 * self.K(t) + self.A(t)

    def replace(self, **changes) -> "ModelParams":
        from dataclasses import replace

        return replace(self, **changes)


def K_int(k: CoefficientSpec, t):
    return 0.5 * k.sq_integral(t)


def A_int(a: CoefficientSpec, t):
    return 0.5 * a.sq_integral(t)


@dataclass(frozen=True)
class HittingTime:
    """First-passage time; ``value is None`` means censored at ``horizon``."""

    value: Optional[float]
    horizon: float
    bracket: Optional[tuple] = None

    @property
    def finite(self) -> bool:
        return self.value is not None

    @property
    def censored(self) -> bool:
        return self.value is None

    def as_float(self) -> float:
        return math.inf if self.value is None else self.value

    def __str__(self):
        if self.value is None:
            return f"censored(>{self.horizon:g})"
        return f"{self.value:.6g}"


# ---------------------------------------------------------------- running integrals


def running_integral(log_f: np.ndarray, dt: float, rule: str = "trapezoid") -> np.ndarray:
    """Cumulative integral of exp(log_f) along the last axis, starting at 0."""
    if rule not in RULES:
        raise ValueError(f"unknown quadrature rule {rule!r}")
    if np.any(log_f > EXP_LIMIT):
        raise FunctionalOverflow(f"integrand exponent exceeds {EXP_LIMIT}")
    f = np.exp(log_f)
    if rule == "trapezoid":
        pieces = 0.5 * dt * (f[..., 1:] + f[..., :-1])
    else:
        pieces = dt * f[..., :-1]
    out = np.zeros(f.shape)
    out[..., 1:] = np.cumsum(pieces, axis=-1)
    return out


def log_integrand(params: ModelParams, times: np.ndarray, N_values: np.ndarray) -> np.ndarray:
    """-beta (lambda0 K + A) + beta N, with the overflow guard on beta N."""
    bn = params.beta * np.asarray(N_values, dtype=float)
    if np.any(bn > EXP_LIMIT):
        raise FunctionalOverflow(f"beta * N exceeds {EXP_LIMIT}")
    return bn - params.beta * params.drift(times)


def exp_functional(params: ModelParams, N: NoisePath, rule: str = "trapezoid") -> np.ndarray:
    """Running integral E(t_i) of exp(-beta (lambda0 K + A) + beta N) on the grid of ``N``."""
    return running_integral(log_integrand(params, N.times, N.values), N.grid.dt, rule)


def crossing_batch(E: np.ndarray, threshold: float, times: np.ndarray):
    """First-passage of nondecreasing rows of ``E`` above ``threshold``.

    Returns (values, left_index); values are NaN where the row never reaches
    the threshold. Linear interpolation inside the bracketing step.
    """
    E2 = np.atleast_2d(E)
    hit = E2 >= threshold
    found = hit.any(axis=1)
    idx = np.argmax(hit, axis=1)
    values = np.full(E2.shape[0], np.nan)
    at_zero = found & (idx == 0)
    values[at_zero] = times[0]
    inner = found & (idx > 0)
    i = idx[inner]
    rows = np.nonzero(inner)[0]
    lo, hi = E2[rows, i - 1], E2[rows, i]
    frac = np.where(hi > lo, (threshold - lo) / np.where(hi > lo, hi - lo, 1.0), 1.0)
    values[inner] = times[i - 1] + frac * (times[i] - times[i - 1])
    return values, idx


def _hitting(E: np.ndarray, threshold: float, grid: TimeGrid) -> HittingTime:
    times = grid.times
    values, idx = crossing_batch(E, threshold, times)
    if math.isnan(values[0]):
        return HittingTime(None, grid.T)
    i = int(idx[0])
    bracket = (float(times[max(i - 1, 0)]), float(times[i]))
    return HittingTime(float(values[0]), grid.T, bracket)


def tau_star(params: ModelParams, N: NoisePath, rule: str = "trapezoid") -> HittingTime:
    """Upper blowup-time bound: first t with E(t) >= xi."""
    return _hitting(exp_functional(params, N, rule), params.xi, N.grid)


def tau_lower(params: ModelParams, N: NoisePath, rule: str = "trapezoid") -> HittingTime:
    """Lower blowup-time bound for phi = p psi0 (threshold uses Lambda and p ||psi0||)."""
    return _hitting(exp_functional(params, N, rule), params.lower_threshold, N.grid)


def J_envelope(params: ModelParams, N: NoisePath, t, rule: str = "trapezoid"):
    E = exp_functional(params, N, rule)
    Et = np.interp(t, N.times, E)
    base = 1.0 - params.Lambda * params.beta * params.init_sup**params.beta * Et
    if np.any(base <= 0.0):
        raise EnvelopeDomainError("J(t) requires t < tau_lower on this path")
    return base ** (-1.0 / params.beta)


def I_subsolution(params: ModelParams, N: NoisePath, t, rule: str = "trapezoid"):
    """Closed-form subsolution for the pairing <v(., t), phi0>."""
    E = exp_functional(params, N, rule)
    Et = np.interp(t, N.times, E)
    base = params.pairing ** (-params.beta) - params.beta * params.C_low * Et
    if np.any(base <= 0.0):
        raise EnvelopeDomainError("I(t) requires t < tau_star on this path")
    t = np.asarray(t, dtype=float)
    return np.exp(-params.drift(t)) * base ** (-1.0 / params.beta)


def cond2_margin(params: ModelParams, N: NoisePath, rule: str = "trapezoid") -> np.ndarray:
    """log(rhs) - log(lhs) of the sufficient blowup condition at every node.

    lhs = exp(beta A(w)) ||U(w,0) phi||^-beta with ||U(w,0) phi|| = p ||psi0|| e^(-lambda0 K(w));
    rhs = beta C int_0^w exp(beta N_s) ds. Positive entries satisfy the condition.
    """
    times = N.times
    integral = running_integral(params.beta * N.values, N.grid.dt, rule)
    log_lhs = params.beta * params.drift(times) - params.beta * math.log(params.init_sup)
    with np.errstate(divide="ignore"):
        log_rhs = math.log(params.beta * params.C_low) + np.log(integral)
    return log_rhs - log_lhs


def check_cond2(params: ModelParams, N: NoisePath, rule: str = "trapezoid") -> HittingTime:
    """Smallest grid node w* > 0 satisfying the sufficient blowup condition."""
    margin = cond2_margin(params, N, rule)
    hits = np.nonzero(margin[1:] > 0.0)[0]
    if hits.size == 0:
        return HittingTime(None, N.grid.T)
    i = int(hits[0]) + 1
    times = N.times
    return HittingTime(float(times[i]), N.grid.T, (float(times[i - 1]), float(times[i])))


class CC4Status(enum.Enum):
    HOLDS_AT_HORIZON = "holds_at_horizon"
    VIOLATED = "violated"
    INCONCLUSIVE = "inconclusive"


def cc4_check(
    params: ModelParams, N: NoisePath, tail_tol: float = 1e-8, rule: str = "trapezoid"
) -> CC4Status:
    """Global-envelope condition Lambda beta int_0^inf ... dr < 1, judged at the horizon."""
    log_f = log_integrand(params, N.times, N.values)
    E = running_integral(log_f, N.grid.dt, rule)
    scale = params.Lambda * params.beta * params.init_sup**params.beta
    total = scale * E[-1]
    if total >= 1.0:
        return CC4Status.VIOLATED
    if scale * math.exp(log_f[-1]) < tail_tol:
        return CC4Status.HOLDS_AT_HORIZON
    return CC4Status.INCONCLUSIVE
