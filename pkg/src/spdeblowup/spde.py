"""Random PDE solver on D = (0, pi) with the Dirichlet Laplacian.

v solves  dv/dt = k^2/2 v_xx - a^2/2 v + exp(-N) g(exp(N) v),  g(z) = C z^(1+beta),
and u = exp(N) v solves the original stochastic equation. The state is kept
in the sine basis, so the heat evolution family is applied exactly; the
nonlinearity is evaluated on 2 n_modes + 1 interior collocation points.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import fft

from .functionals import HittingTime, ModelParams, tau_lower, J_envelope
from .noise import CoefficientSpec, NoisePath, refine_path


class NumericalFault(ArithmeticError):
    """NaN appeared in the solution before the blowup threshold was reached."""


class SpectralDomain:
    """Sine basis sin(j x), j = 1..n_modes, eigenvalues j^2, lambda0 = 1.

    psi0 = phi0 = sin(x) / 2 integrate to one over (0, pi).
    """

    def __init__(self, n_modes: int = 64, dealias: bool = False):
        if n_modes < 8:
            raise ValueError(f"need at least 8 modes, got {n_modes}")
        self.n_modes = int(n_modes)
        self.dealias = bool(dealias)
        self.n_points = 3 * self.n_modes + 1 if dealias else 2 * self.n_modes + 1
        self.x = np.arange(1, self.n_points + 1) * math.pi / (self.n_points + 1)
        self.eigenvalues = np.arange(1, self.n_modes + 1, dtype=float) ** 2
        self.lambda0 = 1.0
        self.psi0 = self.mode(1, 0.5)
        self.phi0 = self.psi0.copy()
        pairing = self.pairing(self.psi0)
        sup = self.sup_norm(self.psi0)
        assert abs(pairing - math.pi / 8) < 1e-14, pairing
        assert abs(sup - 0.5) < 1e-14, sup

    def mode(self, j: int, amplitude: float = 1.0) -> np.ndarray:
        c = np.zeros(self.n_modes)
        c[j - 1] = amplitude
        return c

    def synthesize(self, coeffs: np.ndarray) -> np.ndarray:
        """Values at the collocation points of sum_j c_j sin(j x)."""
        padded = np.zeros(self.n_points)
        padded[: self.n_modes] = coeffs
        return 0.5 * fft.dst(padded, type=1)

    def analyze(self, values: np.ndarray) -> np.ndarray:
        return fft.dst(values, type=1)[: self.n_modes] / (self.n_points + 1)

    def pairing(self, coeffs: np.ndarray) -> float:
        """<v, phi0> = c_1 * pi / 4."""
        return float(coeffs[0]) * math.pi / 4.0

    def sup_norm(self, coeffs: np.ndarray) -> float:
        return float(np.max(np.abs(self.synthesize(coeffs))))

    def project(self, f) -> np.ndarray:
        """Sine coefficients of a callable sampled on the collocation points."""
        return self.analyze(np.asarray(f(self.x), dtype=float))


@dataclass
class FieldState:
    coeffs: np.ndarray
    t: float = 0.0
    overflow: bool = False

    def values(self, domain: SpectralDomain) -> np.ndarray:
        return domain.synthesize(self.coeffs)

    def is_nonnegative(self, domain: SpectralDomain, tol: float = 1e-8) -> bool:
        v = self.values(domain)
        return bool(np.min(v) >= -tol * max(np.max(np.abs(v)), 1e-300))


def heat_propagator(
    state: FieldState, k: CoefficientSpec, t_from: float, t_to: float, domain: SpectralDomain
) -> FieldState:
    if t_to < t_from:
        raise ValueError("propagator runs forward in time only")
    K = 0.5 * k.sq_integral(t_to, t_from)
    return FieldState(state.coeffs * np.exp(-domain.eigenvalues * K), t_to)


def step_mild(
    state: FieldState,
    params: ModelParams,
    N_value: float,
    dt: float,
    domain: SpectralDomain,
    g_coeff: Optional[float] = None,
) -> FieldState:
    """One exponential-Euler step of the mild form, nonlinearity frozen at the left end."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    C = params.C_low if g_coeff is None else g_coeff
    t0, t1 = state.t, state.t + dt
    with np.errstate(over="ignore", invalid="ignore"):
        v = domain.synthesize(state.coeffs)
        nl = C * math.exp(params.beta * N_value) * np.maximum(v, 0.0) ** (1.0 + params.beta)
        if not np.all(np.isfinite(nl)):
            return FieldState(np.full(domain.n_modes, np.inf), t1, overflow=True)
        w = state.coeffs + dt * domain.analyze(nl) if C != 0.0 else state.coeffs
    damp = math.exp(-params.A(t1, t0))
    K = params.K(t1, t0)
    return FieldState(damp * w * np.exp(-domain.eigenvalues * K), t1)


def u_from_v(state: FieldState, N_value: float, domain: SpectralDomain) -> np.ndarray:
    return math.exp(N_value) * state.values(domain)


@dataclass
class BlowupRecord:
    tau_num: HittingTime
    times: np.ndarray
    sup_v: np.ndarray
    sup_u: np.ndarray
    pairing_v: np.ndarray
    noise: NoisePath
    coeffs: np.ndarray
    threshold: float
    substeps: int = 1

    @property
    def N_values(self) -> np.ndarray:
        return self.noise.values[: len(self.times)]

    def write_trace(self, path) -> None:
        header = "time sup_norm_v sup_norm_u pairing_v N_t"
        cols = np.column_stack((self.times, self.sup_v, self.sup_u, self.pairing_v, self.N_values))
        np.savetxt(path, cols, header=header, fmt="%.12e")


def default_substeps(N: NoisePath) -> int:
    return max(1, math.ceil(N.grid.dt / (1e-3 * N.grid.T) - 1e-9))


def solve_rpde(
    phi_coeffs: np.ndarray,
    params: ModelParams,
    N: NoisePath,
    blowup_threshold: float = 1e8,
    domain: Optional[SpectralDomain] = None,
    substeps: Optional[int] = None,
    g_coeff: Optional[float] = None,
    growth_limit: Optional[float] = 0.002,
) -> BlowupRecord:
    """March the mild form along the noise grid until ||u|| exceeds the threshold.

    The noise is interpolated linearly onto ``substeps`` uniform sub-intervals
    per grid step; traces are recorded on that uniform grid. Inside each
    sub-interval the step is further cut so that the nonlinear relative
    increment dt * C exp(beta N) ||v||^beta stays below ``growth_limit``;
    ``growth_limit=None`` disables this and uses plain uniform steps.
    """
    if blowup_threshold < 1e6:
        raise ValueError("blowup threshold must be at least 1e6")
    domain = domain or SpectralDomain()
    substeps = default_substeps(N) if substeps is None else int(substeps)
    C = params.C_low if g_coeff is None else g_coeff
    beta = params.beta
    fine = refine_path(N, substeps)
    times = fine.times
    dt = fine.grid.dt
    n = fine.grid.n_steps
    log_thr = math.log(blowup_threshold)

    sup_v = np.empty(n + 1)
    pairing = np.empty(n + 1)
    snaps = np.empty((n + 1, domain.n_modes))
    state = FieldState(np.asarray(phi_coeffs, dtype=float).copy(), 0.0)
    tau = HittingTime(None, N.grid.T)
    m = n + 1

    def log_u_of(st, N_val):
        s = domain.sup_norm(st.coeffs)
        return (N_val + math.log(s) if s > 0 else -math.inf), s

    log_u, s = log_u_of(state, fine.values[0])
    if log_u > log_thr:
        tau = HittingTime(0.0, N.grid.T, (0.0, 0.0))
        m = 0
    for i in range(n + 1 if m else 0):
        if np.any(np.isnan(state.coeffs)):
            raise NumericalFault(f"NaN in solution at t={times[i]:.6g} before blowup")
        sup_v[i] = s
        pairing[i] = domain.pairing(state.coeffs)
        snaps[i] = state.coeffs
        if i == n:
            break
        t_end = times[i + 1]
        blown = False
        while state.t < t_end:
            t0 = state.t
            N0 = float(np.interp(t0, times, fine.values))
            h = t_end - t0
            if growth_limit is not None and C > 0 and s > 0:
                rate = C * math.exp(beta * N0) * s**beta
                h = min(h, growth_limit / rate)
            if t_end - (t0 + h) < 1e-12 * dt:
                h = t_end - t0
            prev_log_u = log_u
            state = step_mild(state, params, N0, h, domain, g_coeff)
            if state.t >= t_end - 1e-12 * dt:
                state.t = t_end
            if state.overflow:
                tau = HittingTime(float(state.t), N.grid.T, (float(times[i]), float(t_end)))
                blown = True
                break
            if np.any(np.isnan(state.coeffs)):
                raise NumericalFault(f"NaN in solution at t={state.t:.6g} before blowup")
            N1 = float(np.interp(state.t, times, fine.values))
            log_u, s = log_u_of(state, N1)
            if log_u > log_thr:
                frac = (log_thr - prev_log_u) / (log_u - prev_log_u)
                value = t0 + frac * (state.t - t0)
                tau = HittingTime(float(value), N.grid.T, (float(times[i]), float(t_end)))
                blown = True
                break
        if blown:
            m = i + 1
            break
    return BlowupRecord(
        tau_num=tau,
        times=times[:m].copy(),
        sup_v=sup_v[:m],
        sup_u=sup_v[:m] * np.exp(fine.values[:m]),
        pairing_v=pairing[:m],
        noise=fine,
        coeffs=snaps[:m],
        threshold=blowup_threshold,
        substeps=substeps,
    )


@dataclass
class EnvelopeReport:
    n_checked: int
    worst_upper: float
    worst_lower: float
    tol: float

    @property
    def ok(self) -> bool:
        return self.worst_upper <= self.tol and self.worst_lower <= self.tol


def check_envelope(
    record: BlowupRecord,
    params: ModelParams,
    domain: Optional[SpectralDomain] = None,
    tol: float = 1e-6,
    rule: str = "trapezoid",
) -> EnvelopeReport:
    """0 <= u <= J(t) exp(N - A) U(t,0) phi at every recorded node before tau_lower.

    Violations are measured relative to the largest envelope value at that
    time. ``rule`` picks the quadrature for J. The adaptive solver resolves
    the nonlinearity finely, so the left rule (which underestimates J on
    rising integrands) can report spurious violations of order dt.
    """
    domain = domain or SpectralDomain()
    lower = tau_lower(params, record.noise, rule)
    cutoff = lower.as_float()
    psi = np.sin(domain.x) / 2.0
    mask = record.times < cutoff
    if lower.finite:
        # J is unbounded in the last step before tau_lower
        mask &= record.times < lower.bracket[0]
    idx = np.nonzero(mask)[0]
    if idx.size == 0:
        return EnvelopeReport(0, 0.0, 0.0, tol)
    t = record.times[idx]
    J = J_envelope(params, record.noise, t, rule)
    Nt = record.noise.values[idx]
    worst_up = 0.0
    worst_lo = 0.0
    for row, i in enumerate(idx):
        u = math.exp(Nt[row]) * domain.synthesize(record.coeffs[i])
        amp = J[row] * math.exp(Nt[row] - params.A(t[row]) - params.lambda0 * params.K(t[row]))
        bound = amp * params.p_scale * psi
        scale = float(np.max(bound))
        worst_up = max(worst_up, float(np.max(u - bound)) / scale)
        worst_lo = max(worst_lo, float(np.max(-u)) / scale)
    return EnvelopeReport(int(idx.size), worst_up, worst_lo, tol)


@dataclass
class SandwichReport:
    ok: bool
    lower_margin: float
    upper_margin: float
    reason: str = ""


def check_sandwich(
    tau_low: HittingTime, tau_num: HittingTime, tau_up: HittingTime, dt: float
) -> SandwichReport:
    """tau_lower <= tau_num <= tau_star up to one step, censored values read as +inf.

    A censored lower time only says tau_lower > horizon; a censored numerical
    time says the solver survived to its horizon.
    """
    num = tau_num.as_float()
    if tau_low.finite:
        lower_margin = num + dt - tau_low.value
    else:
        lower_margin = (num + dt - tau_low.horizon) if tau_num.finite else math.inf
    if tau_up.finite:
        if tau_num.finite:
            upper_margin = tau_up.value + dt - num
        else:
            upper_margin = tau_up.value + dt - tau_num.horizon
    else:
        upper_margin = math.inf
    reasons = []
    if lower_margin < 0:
        reasons.append("numerical blowup precedes the lower bound")
    if upper_margin < 0:
        reasons.append("numerical blowup later than the upper bound")
    return SandwichReport(not reasons, lower_margin, upper_margin, "; ".join(reasons))


def eigen_initial(p: float, domain: SpectralDomain) -> np.ndarray:
    """Coefficients of phi = p psi0."""
    return p * domain.psi0


def params_for_domain(domain: SpectralDomain, p: float, **kw) -> ModelParams:
    """ModelParams with pairing and ||psi0|| taken from the sine domain for phi = p psi0."""
    return ModelParams(
        pairing=p * domain.pairing(domain.psi0),
        psi_sup=domain.sup_norm(domain.psi0),
        p_scale=p,
        lambda0=domain.lambda0,
        **kw,
    )
