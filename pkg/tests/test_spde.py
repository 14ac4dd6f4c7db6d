import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from spdeblowup.functionals import HittingTime, I_subsolution, ModelParams, tau_lower, tau_star
from spdeblowup.noise import CoefficientSpec, DependenceMode, NoisePath, TimeGrid, sample_noise_batch
from spdeblowup.spde import (
    FieldState,
    NumericalFault,
    SpectralDomain,
    check_envelope,
    check_sandwich,
    eigen_initial,
    heat_propagator,
    params_for_domain,
    solve_rpde,
    step_mild,
)

SQRT2 = CoefficientSpec(math.sqrt(2.0))
P_DET = 16 / math.pi


@pytest.fixture(scope="module")
def dom():
    return SpectralDomain(32)


def test_domain_constants():
    d = SpectralDomain(16)
    assert d.pairing(d.psi0) == pytest.approx(math.pi / 8, abs=1e-15)
    assert d.sup_norm(d.psi0) == pytest.approx(0.5, abs=1e-15)
    assert d.lambda0 == 1.0


def test_synthesize_analyze_roundtrip(dom):
    c = np.random.default_rng(0).standard_normal(dom.n_modes)
    assert np.allclose(dom.analyze(dom.synthesize(c)), c)
    proj = dom.project(lambda x: np.sin(3 * x))
    assert proj[2] == pytest.approx(1.0) and np.allclose(np.delete(proj, 2), 0, atol=1e-13)


def test_heat_propagator_modes(dom):
    c = dom.mode(1) + dom.mode(3)
    out = heat_propagator(FieldState(c), SQRT2, 0.0, 0.5, dom)
    assert out.coeffs[0] == pytest.approx(math.exp(-0.5))
    assert out.coeffs[2] == pytest.approx(math.exp(-9 * 0.5))
    with pytest.raises(ValueError):
        heat_propagator(FieldState(c), SQRT2, 1.0, 0.5, dom)


def test_linear_case_is_exact(dom):
    p = params_for_domain(dom, 2.0, C_low=0.0, Lambda=1.0, k=SQRT2, a=CoefficientSpec(0.3))
    N = NoisePath.zeros(TimeGrid(2.0, 200))
    rec = solve_rpde(eigen_initial(2.0, dom), p, N, domain=dom)
    assert rec.tau_num.censored
    expected = 2.0 * 0.5 * np.exp(-p.A(rec.times) - p.K(rec.times))
    assert np.allclose(rec.sup_v, expected, rtol=1e-12)


def test_step_rejects_nonpositive_dt(dom):
    with pytest.raises(ValueError):
        step_mild(FieldState(dom.psi0), ModelParams(), 0.0, 0.0, dom)


def galerkin_reference(dom, p, phi, T, threshold):
    """Blowup time of the same spectral system with N = 0 from an adaptive RK solver."""
    lam = dom.eigenvalues * p.k.c**2 / 2 + p.a.c**2 / 2

    def rhs(t, c):
        v = dom.synthesize(c)
        return -lam * c + dom.analyze(p.C_low * np.maximum(v, 0) ** (1 + p.beta))

    def event(t, c):
        return math.log(dom.sup_norm(c)) - math.log(threshold)

    event.terminal = True
    sol = solve_ivp(rhs, (0, T), phi, method="LSODA", events=event, rtol=1e-10, atol=1e-12)
    return sol.t_events[0][0]


def test_deterministic_blowup_matches_reference(dom):
    p = params_for_domain(dom, P_DET, k=SQRT2)
    N = NoisePath.zeros(TimeGrid(1.0, 200))
    rec = solve_rpde(eigen_initial(P_DET, dom), p, N, blowup_threshold=1e8, domain=dom)
    ref = galerkin_reference(dom, p, eigen_initial(P_DET, dom), 1.0, 1e8)
    assert rec.tau_num.value == pytest.approx(ref, abs=2e-3)
    lo, up = tau_lower(p, N), tau_star(p, N)
    assert lo.value < rec.tau_num.value < up.value


def test_refinement_converges(dom):
    p = params_for_domain(dom, P_DET, k=SQRT2)
    N = NoisePath.zeros(TimeGrid(1.0, 200))
    taus = [solve_rpde(eigen_initial(P_DET, dom), p, N, domain=dom, growth_limit=g).tau_num.value for g in (4e-3, 2e-3, 1e-3)]
    assert abs(taus[2] - taus[1]) < abs(taus[1] - taus[0]) + 1e-6


def test_solution_stays_nonnegative(dom):
    p = params_for_domain(dom, 4.0, k=SQRT2, a=CoefficientSpec(0.5), b=CoefficientSpec(0.5))
    g = TimeGrid(2.0, 400)
    b = sample_noise_batch(g, 0.75, p.a, p.b, DependenceMode.identical(), 3, [0])
    rec = solve_rpde(eigen_initial(4.0, dom), p, b.path(0), domain=dom)
    vals = np.array([dom.synthesize(c) for c in rec.coeffs])
    assert np.min(vals) >= -1e-10 * np.max(np.abs(vals))


def test_nan_raises_fault(dom):
    phi = eigen_initial(1.0, dom)
    phi[3] = np.nan
    with pytest.raises(NumericalFault):
        solve_rpde(phi, params_for_domain(dom, 1.0), NoisePath.zeros(TimeGrid(1.0, 10)), domain=dom)


def test_threshold_floor(dom):
    with pytest.raises(ValueError):
        solve_rpde(eigen_initial(1.0, dom), params_for_domain(dom, 1.0), NoisePath.zeros(TimeGrid(1.0, 10)), 1e3, dom)


def test_trace_file(tmp_path, dom):
    p = params_for_domain(dom, P_DET, k=SQRT2)
    rec = solve_rpde(eigen_initial(P_DET, dom), p, NoisePath.zeros(TimeGrid(1.0, 100)), domain=dom)
    path = tmp_path / "trace.txt"
    rec.write_trace(path)
    first = path.read_text().splitlines()[0]
    assert first == "# time sup_norm_v sup_norm_u pairing_v N_t"
    data = np.loadtxt(path)
    assert data.shape == (len(rec.times), 5)


def test_envelope_and_subsolution_hold_deterministic(dom):
    p = params_for_domain(dom, P_DET, k=SQRT2)
    N = NoisePath.zeros(TimeGrid(1.0, 200))
    rec = solve_rpde(eigen_initial(P_DET, dom), p, N, domain=dom)
    rep = check_envelope(rec, p, dom)
    assert rep.ok and rep.n_checked > 10
    up = tau_star(p, rec.noise)
    t = rec.times[rec.times < up.bracket[0]]
    I = I_subsolution(p, rec.noise, t)
    assert np.all(rec.pairing_v[: len(t)] >= I - 1e-6 * np.max(I))


H_FIN = lambda v, T=5.0: HittingTime(v, T, (v, v) if v is not None else None)


@pytest.mark.parametrize(
    "low,num,up,ok",
    [
        (0.3, 0.4, 0.5, True),
        (0.3, 0.5005, 0.5, True),  # within one step
        (0.45, 0.4, 0.5, False),
        (0.3, 0.6, 0.5, False),
        (None, None, None, True),
        (0.3, None, None, True),
        (None, 4.0, None, False),  # lower time censored at 5 but solver blew up at 4
        (0.3, None, 2.0, False),  # upper bound finite, solver survived the horizon
        (None, 4.995, 4.999, True),
    ],
)
def test_sandwich_rules(low, num, up, ok):
    rep = check_sandwich(H_FIN(low), H_FIN(num), H_FIN(up), dt=0.005)
    assert rep.ok is ok
    if not ok:
        assert rep.reason
