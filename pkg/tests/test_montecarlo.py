import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from spdeblowup import montecarlo as mc
from spdeblowup.bounds import GammaLawParams
from spdeblowup.functionals import ModelParams
from spdeblowup.noise import CoefficientSpec, DependenceMode, TimeGrid

C = CoefficientSpec
IDENT, INDEP = DependenceMode.identical(), DependenceMode.independent()


def cfg(n_paths=200, dep=IDENT, a=0.5, b=0.5, chunk=50, seed=3, **kw):
    p = ModelParams(
        H=0.75, beta=1.0, C_low=1.0, Lambda=1.0, k=C(math.sqrt(2)), a=C(a), b=C(b),
        pairing=2.0, psi_sup=0.5, p_scale=16 / math.pi,
    )
    kw.setdefault("T_values", (0.5, 1.0, 2.0))
    return mc.ExperimentConfig(p, dep, TimeGrid(2.0, 400), n_paths, seed, chunk=chunk, **kw)


def wilson_closed_form(k, n, level=0.95):
    z = stats.norm.ppf(0.5 + level / 2)
    centre = (k + z * z / 2) / (n + z * z)
    half = z / (n + z * z) * math.sqrt(k * (n - k) / n + z * z / 4)
    return centre - half, centre + half


@pytest.mark.parametrize("k,n", [(0, 1), (1, 1), (3, 10), (0, 500), (250, 500)])
def test_wilson_matches_closed_form(k, n):
    lo, hi = mc.wilson(k, n)
    elo, ehi = wilson_closed_form(k, n)
    assert lo == pytest.approx(max(elo, 0.0), abs=1e-12) and hi == pytest.approx(min(ehi, 1.0), abs=1e-12)


def test_interval_objects():
    r = mc.proportion(0, 1)
    assert r.lo == 0.0 and 0 < r.hi < 1
    assert mc.mean_interval(np.array([2.0])).hi == math.inf
    m = mc.mean_interval(np.arange(10.0))
    assert m.lo < 4.5 < m.hi
    with pytest.raises(ValueError):
        mc.EstimateResult(0.5, 0.6, 0.7, 10)
    with pytest.raises(ValueError):
        mc.EstimateResult(0.5, 0.4, 0.7, 10, censored_fraction=1.5)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.one_of(st.floats(0.0, 5.0), st.just(math.nan)), min_size=1, max_size=60))
def test_cdf_monotone(tau):
    T = sorted({0.1, 1.0, 2.5, 5.0})
    res = mc.cdf_from_times(np.array(tau), T, 5.0)
    vals = [r.estimate for r in res]
    assert vals == sorted(vals)
    assert res[0].censored_fraction == pytest.approx(np.mean(np.isnan(tau)))


def test_noise_free_ensemble_is_degenerate():
    # with a = b = 0 every path hits at ln 2
    res = mc.estimate_tau_star_cdf(cfg(n_paths=20, a=0.0, b=0.0), T_values=(0.5, 1.0))
    assert [r.estimate for r in res] == [0.0, 1.0]


def test_config_validation():
    with pytest.raises(ValueError):
        cfg(T_values=(3.0,))
    with pytest.raises(ValueError):
        cfg(n_paths=0)
    with pytest.raises(ValueError):
        mc.estimate_tau_star_cdf(cfg(), T_values=(5.0,))


def test_statistics_independent_of_chunking_and_workers():
    base = mc.path_statistics(cfg(chunk=250), want_mxi=True)
    other = mc.path_statistics(cfg(chunk=7), want_mxi=True, workers=2)
    for key in base:
        np.testing.assert_array_equal(base[key], other[key])


def test_chunk_indices_cover_range():
    parts = mc.chunk_indices(23, 5)
    assert [len(c) for c in parts] == [5, 5, 5, 5, 3]
    assert np.array_equal(np.concatenate(parts), np.arange(23))


def test_m_xi_estimate():
    est = mc.estimate_m_xi(cfg(n_paths=100))
    assert est.estimate > 1.0
    with pytest.raises(ValueError):
        mc.estimate_m_xi(cfg(dep=INDEP))


def test_hitting_table_rows_ordered():
    rows = mc.hitting_table(cfg(n_paths=60))
    assert [r.index for r in rows] == list(range(60))
    assert all(r.ordered for r in rows)


def test_dy_cdf_exponential_case():
    x = np.logspace(-3, 3, 50)
    assert np.allclose(mc.dy_cdf(x, 1.0), np.exp(-1 / (2 * x)), atol=1e-13)
    assert mc.dy_cdf(0.0, 1.0)[0] == 0.0


def test_dy_horizon_guard():
    assert mc.dy_tail_bound(1.0, 1.0) == math.inf
    with pytest.raises(ValueError):
        mc.dufresne_yor_check(1.0, 100, TimeGrid(5.0, 500))
    with pytest.raises(ValueError):
        mc.dufresne_yor_check(0.0, 100, TimeGrid(30.0, 500))


def test_dy_small_run_passes():
    rep = mc.dufresne_yor_check(1.5, 1500, TimeGrid(20.0, 10_000), seed=4)
    assert rep.passed, rep
    assert rep.allowance == pytest.approx(mc.dy_grid_allowance(1.5, 2e-3))


def test_suite_clean_and_negative_control():
    c = cfg(n_paths=400)
    clean = mc.run_bound_suite(c)
    assert clean.n_violations == 0
    assert len(clean.rows) == 3 * 3 + 3
    assert mc.run_bound_suite(c, bound_scale=0.01).n_violations > 0


def test_suite_marks_inapplicable_rows():
    rep = mc.run_bound_suite(cfg(n_paths=100, dep=INDEP, gamma=GammaLawParams(1.0, 1.0)))
    by = {}
    for r in rep.rows:
        by.setdefault(r.name, []).append(r)
    assert not any(r.applicable for r in by["malliavin_tail"])
    assert all(r.applicable for r in by["independent_drivers"])
    assert not by["mxi_lower"][0].applicable and by["mxi_lower"][0].note == "requires identical coupling"
    assert not by["gamma_law"][0].applicable  # H = 3/4 is not above 3/4


def test_report_rendering_deterministic():
    a = mc.run_bound_suite(cfg(n_paths=100)).to_csv()
    b = mc.run_bound_suite(cfg(n_paths=100, chunk=13), workers=2).to_csv()
    # chunk size is echoed in the header; the body must agree
    strip = lambda s: [l for l in s.splitlines() if not l.startswith("# mc.chunk")]
    assert strip(a) == strip(b)
    lines = a.splitlines()
    assert ",".join(mc.COLUMNS) in lines
