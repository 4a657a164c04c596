import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from homogenize import analysis, drivers, solvers
from homogenize.errors import (
    HorizonMismatchError,
    InsufficientSamplesError,
    ParameterError,
)
from homogenize.solvers import TrajectoryEnsemble


def test_ks_trivial_cases():
    x = np.random.default_rng(0).standard_normal(500)
    assert analysis.ks_distance(x, x).statistic[0] == 0.0
    assert analysis.ks_distance(x, x + 100).statistic[0] == 1.0
    with pytest.raises(InsufficientSamplesError):
        analysis.ks_distance(np.array([]), x)


def test_ks_matches_scipy():
    rng = np.random.default_rng(1)
    a, b = rng.standard_normal(3000), rng.standard_normal(2000) + 0.05
    ours = analysis.ks_distance(a, b)
    ref = sps.ks_2samp(a, b)
    assert ours.statistic[0] == pytest.approx(ref.statistic, abs=1e-15)
    assert ours.pvalue[0] == pytest.approx(ref.pvalue, rel=0.05, abs=1e-3)


def test_ks_ties_right_continuous():
    a = np.array([0.0, 1.0, 1.0, 2.0])
    b = np.array([1.0, 1.0, 1.0, 1.0])
    # at x = 1: F_a = 3/4, F_b = 1; at x = 0: F_a = 1/4, F_b = 0
    assert analysis.ks_distance(a, b).statistic[0] == pytest.approx(0.25)


def test_ks_calibration():
    rejections = 0
    for rep in range(100):
        rng = np.random.default_rng(1000 + rep)
        r = analysis.ks_distance(rng.standard_normal(10**4), rng.standard_normal(10**4))
        rejections += r.statistic[0] >= r.crit_01
    assert rejections <= 5


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=40),
       st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=40))
def test_ks_symmetric_and_bounded(a, b):
    ab = analysis.ks_distance(np.array(a), np.array(b)).statistic[0]
    ba = analysis.ks_distance(np.array(b), np.array(a)).statistic[0]
    assert ab == ba
    assert 0.0 <= ab <= 1.0


def test_energy_distance():
    rng = np.random.default_rng(2)
    a, b = rng.standard_normal(2000), rng.standard_normal(1500)
    assert abs(analysis.energy_distance(a, b)[0]) < 0.02
    assert analysis.energy_distance(a, a + 3)[0] > 1.0
    small_a, small_b = rng.standard_normal(30), rng.standard_normal(20)
    brute = (2 * np.abs(small_a[:, None] - small_b[None]).mean()
             - np.abs(small_a[:, None] - small_a[None]).mean()
             - np.abs(small_b[:, None] - small_b[None]).mean())
    assert analysis.energy_distance(small_a, small_b)[0] == pytest.approx(brute, rel=1e-12)


def test_moment_slope_brownian_control():
    sde = solvers.linear_system(np.zeros((2, 2)), np.eye(2))
    dt = 1e-3
    ens = solvers.solve_limit_sde(sde, np.eye(2), np.zeros((2, 2)), 1.0, dt, 3,
                                  n_paths=2000, record_every=1)
    W, WW = analysis.levels_from_samples(ens.X)
    idx = np.unique(np.round(np.geomspace(0.01, 1.0, 9) / dt).astype(int))
    res = analysis.moment_norms(ens.times[idx], W[idx], WW[idx], p=2)
    assert abs(res.slope_W - 0.5) <= 0.05
    assert abs(res.slope_WW - 1.0) <= 0.1


def test_moment_slope_doubling(doubling):
    res = analysis.moment_slope(doubling, drivers.trig_observable([1]), 2, 1000,
                                np.geomspace(0.01, 1.0, 7), 2000, 5)
    assert 0.45 <= res.slope_W <= 0.55


def test_moment_slope_zero_and_errors(doubling):
    res = analysis.moment_slope(doubling, drivers.zero_observable(1), 2, 100,
                                [0.1, 0.5, 1.0], 1000, 5)
    assert res.slope_W is None and res.slope_WW is None
    assert not res.norm_W.any()
    with pytest.raises(InsufficientSamplesError):
        analysis.moment_slope(doubling, drivers.trig_observable([1]), 2, 100, [0.1, 1.0], 10, 5)
    with pytest.raises(ParameterError):
        analysis.moment_slope(doubling, drivers.trig_observable([1]), 2, 100, [0.5, 1.0], 1000, 5)


def _triple(doubling, scale=1.0):
    chi = drivers.trig_observable([1]).scaled(scale)
    return analysis.cohomology_triple(doubling, drivers.trig_observable([2]), chi)


def test_cohomology_identity(doubling):
    t = _triple(doubling)
    pts = np.random.default_rng(3).random((1000, 1))
    assert np.abs(t.identity_defect(pts)).max() <= 1e-14


def test_cohomology_chi_zero(doubling):
    t = _triple(doubling, 0.0)
    res = analysis.cohomology_shift(doubling, t, 1000, 1.0, 4)
    assert not res.observed.any() and not res.predicted.any()


def test_cohomology_shift_matches_quadrature(doubling):
    t = _triple(doubling)
    res = analysis.cohomology_shift(doubling, t, 10**5, 1.0, 6)
    # v_hat = cos 4 pi x, chi = cos 2 pi x: int chi v = -1/2, int v_hat chi o f = 1/2
    assert res.predicted[0, 0] == pytest.approx(-1.0, abs=1e-12)
    tol = 10 * res.spread[0, 0] / np.sqrt(10**5)
    assert abs(res.observed[0, 0] - res.predicted[0, 0]) <= tol
    again = analysis.cohomology_shift(doubling, t, 10**5, 1.0, 6)
    assert np.array_equal(res.observed, again.observed)


def _ens(X, T=1.0, scheme="x"):
    return TrajectoryEnsemble(np.array([0.0, T]), np.stack([np.zeros_like(X), X]), scheme)


def test_report_indistinguishable_correction():
    rng = np.random.default_rng(7)
    lim = _ens(rng.standard_normal((4000, 2)))
    fast = {10: _ens(rng.standard_normal((4000, 2)) + 0.3),
            100: _ens(rng.standard_normal((4000, 2)))}
    rep = analysis.convergence_report(fast, lim, lim)
    assert rep.verdicts["corrected_beats_naive"]["status"] == "SKIP"
    assert "indistinguishable" in rep.verdicts["corrected_beats_naive"]["detail"]
    assert rep.passed
    for v in rep.verdicts.values():
        assert v["tolerance"] in analysis.Tolerances().to_json()
    json.dumps(rep.to_json())
    assert "ks_decreasing" in rep.to_text()
    assert len(rep.cdf_rows()) == 3 * 2 * 101


def test_report_preconditions():
    rng = np.random.default_rng(8)
    lim = _ens(rng.standard_normal((100, 1)))
    with pytest.raises(ParameterError):
        analysis.convergence_report({10: lim}, lim, lim)
    with pytest.raises(HorizonMismatchError):
        analysis.convergence_report({10: lim, 20: lim}, lim, _ens(lim.final(), T=2.0))


def test_report_mcshane_small(doubling, two_component):
    sde = solvers.mcshane_system()
    S = np.full((2, 2), 0.5)
    E = np.array([[0.0, 0.0], [0.5, 0.0]])
    R = 3000
    fast = {n: solvers.solve_fast_discrete(sde, doubling, two_component, n, 1.0, 31, n_paths=R)
            for n in (10, 1000)}
    corr = solvers.solve_limit_sde(sde, S, E, 1.0, 1e-2, 32, R, scheme="strat-heun")
    naive = solvers.solve_limit_sde(sde, S, E, 1.0, 1e-2, 33, R, scheme="strat-heun",
                                    corrected=False)
    rep = analysis.convergence_report(fast, corr, naive)
    assert rep.active == 1
    assert rep.verdicts["corrected_beats_naive"]["status"] == "PASS"
    assert rep.verdicts["naive_rejected"]["status"] == "PASS"


def test_tolerances_overrides():
    tol = analysis.Tolerances.from_mapping({"se_match": 4})
    assert tol.se_match == 4.0
    with pytest.raises(ParameterError):
        analysis.Tolerances.from_mapping({"bogus": 1})
    with pytest.raises(ParameterError):
        analysis.Tolerances.from_mapping({"ks_level": 0.2})
