"""Exact transitions, Euler-Maruyama accumulators, reproducibility contracts."""

import math

import numpy as np
import pytest

from eprlab.model import InitialLaw, build_model
from eprlab.rng import RngStream
from eprlab.simulate import (
    StepUnstableError,
    check_dt_stability,
    default_dt,
    em_ensemble,
    em_path_checkpoints,
    em_path_with_epr,
    exact_chain,
    exact_step,
    n_steps_for,
    sample_initial,
    sample_stationary,
    time_average_epr_integrand,
)


def _cov_se(gamma, n):
    """Elementwise standard error of an empirical second-moment matrix."""
    d = gamma.shape[0]
    se = np.empty((d, d))
    for a in range(d):
        for b in range(d):
            se[a, b] = math.sqrt((gamma[a, a] * gamma[b, b] + gamma[a, b] ** 2) / n)
    return se


def test_rng_stream_reproducible_and_stream_separated():
    a = RngStream(9, 3).standard_normal(8)
    b = RngStream(9, 3).standard_normal(8)
    c = RngStream(9, 4).standard_normal(8)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)

    buf = np.empty((2, 4))
    RngStream(9, 3).standard_normal(out=buf)
    assert np.array_equal(buf.ravel(), a)


def test_rng_stream_validation():
    with pytest.raises(ValueError):
        RngStream(-1, 0)
    with pytest.raises(ValueError):
        RngStream(0, 2**64)


def test_sample_stationary_bit_identical(rot2):
    x = sample_stationary(rot2, RngStream(1, 0))
    y = sample_stationary(rot2, RngStream(1, 0))
    assert np.array_equal(x, y)


def test_sample_stationary_covariance(rot2):
    n = 10**5
    draws = sample_stationary(rot2, RngStream(2, 0), n)
    emp = draws.T @ draws / n
    assert np.all(np.abs(emp - rot2.Gamma) <= 3.0 * _cov_se(rot2.Gamma, n))


def test_sample_stationary_unit_gamma():
    m = build_model(-0.5 * np.eye(2), np.eye(2))
    assert np.allclose(m.Gamma, np.eye(2), atol=1e-12)
    draws = sample_stationary(m, RngStream(3, 0), 10**5)
    var = draws.var(axis=0)
    assert np.all(var > 0.97) and np.all(var < 1.03)


def test_sample_initial_shift(rot2):
    law = InitialLaw.shifted([1.0, 0.0])
    x_shift = sample_initial(rot2, law, RngStream(4, 0))
    x_plain = sample_initial(rot2, InitialLaw.stationary(), RngStream(4, 0))
    assert np.allclose(x_shift - x_plain, [1.0, 0.0], atol=1e-15)


def test_exact_step_conditional_mean_d1():
    m = build_model(np.array([[-1.0]]), np.array([[1.0]]))
    n = 10**5
    out = exact_step(m, np.ones((n, 1)), 1.0, RngStream(5, 0))
    sd = math.sqrt(0.4323323584)
    assert abs(out.mean() - math.exp(-1.0)) <= 3.0 * sd / math.sqrt(n)


def test_exact_step_mixes_from_far_start(rot2):
    n = 10**5
    out = exact_step(rot2, np.full((n, 2), 10.0), 25.0, RngStream(6, 0))
    se = math.sqrt(0.5 / n)
    assert np.all(np.abs(out.mean(axis=0)) <= 3.0 * se)


def test_exact_chain_preserves_stationarity(rot2):
    n, delta = 10**5, 0.5
    x0 = sample_stationary(rot2, RngStream(7, 0))
    states = exact_chain(rot2, x0, n, delta, RngStream(7, 1))[1:]
    emp = states.T @ states / n
    # serial correlation of the chained squares decays like e^{-2 delta k};
    # inflate the iid standard error by the matching worst-case factor
    rho = math.exp(-2.0 * delta)
    inflate = math.sqrt((1.0 + rho) / (1.0 - rho))
    assert np.all(np.abs(emp - rot2.Gamma) <= 3.0 * inflate * _cov_se(rot2.Gamma, n))


def test_em_reversible_path_is_exactly_zero(rev2):
    sample, _ = em_path_with_epr(rev2, [1.0, -2.0], 1.0, 1e-3, RngStream(8, 0))
    assert sample.martingale == 0.0
    assert sample.qvar == 0.0
    assert sample.ep_t == 0.0
    assert np.all(np.isfinite(sample.x_final))


def test_em_bit_reproducible_and_trace_invariant(rot2):
    def run(trace_every):
        rng = RngStream(11, 2)
        x0 = sample_stationary(rot2, rng)
        return em_path_with_epr(rot2, x0, 2.0, 1e-3, rng, trace_every=trace_every)

    base, _ = run(0)
    for trace_every in (7, 999):
        again, trace = run(trace_every)
        assert again.martingale == base.martingale
        assert again.qvar == base.qvar
        assert again.a_t == base.a_t
        assert again.ep_t == base.ep_t
        assert np.array_equal(again.x_final, base.x_final)
        assert trace is not None


def test_em_trace_contents(rot2):
    rng = RngStream(12, 0)
    sample, trace = em_path_with_epr(rot2, [0.3, -0.1], 0.2, 1e-3, rng, trace_every=50)
    assert np.allclose(trace.times, [0.0, 0.05, 0.1, 0.15, 0.2], atol=1e-12)
    assert trace.states.shape == (5, 2)
    assert trace.epr_running[0] == 0.0
    assert trace.epr_running[-1] == sample.ep_t
    assert np.all(np.diff(trace.times) > 0)
    assert sample.a_t == sample.martingale + 0.5 * sample.qvar
    assert sample.ep_t * sample.t_end == pytest.approx(sample.a_t, rel=1e-12)


def test_em_realized_horizon_is_rounded(rot2):
    sample, _ = em_path_with_epr(rot2, [0.0, 0.0], 0.0204, 1e-3, RngStream(13, 0))
    assert sample.t_end == 20 * 1e-3
    with pytest.raises(ValueError):
        n_steps_for(-1.0, 1e-3)
    with pytest.raises(ValueError):
        n_steps_for(1e-9, 1e-3)


def test_em_checkpoints_match_full_run(rot2):
    def fresh():
        rng = RngStream(14, 5)
        return sample_stationary(rot2, rng), rng

    x0, rng = fresh()
    mart, qvar, a = em_path_checkpoints(rot2, x0, [100, 250, 500], 1e-3, rng)
    x0b, rngb = fresh()
    full, _ = em_path_with_epr(rot2, x0b, 0.5, 1e-3, rngb)
    assert mart[-1] == full.martingale
    assert qvar[-1] == full.qvar
    assert a[-1] == full.a_t
    assert mart.shape == (3,)


def test_step_unstable_is_located(rot2):
    with pytest.raises(StepUnstableError) as info:
        em_path_with_epr(rot2, [1e200, 0.0], 1.0, 1e-3, RngStream(15, 0))
    assert info.value.step == 1

    with pytest.raises(StepUnstableError) as info:
        em_ensemble(rot2, InitialLaw.shifted([1e200, 0.0]), 3, 1.0, 1e-3, seed=15)
    assert info.value.step == 1
    assert info.value.path == 0
    assert "path 0" in str(info.value)


def test_dt_guard_and_default(rot2):
    assert default_dt(rot2) == pytest.approx(1e-3 / math.sqrt(2.0), rel=1e-12)
    with pytest.raises(ValueError):
        check_dt_stability(rot2, 0.1)
    with pytest.raises(ValueError):
        check_dt_stability(rot2, -1e-3)
    check_dt_stability(rot2, default_dt(rot2))


def test_ensemble_equals_single_path_runs(rot2):
    law = InitialLaw.shifted([0.5, 0.0])
    res = em_ensemble(rot2, law, 5, 0.5, 1e-3, seed=16)
    for i in range(5):
        rng = RngStream(16, i)
        x0 = sample_initial(rot2, law, rng)
        single, _ = em_path_with_epr(rot2, x0, 0.5, 1e-3, rng)
        assert res["martingale"][i] == single.martingale
        assert res["qvar"][i] == single.qvar
        assert np.array_equal(res["x_final"][i], single.x_final)


def test_ensemble_stationarity_and_martingale_mean(rot2):
    n = 2000
    res = em_ensemble(rot2, InitialLaw.stationary(), n, 5.0, 1e-3, seed=17)
    xf = res["x_final"]
    emp = xf.T @ xf / n
    assert np.all(np.abs(emp - rot2.Gamma) <= 4.0 * _cov_se(rot2.Gamma, n))
    mart = res["martingale"]
    assert abs(mart.mean()) <= 4.0 * mart.std(ddof=1) / math.sqrt(n)


def test_em_mean_ep_matches_closed_form(rot2):
    res = em_ensemble(rot2, InitialLaw.stationary(), 200, 50.0, 1e-3, seed=18)
    ep = res["ep_t"]
    assert abs(ep.mean() - rot2.ep) <= 3.0 * ep.std(ddof=1) / math.sqrt(ep.size)


def test_time_average_oracle_agrees_with_em(rot2):
    ta = np.array([
        time_average_epr_integrand(rot2, 200.0, 0.01, RngStream(19, k))
        for k in range(8)
    ])
    res = em_ensemble(rot2, InitialLaw.stationary(), 200, 50.0, 1e-3, seed=20)
    ep = res["ep_t"]
    gap = abs(ta.mean() - ep.mean())
    combined = math.sqrt(ta.var(ddof=1) / ta.size + ep.var(ddof=1) / ep.size)
    assert gap <= 4.0 * combined


def test_s_t_second_moment_grows_linearly(rot2):
    second = {}
    for t in (10.0, 20.0, 40.0):
        res = em_ensemble(rot2, InitialLaw.stationary(), 600, t, 2e-3, seed=21)
        s = res["t_end"] * (res["ep_t"] - rot2.ep)
        second[t] = float(np.mean(s * s))
    assert 1.3 <= second[20.0] / second[10.0] <= 2.7
    assert 1.3 <= second[40.0] / second[20.0] <= 2.7
