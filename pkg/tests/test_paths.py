from __future__ import annotations

import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from merton_verify import paths as pe
from merton_verify.closed_form import F, constant_policy_value, merton_solution
from merton_verify.errors import ParameterError, PolicyError
from merton_verify.market import AgentParams

from conftest import MARKET, P1, P2


def cfg(**kw):
    base = dict(seed=42, n_paths=2000, dt=0.01, horizon=1.0, antithetic=True)
    base.update(kw)
    return pe.SimConfig(**base)


# -- configuration ----------------------------------------------------------------

@pytest.mark.parametrize("kw", [dict(dt=0.3), dict(n_paths=3), dict(n_paths=0),
                                dict(dt=-0.1), dict(seed=-1), dict(horizon=math.inf)])
def test_sim_config_validation(kw):
    with pytest.raises(ParameterError):
        cfg(**kw)


def test_sim_config_grid():
    c = cfg(dt=0.1, horizon=2.0)
    assert c.n_steps == 20 and c.times[0] == 0.0 and c.times[-1] == pytest.approx(2.0)
    assert c.chunk_size % 2 == 0


@settings(max_examples=100)
@given(mean=st.floats(-1e6, 1e6), se=st.floats(0, 1e3))
def test_ci95_invariant(mean, se):
    est = pe.McEstimate(mean, se, 10)
    lo, hi = est.ci95
    assert lo == pytest.approx(mean - 1.96 * se) and hi == pytest.approx(mean + 1.96 * se)
    assert set(est.to_json()) == {"mean", "std_error", "ci95_lo", "ci95_hi", "tail_bound"}


# -- exact simulation ------------------------------------------------------------

def test_riskless_no_consumption():
    b = pe.simulate_constant_policy(2.0, 0.0, 0.0, cfg(n_paths=4), MARKET, P1)
    assert np.allclose(b.X, 2.0 * np.exp(MARKET.r * b.times), rtol=1e-14)


def test_exact_wealth_formula_and_start():
    b = pe.simulate_constant_policy(1.5, 0.7, 0.03, cfg(n_paths=6), MARKET, P1)
    g = MARKET.r + 0.7 * (MARKET.mu - MARKET.r) - 0.03 - 0.5 * 0.49 * MARKET.sigma**2
    assert np.allclose(b.X, 1.5 * np.exp(0.7 * MARKET.sigma * b.W + g * b.times), rtol=1e-14)
    assert np.all(b.W[:, 0] == 0) and np.all(b.X[:, 0] == 1.5)
    assert np.array_equal(b.C, 0.03 * b.X)


def test_same_seed_bitwise_identical(monkeypatch):
    c = cfg(n_paths=600, horizon=200.0)
    monkeypatch.setenv("MERTON_THREADS", "1")
    a = pe.simulate_constant_policy(1.0, 0.5, 0.05, c, MARKET, P1)
    monkeypatch.setenv("MERTON_THREADS", "4")
    b = pe.simulate_constant_policy(1.0, 0.5, 0.05, c, MARKET, P1)
    assert c.n_paths > c.chunk_size
    assert a.X.tobytes() == b.X.tobytes()


@pytest.mark.parametrize("pi,xi", [(0.75, 0.04625), (0.5, 0.05), (1.0, 0.04), (0.25, 0.06),
                                   (0.0, 0.1)])
def test_expected_discounted_utility_rate(pi, xi):
    c = cfg(n_paths=20000, dt=0.5, horizon=2.0)
    R = P1.R
    ests = pe.transversality_probe(1.0, pe.ConstantProportional(pi, xi), [0.5, 1.0, 2.0],
                                   c, MARKET, P1)
    f = F(pi, xi, MARKET, P1)
    for t, e in zip([0.5, 1.0, 2.0], ests):
        target = math.exp(-f * t) / (1 - R)
        assert e.within(target, 3.0)


# -- Euler ------------------------------------------------------------------------

def test_euler_weak_error_linear_in_dt():
    pol = pe.ConstantProportional(0.5, 0.5)
    gaps = []
    for dt in (0.1, 0.01, 0.001):
        c = cfg(n_paths=4000, dt=dt, horizon=1.0)
        eu = pe.simulate_general_policy(1.0, pol, c, MARKET, P1).X[:, -1].mean()
        ex = pe.simulate_constant_policy(1.0, 0.5, 0.5, c, MARKET, P1).X[:, -1].mean()
        gaps.append(abs(eu - ex) / ex)
    assert gaps[1] < 5 * 0.01 and gaps[2] < 5 * 0.001
    ratios = [gaps[0] / gaps[1], gaps[1] / gaps[2]]
    assert all(5 < q < 20 for q in ratios)


def test_absorption_bookkeeping():
    b = pe.simulate_general_policy(1.0, pe.ConstantProportional(0.5, 1e3), cfg(n_paths=50),
                                   MARKET, P1)
    hit = ~np.isnan(b.absorbed_at)
    assert hit.mean() > 0.5
    for i in np.flatnonzero(hit):
        k = int(round(b.absorbed_at[i] / 0.01))
        assert np.all(b.X[i, k:] == 0) and np.all(b.C[i, k:] == 0) and np.all(b.Pi[i, k:] == 1)
    assert np.all(b.X >= 0)


def test_consuming_interest_keeps_wealth_constant():
    rule = pe.GeneralRule(lambda t, x, h: (0.0, MARKET.r * x))
    b = pe.simulate_general_policy(3.0, rule, cfg(n_paths=4), MARKET, P1)
    assert np.all(b.X == 3.0)


def test_rule_sees_history():
    seen = []

    def rule(t, x, h):
        seen.append((t, h.X.shape[1], h.times[-1]))
        return 0.5, 0.05 * x

    pe.simulate_general_policy(1.0, pe.GeneralRule(rule), cfg(n_paths=2, dt=0.25), MARKET, P1)
    assert [s[1] for s in seen] == [1, 2, 3, 4, 5]
    assert all(s[0] == s[2] for s in seen)


def test_policy_errors():
    def boom(t, x, h):
        if t > 0.5:
            raise ValueError("nope")
        return 0.0, 0.0

    with pytest.raises(PolicyError, match="t=0.51"):
        pe.simulate_general_policy(1.0, pe.GeneralRule(boom), cfg(n_paths=2), MARKET, P1)
    with pytest.raises(PolicyError, match="inadmissible"):
        pe.simulate_general_policy(1.0, pe.GeneralRule(lambda t, x, h: (0.0, -1.0)),
                                   cfg(n_paths=2), MARKET, P1)


# -- value estimates --------------------------------------------------------------

def test_mc_value_constant_policy_small():
    c = cfg(n_paths=4000, dt=0.1, horizon=200.0)
    est = pe.mc_value(1.0, pe.ConstantProportional(0.5, 0.05), c, MARKET, P1)
    assert est.within(-500.0, 3.0)
    # F(0.5, 0.05) = 0.04: tail = e^{-F T} / (xi F)
    assert est.tail_bound == pytest.approx(500.0 * math.exp(-0.04 * 200), rel=1e-9)
    assert not est.divergent and est.n_effective == 2000


def test_mc_value_p2_positive():
    sol = merton_solution(MARKET, P2)
    c = cfg(n_paths=4000, dt=0.1, horizon=200.0)
    est = pe.mc_value(1.0, pe.ConstantProportional(sol.pi_hat, sol.xi_hat), c, MARKET, P2)
    assert est.mean > 0 and est.within(sol.value_at(1.0), 3.0)


def test_mc_value_divergent_flag():
    e = merton_solution(MARKET, P1).xi_hat
    xi = 2 * e * P1.R / (P1.R - 1)
    est = pe.mc_value(1.0, pe.ConstantProportional(0.5, xi), cfg(n_paths=200, dt=0.1, horizon=50.0),
                      MARKET, P1)
    assert est.divergent and est.tail_bound is None and est.warning


def test_mc_value_tail_warning():
    est = pe.mc_value(1.0, pe.ConstantProportional(0.5, 0.05), cfg(n_paths=200, dt=0.1, horizon=5.0),
                      MARKET, P1)
    assert est.warning and "horizon" in est.warning


def test_default_horizon():
    assert pe.default_horizon(0.5, 0.05, MARKET, P1) == pytest.approx(500.0)
    assert pe.default_horizon(0.75, 0.2, MARKET, P1) == 200.0
    assert pe.default_horizon(0.5, 0.0501, MARKET, AgentParams(2.0, 0.0)) > 200.0


def test_general_rule_value_close_to_exact():
    c = cfg(n_paths=1000, dt=0.01, horizon=20.0)
    rule = pe.GeneralRule(lambda t, x, h: (0.5, 0.05 * x))
    eu = pe.mc_value(1.0, rule, c, MARKET, P1)
    ex = pe.mc_value_many(1.0, [pe.ConstantProportional(0.5, 0.05)], c, MARKET, P1)[0]
    assert eu.tail_bound is None and eu.warning
    assert eu.mean - (ex.mean - ex.tail_bound * -1) == pytest.approx(0, abs=0.05 * abs(eu.mean))


def test_log_utility_value():
    log = AgentParams(1.0, 0.05)
    sol = merton_solution(MARKET, log)
    c = cfg(n_paths=2000, dt=0.1, horizon=400.0)
    est = pe.mc_value(1.0, pe.ConstantProportional(sol.pi_hat, sol.xi_hat), c, MARKET, log)
    # log utility is linear in W: antithetic pairs cancel exactly, leaving trapezoid bias
    assert est.std_error < 1e-12
    assert est.mean == pytest.approx(sol.value_at(1.0), rel=1e-5)


# -- fiat-condition probes ----------------------------------------------------------

def test_transversality_decays_for_optimum():
    e = merton_solution(MARKET, P1).xi_hat
    ts = [5.0, 15.0, 30.0, 50.0]
    ests = pe.transversality_probe(1.0, pe.ConstantProportional(0.75, e), ts,
                                   cfg(n_paths=10000, dt=0.05, horizon=50.0), MARKET, P1)
    slope = np.polyfit(ts, np.log([-x.mean for x in ests]), 1)[0]
    assert slope == pytest.approx(-e, rel=0.1)


def test_transversality_nonnegative_for_low_risk_aversion():
    ests = pe.transversality_probe(1.0, pe.ConstantProportional(3.0, 0.5), [1.0, 5.0, 10.0],
                                   cfg(n_paths=500, dt=0.1, horizon=10.0), MARKET, P2)
    assert all(e.mean >= 0 for e in ests)


def test_supermartingale_probe_optimum_and_zero_investment():
    sol = merton_solution(MARKET, P1)
    c = cfg(n_paths=4000, dt=0.05, horizon=10.0)
    ests = pe.supermartingale_probe(1.0, pe.ConstantProportional(sol.pi_hat, sol.xi_hat),
                                    [1.0, 5.0, 10.0], c, MARKET, P1)
    assert all(e.within(0.0, 3.0) for e in ests)
    zero = pe.supermartingale_probe(1.0, pe.ConstantProportional(0.0, 0.05), [1.0, 10.0],
                                    c, MARKET, P1)
    assert all(e.mean == 0.0 and e.std_error == 0.0 for e in zero)


def test_perturbation_identity_and_value():
    res = pe.perturbed_consumption_value(1.0, 0.1, cfg(n_paths=4000, dt=0.1, horizon=200.0),
                                         MARKET, P1)
    assert res.max_identity_error <= 1e-12
    assert res.target == pytest.approx(merton_solution(MARKET, P1).value_at(1.1))
    assert res.estimate.within(res.target, 3.0)


def test_perturbation_identity_under_euler():
    sol = merton_solution(MARKET, P1)
    pol = pe.ConstantProportional(sol.pi_hat, sol.xi_hat)
    c = cfg(n_paths=50, dt=0.01, horizon=5.0)
    X = pe.simulate_general_policy(1.0, pol, c, MARKET, P1).X
    Y = pe.simulate_general_policy(1.0 / 1.0, pol, c, MARKET, P1).X
    Xe = pe.simulate_general_policy(1.1, pol, c, MARKET, P1).X
    assert np.max(np.abs(X + 0.1 * Y - Xe) / Xe) <= 1e-12


# -- export -------------------------------------------------------------------------

def test_csv_export():
    b = pe.simulate_constant_policy(1.0, 0.5, 0.05, cfg(n_paths=2, dt=0.5), MARKET, P1)
    text = b.to_csv()
    lines = text.splitlines()
    assert lines[0] == "path_id,t,W,X,C" and len(lines) == 1 + 2 * 3
    row = lines[4].split(",")
    assert int(row[0]) == 1 and float(row[3]) == b.X[1, 0]
    buf = io.StringIO()
    b.to_csv(buf)
    assert buf.getvalue() == text


def test_estimate_json_handles_infinity():
    j = pe.McEstimate(-math.inf, math.nan, 3).to_json()
    assert j["mean"] == "-inf" and j["std_error"] == "nan"


def test_constant_value_target_helper():
    v = pe.constant_value_target(pe.ConstantProportional(0.5, 0.05), 1.0, MARKET, P1)
    assert v == constant_policy_value(0.5, 0.05, 1.0, MARKET, P1)
