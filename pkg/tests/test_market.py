from __future__ import annotations

import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from merton_verify.errors import ParameterError
from merton_verify.market import (AgentParams, MarketParams, Posedness, classify, dump_params,
                                  eta, eta_from_impatience, impatience_rate, kappa, load_params,
                                  numeraire_shift, params_from_dict)

from conftest import MARKET, P1, P2

rates = st.floats(-0.05, 0.1)
vols = st.floats(0.05, 0.6)
risk = st.floats(0.2, 6.0).filter(lambda R: R != 1.0)
discounts = st.floats(-0.05, 0.2)


def test_sharpe_and_eta_p1():
    assert MARKET.lam == pytest.approx(0.3, rel=1e-15)
    assert eta(MARKET, P1) == pytest.approx(0.04625, rel=1e-14)
    assert eta(MARKET, P2) == pytest.approx(0.09, rel=1e-14)


def test_eta_rejects_log():
    with pytest.raises(ParameterError):
        eta(MARKET, AgentParams(1.0, 0.05))


@pytest.mark.parametrize("kwargs", [dict(r=0.0, mu=0.1, sigma=0.0), dict(r=0.0, mu=0.1, sigma=-1),
                                    dict(r=math.nan, mu=0.1, sigma=0.2),
                                    dict(r=0.0, mu=math.inf, sigma=0.2),
                                    dict(r=True, mu=0.1, sigma=0.2)])
def test_market_validation(kwargs):
    with pytest.raises(ParameterError):
        MarketParams(**kwargs)


@pytest.mark.parametrize("R", [0.0, -1.0, math.nan])
def test_agent_validation(R):
    with pytest.raises(ParameterError):
        AgentParams(R, 0.05)


def test_classify_examples():
    assert classify(MARKET, P1).kind is Posedness.WELL_POSED
    assert classify(MARKET, AgentParams(0.5, 0.03)).kind is Posedness.PLUS_INFINITY
    # R > 1 and a negative discount rate large enough to flip eta
    assert classify(MARKET, AgentParams(2.0, -0.1)).kind is Posedness.MINUS_INFINITY
    assert classify(MARKET, AgentParams(1.0, 0.05)).kind is Posedness.WELL_POSED
    assert classify(MARKET, AgentParams(1.0, 0.0)).kind is Posedness.PLUS_INFINITY
    neg = MarketParams(r=-0.1, mu=-0.1, sigma=0.2)
    assert kappa(neg) < 0
    assert classify(neg, AgentParams(1.0, -0.01)).kind is Posedness.MINUS_INFINITY


def test_margin_is_abs_eta():
    c = classify(MARKET, AgentParams(0.5, 0.03))
    assert c.margin == pytest.approx(abs(c.eta))


@settings(max_examples=200)
@given(r=rates, mu=rates, s=vols, R=risk, d=discounts, g=st.floats(-0.1, 0.1))
def test_eta_invariant_under_numeraire_change(r, mu, s, R, d, g):
    m, a = MarketParams(r, mu, s), AgentParams(R, d)
    m2, a2 = numeraire_shift(m, a, g)
    assert m2.lam == pytest.approx(m.lam, rel=1e-9, abs=1e-12)
    assert eta(m2, a2) == pytest.approx(eta(m, a), rel=1e-9, abs=1e-12)
    assert classify(m2, a2).kind is classify(m, a).kind or abs(eta(m, a)) < 1e-12


@settings(max_examples=200)
@given(r=rates, mu=rates, s=vols, R=risk, d=discounts, g=st.floats(-0.1, 0.1))
def test_impatience_invariant_and_eta_identity(r, mu, s, R, d, g):
    m, a = MarketParams(r, mu, s), AgentParams(R, d)
    m2, a2 = numeraire_shift(m, a, g)
    assert impatience_rate(m2, a2) == pytest.approx(impatience_rate(m, a), abs=1e-12)
    assert eta_from_impatience(m, a) == pytest.approx(eta(m, a), rel=1e-10, abs=1e-13)


def test_log_case_classification_is_numeraire_invariant():
    for g in (-0.05, 0.0, 0.05):
        m2, a2 = numeraire_shift(MARKET, AgentParams(1.0, 0.05), g)
        assert a2.delta == 0.05
        assert classify(m2, a2).is_well_posed


def test_json_round_trip():
    m, a = load_params(dump_params(MARKET, P1))
    assert (m, a) == (MARKET, P1)
    with pytest.raises(ParameterError, match="missing"):
        params_from_dict(json.loads('{"r": 0.02}'))
