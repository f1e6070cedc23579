from __future__ import annotations

import pytest

from merton_verify.market import AgentParams, MarketParams

MARKET = MarketParams(r=0.02, mu=0.08, sigma=0.2)
P1 = AgentParams(R=2.0, delta=0.05)
P2 = AgentParams(R=0.5, delta=0.10)
LOG = AgentParams(R=1.0, delta=0.05)


@pytest.fixture
def market():
    return MARKET


@pytest.fixture
def p1():
    return P1


@pytest.fixture
def p2():
    return P2


@pytest.fixture
def log_agent():
    return LOG
