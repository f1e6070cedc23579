"""Market and agent parameters, well-posedness, and numeraire changes.

A Black-Scholes-Merton market has a bond growing at rate ``r`` and a stock
with drift ``mu`` and volatility ``sigma``. The agent has CRRA utility with
relative risk aversion ``R`` (``R == 1`` is logarithmic utility) and
discounts at rate ``delta``.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from typing import Any, Mapping

from .errors import ParameterError

PARAM_KEYS = ("r", "mu", "sigma", "R", "delta")


def _finite(name: str, value: Any) -> float:
    if isinstance(value, bool):
        raise ParameterError(f"{name} must be a number, got {value!r}")
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise ParameterError(f"{name} must be a number, got {value!r}") from None
    if not math.isfinite(v):
        raise ParameterError(f"{name} must be finite, got {v!r}")
    return v


@dataclass(frozen=True)
class MarketParams:
    r: float
    mu: float
    sigma: float

    def __post_init__(self):
        object.__setattr__(self, "r", _finite("r", self.r))
        object.__setattr__(self, "mu", _finite("mu", self.mu))
        object.__setattr__(self, "sigma", _finite("sigma", self.sigma))
        if self.sigma <= 0:
            raise ParameterError(f"sigma must be > 0, got {self.sigma!r}")
        if not math.isfinite(self.lam):
            raise ParameterError("Sharpe ratio is not finite")

    @property
    def lam(self) -> float:
        """Sharpe ratio (mu - r) / sigma."""
        return (self.mu - self.r) / self.sigma


@dataclass(frozen=True)
class AgentParams:
    R: float
    delta: float

    def __post_init__(self):
        object.__setattr__(self, "R", _finite("R", self.R))
        object.__setattr__(self, "delta", _finite("delta", self.delta))
        if self.R <= 0:
            raise ParameterError(f"R must be > 0, got {self.R!r}")

    @property
    def is_log(self) -> bool:
        # exact comparison: the log branch is a separate case, not a limit
        return self.R == 1.0


class Posedness(enum.Enum):
    WELL_POSED = "well_posed"
    PLUS_INFINITY = "ill_posed_plus_infinity"
    MINUS_INFINITY = "ill_posed_minus_infinity"


@dataclass(frozen=True)
class WellPosedness:
    """Classification of a parameter set.

    ``eta`` is the well-posedness parameter that decided the tag (``delta``
    for log utility). ``margin`` is ``|eta|``; callers may use it to flag
    numerically marginal cases, the tag itself uses the exact sign.
    """

    kind: Posedness
    eta: float

    @property
    def is_well_posed(self) -> bool:
        return self.kind is Posedness.WELL_POSED

    @property
    def margin(self) -> float:
        return abs(self.eta)


def sharpe_ratio(m: MarketParams) -> float:
    return m.lam


def eta(m: MarketParams, a: AgentParams) -> float:
    """Well-posedness parameter; equals the optimal consumption rate when positive."""
    if a.is_log:
        raise ParameterError("eta is undefined for R == 1; use the log-utility branch (delta)")
    R = a.R
    return (a.delta - (1.0 - R) * (m.r + m.lam**2 / (2.0 * R))) / R


def kappa(m: MarketParams) -> float:
    """r + lambda^2/2, the growth rate deciding the ill-posed log case."""
    return m.r + 0.5 * m.lam**2


def classify(m: MarketParams, a: AgentParams) -> WellPosedness:
    if a.is_log:
        if a.delta > 0:
            return WellPosedness(Posedness.WELL_POSED, a.delta)
        kind = Posedness.PLUS_INFINITY if kappa(m) > 0 else Posedness.MINUS_INFINITY
        return WellPosedness(kind, a.delta)
    e = eta(m, a)
    if e > 0:
        return WellPosedness(Posedness.WELL_POSED, e)
    kind = Posedness.PLUS_INFINITY if a.R < 1 else Posedness.MINUS_INFINITY
    return WellPosedness(kind, e)


def numeraire_shift(
    m: MarketParams, a: AgentParams, gamma: float
) -> tuple[MarketParams, AgentParams]:
    """Re-express the problem in accounting units D_t = exp(gamma t)."""
    gamma = _finite("gamma", gamma)
    return (
        MarketParams(m.r + gamma, m.mu + gamma, m.sigma),
        AgentParams(a.R, a.delta - (a.R - 1.0) * gamma),
    )


def impatience_rate(m: MarketParams, a: AgentParams) -> float:
    """phi = delta + r (R - 1)."""
    return a.delta + m.r * (a.R - 1.0)


def eta_from_impatience(m: MarketParams, a: AgentParams) -> float:
    """eta rebuilt from phi as a convex combination of phi and lambda^2/(2R)."""
    R = a.R
    return impatience_rate(m, a) / R + (R - 1.0) / R * m.lam**2 / (2.0 * R)


# -- JSON ------------------------------------------------------------------

def params_from_dict(doc: Mapping[str, Any]) -> tuple[MarketParams, AgentParams]:
    missing = [k for k in PARAM_KEYS if k not in doc]
    if missing:
        raise ParameterError(f"missing parameter keys: {', '.join(missing)}")
    return (
        MarketParams(doc["r"], doc["mu"], doc["sigma"]),
        AgentParams(doc["R"], doc["delta"]),
    )


def params_to_dict(m: MarketParams, a: AgentParams) -> dict[str, float]:
    return {"r": m.r, "mu": m.mu, "sigma": m.sigma, "R": a.R, "delta": a.delta}


def load_params(text: str) -> tuple[MarketParams, AgentParams]:
    return params_from_dict(json.loads(text))


def dump_params(m: MarketParams, a: AgentParams) -> str:
    return json.dumps(params_to_dict(m, a))
