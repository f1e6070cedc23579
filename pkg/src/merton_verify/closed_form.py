"""Closed-form objects of the infinite-horizon Merton problem.

Everything here is a pure function of (MarketParams, AgentParams). Power
functions of wealth are evaluated as ``exp(p * log x)``; wealth is always
strictly positive where they are used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import IllPosedError, ParameterError, RootFindingError
from .market import AgentParams, MarketParams, classify


def _out(v):
    v = np.asarray(v, dtype=float)
    return float(v) if v.ndim == 0 else v


def _powx(x, p):
    return np.exp(p * np.log(x))


def _check_positive(name, x):
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise ParameterError(f"{name} must be > 0")
    return x


def F(pi, xi, m: MarketParams, a: AgentParams):
    """Exponential decay rate of E[exp(-delta t) U(xi X_t)] under the
    constant-proportional strategy (pi, xi)."""
    if a.is_log:
        raise ParameterError("F is defined for R != 1 only")
    pi = np.asarray(pi, dtype=float)
    xi = np.asarray(xi, dtype=float)
    R, s = a.R, m.sigma
    inner = m.r + m.lam * s * pi - 0.5 * pi**2 * s**2 * R - xi
    return _out(a.delta - (1.0 - R) * inner)


def constant_policy_value(pi, xi, x, m: MarketParams, a: AgentParams):
    """J(xi X) for the strategy investing ``pi`` and consuming ``xi X``.

    Returns +inf (R < 1) or -inf (R > 1) where the integral diverges, i.e.
    where F(pi, xi) <= 0. For log utility the formula needs delta > 0.
    """
    xi = _check_positive("xi", xi)
    x = _check_positive("x", x)
    pi = np.asarray(pi, dtype=float)
    if a.is_log:
        d = a.delta
        if d <= 0:
            raise ParameterError("log-utility constant-policy value needs delta > 0")
        s = m.sigma
        drift = m.r + m.lam * s * pi - xi - 0.5 * pi**2 * s**2
        return _out((d * np.log(xi) + d * np.log(x) + drift) / d**2)
    R = a.R
    f = np.asarray(F(pi, xi, m, a))
    p = 1.0 - R
    with np.errstate(divide="ignore", invalid="ignore"):
        finite = _powx(x, p) * _powx(xi, p) / (p * f)
    blowup = np.inf if R < 1 else -np.inf
    return _out(np.where(f > 0, finite, blowup))


@dataclass(frozen=True)
class ClosedFormSolution:
    """Candidate optimum (pi_hat, xi_hat) and value function V_hat.

    ``utility_kind`` is ``"crra"`` or ``"log"``.
    """

    pi_hat: float
    xi_hat: float
    utility_kind: str
    R: float
    delta: float
    r: float
    lam: float

    def value_at(self, x):
        x = _check_positive("x", x)
        if self.utility_kind == "log":
            d = self.delta
            return _out((d * np.log(d * x) + self.r + 0.5 * self.lam**2 - d) / d**2)
        R = self.R
        return _out(self.xi_hat ** (-R) * _powx(x, 1.0 - R) / (1.0 - R))

    def value_dx(self, x):
        x = _check_positive("x", x)
        if self.utility_kind == "log":
            return _out(1.0 / (self.delta * x))
        return _out(self.xi_hat ** (-self.R) * _powx(x, -self.R))

    def value_dxx(self, x):
        x = _check_positive("x", x)
        if self.utility_kind == "log":
            return _out(-1.0 / (self.delta * x * x))
        R = self.R
        return _out(-R * self.xi_hat ** (-R) * _powx(x, -R - 1.0))


def merton_solution(m: MarketParams, a: AgentParams) -> ClosedFormSolution:
    cls = classify(m, a)
    if not cls.is_well_posed:
        raise IllPosedError(cls)
    if a.is_log:
        return ClosedFormSolution(
            pi_hat=m.lam / m.sigma, xi_hat=a.delta, utility_kind="log",
            R=1.0, delta=a.delta, r=m.r, lam=m.lam,
        )
    return ClosedFormSolution(
        pi_hat=(m.mu - m.r) / (m.sigma**2 * a.R), xi_hat=cls.eta, utility_kind="crra",
        R=a.R, delta=a.delta, r=m.r, lam=m.lam,
    )


def perturbed_value(eps, x, m: MarketParams, a: AgentParams):
    """Value of the problem whose consumption is topped up by eps * G,
    G the optimal consumption from unit wealth: V_hat(x + eps)."""
    eps = _check_positive("eps", eps)
    return merton_solution(m, a).value_at(np.asarray(x, dtype=float) + eps)


@dataclass(frozen=True)
class ShiftedValue:
    """x -> V_hat(x + zeta) with its derivatives."""

    base: ClosedFormSolution
    zeta: float

    def value_at(self, x):
        return self.base.value_at(np.asarray(x, dtype=float) + self.zeta)

    def value_dx(self, x):
        return self.base.value_dx(np.asarray(x, dtype=float) + self.zeta)

    def value_dxx(self, x):
        return self.base.value_dxx(np.asarray(x, dtype=float) + self.zeta)


def davis_norman_value(zeta: float, m: MarketParams, a: AgentParams) -> ShiftedValue:
    if not zeta > 0:
        raise ParameterError(f"zeta must be > 0, got {zeta!r}")
    return ShiftedValue(merton_solution(m, a), float(zeta))


# -- bankruptcy value (finite value P on hitting zero wealth) ----------------

def _check_klss_regime(m: MarketParams, a: AgentParams):
    if a.is_log or a.R <= 1:
        raise ParameterError("bankruptcy value requires R > 1")
    if not (a.delta > 0 and m.r > 0):
        raise ParameterError("bankruptcy value requires delta > 0 and r > 0")


def klss_nu(m: MarketParams, a: AgentParams) -> float:
    """Negative root of (lam^2/2) z^2 + (r - delta - lam^2/2) R z - r R^2 = 0."""
    _check_klss_regime(m, a)
    R, lam2 = a.R, m.lam**2
    qa = 0.5 * lam2
    qb = (m.r - a.delta - 0.5 * lam2) * R
    qc = -m.r * R**2
    if qa == 0.0:
        if qb == 0.0:
            raise ParameterError("degenerate quadratic: no root")
        root = -qc / qb
        if not root < 0:
            raise ParameterError(f"linear case has no negative root (root={root!r})")
        return root
    disc = qb * qb - 4.0 * qa * qc
    # qa > 0 > qc: the roots have opposite signs, disc > qb^2
    q = -0.5 * (qb + math.copysign(math.sqrt(disc), qb))
    r1, r2 = q / qa, qc / q
    return min(r1, r2)


@dataclass(frozen=True)
class BankruptcyValue:
    """Value function of the problem with bankruptcy payoff P < 0.

    Consumption is obtained by inverting the increasing map
    ``I(c) = -K c^nu / eta + c / eta`` where K is the P-dependent constant.
    Wealth zero corresponds to ``c0 = K^(1/(1-nu))``.
    """

    P: float
    nu: float
    eta: float
    R: float
    K: float
    c0: float
    rtol: float = 1e-12
    maxiter: int = 200

    def inverse_map(self, c):
        # (c0/eta) [(1+s) - (1+s)^nu] with c = c0 (1+s); equal to (c - K c^nu)/eta
        # but free of cancellation near c0 (c - c0 is exact there)
        c = np.asarray(c, dtype=float)
        s = (c - self.c0) / self.c0
        return _out(self.c0 / self.eta * (s - np.expm1(self.nu * np.log1p(s))))

    def inversion_residual(self, x):
        """|I(c(x)) - x| / max(1, x)."""
        x = _check_positive("x", x)
        return _out(np.abs(self.inverse_map(self.consumption_at(x)) - x) / np.maximum(1.0, x))

    def inverse_map_dc(self, c):
        c = np.asarray(c, dtype=float)
        return _out((1.0 - self.nu * self.K * _powx(c, self.nu - 1.0)) / self.eta)

    def _consumption_scalar(self, x: float) -> float:
        # c = c0 (1 + s); I(c) = (c0/eta) g(s) with g(s) = (1+s) - (1+s)^nu,
        # which keeps the inversion well conditioned near x = 0
        target = self.eta * x / self.c0

        def g(s):
            return s - math.expm1(self.nu * math.log1p(s)) - target

        hi = max(self.eta * x / self.c0, 1e-300)
        lo = 0.0
        for _ in range(self.maxiter):
            if g(hi) > 0:
                break
            lo, hi = hi, hi * 2.0
        else:
            raise RootFindingError("could not bracket consumption", (lo, hi))
        try:
            s, info = brentq(g, lo, hi, xtol=1e-300, rtol=self.rtol,
                             maxiter=self.maxiter, full_output=True)
        except (RuntimeError, ValueError) as exc:
            raise RootFindingError(f"consumption inversion failed: {exc}", (lo, hi)) from exc
        if not info.converged:
            raise RootFindingError("consumption inversion did not converge", (lo, hi))
        return self.c0 * (1.0 + s)

    def consumption_at(self, x):
        x = _check_positive("x", x)
        if x.ndim == 0:
            return self._consumption_scalar(float(x))
        return np.array([self._consumption_scalar(float(v)) for v in x.ravel()]).reshape(x.shape)

    def value_from_consumption(self, c):
        c = np.asarray(c, dtype=float)
        R, nu = self.R, self.nu
        first = nu / (self.eta * (R - nu)) * self.K * _powx(c, nu - R)
        return _out(first + _powx(c, 1.0 - R) / (self.eta * (1.0 - R)))

    def value_at(self, x):
        return self.value_from_consumption(self.consumption_at(x))

    def value_dx(self, x):
        return _out(_powx(np.asarray(self.consumption_at(x)), -self.R))

    def value_dxx(self, x):
        c = np.asarray(self.consumption_at(x))
        return _out(-self.R * _powx(c, -self.R - 1.0) / np.asarray(self.inverse_map_dc(c)))


def bankruptcy_value(P: float, m: MarketParams, a: AgentParams) -> BankruptcyValue:
    _check_klss_regime(m, a)
    if not P < 0:
        raise ParameterError(f"bankruptcy value P must be < 0, got {P!r}")
    cls = classify(m, a)
    if not cls.is_well_posed:
        raise IllPosedError(cls)
    e, R = cls.eta, a.R
    nu = klss_nu(m, a)
    base = e / R * (R - nu) / (1.0 - nu) * (1.0 - R) * P
    if not base > 0:
        raise ParameterError(f"bankruptcy constant base is not positive ({base!r}); "
                             "refusing a complex power")
    K = math.exp((1.0 - nu) / (1.0 - R) * math.log(base))
    c0 = math.exp(math.log(K) / (1.0 - nu))
    return BankruptcyValue(P=float(P), nu=nu, eta=e, R=R, K=K, c0=c0)


def klss_value(P: float, x, m: MarketParams, a: AgentParams):
    return bankruptcy_value(P, m, a).value_at(x)

