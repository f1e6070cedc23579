"""The HJB operator L and checks that candidate value functions solve it.

``L(pi, c; x, v)`` is the drift of ``exp(-delta t) V(X_t)`` plus the running
utility, written for a generic value bundle (v, v_x, v_xx) at wealth x.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Protocol

import numpy as np

from .closed_form import davis_norman_value, merton_solution
from .errors import ConcavityError, ParameterError
from .market import AgentParams, MarketParams


class ValueFunction(Protocol):
    def value_at(self, x): ...
    def value_dx(self, x): ...
    def value_dxx(self, x): ...


@dataclass(frozen=True)
class ValueBundle:
    v: float
    v_x: float
    v_xx: float


def value_bundle(fn: ValueFunction, x: float) -> ValueBundle:
    return ValueBundle(float(fn.value_at(x)), float(fn.value_dx(x)), float(fn.value_dxx(x)))


def _utility(c, a: AgentParams):
    c = np.asarray(c, dtype=float)
    with np.errstate(divide="ignore"):
        if a.is_log:
            return np.log(c)
        p = 1.0 - a.R
        # 0^(1-R) = +inf for R > 1, so U(0) = -inf
        return np.where(c > 0, np.exp(p * np.log(np.where(c > 0, c, 1.0))) / p,
                        -np.inf if a.R > 1 else 0.0)


def L(pi, c, x, vb: ValueBundle, m: MarketParams, a: AgentParams):
    pi = np.asarray(pi, dtype=float)
    c = np.asarray(c, dtype=float)
    s, lam = m.sigma, m.lam
    out = (_utility(c, a) - a.delta * vb.v + (x * (m.r + s * lam * pi) - c) * vb.v_x
           + 0.5 * s * s * pi * pi * x * x * vb.v_xx)
    return float(out) if out.ndim == 0 else out


class HJBMax(NamedTuple):
    pi_star: float
    c_star: float
    L_star: float


def maximize_L(x: float, vb: ValueBundle, m: MarketParams, a: AgentParams) -> HJBMax:
    """Closed-form maximiser of L over (pi, c >= 0) and the envelope value."""
    if not (vb.v_x > 0 and vb.v_xx < 0):
        raise ConcavityError(f"need v_x > 0 and v_xx < 0, got v_x={vb.v_x!r}, v_xx={vb.v_xx!r}")
    lam, s = m.lam, m.sigma
    pi_star = (lam / s) * (-vb.v_x / (x * vb.v_xx))
    # drift-plus-diffusion part at pi_star: -lam^2 v_x^2 / (2 v_xx)
    risky = -0.5 * lam * lam * vb.v_x**2 / vb.v_xx
    if a.is_log:
        c_star = 1.0 / vb.v_x
        consume = -np.log(vb.v_x) - 1.0
    else:
        R = a.R
        c_star = vb.v_x ** (-1.0 / R)
        consume = R / (1.0 - R) * vb.v_x ** (1.0 - 1.0 / R)
    L_star = consume - a.delta * vb.v + m.r * x * vb.v_x + risky
    return HJBMax(float(pi_star), float(c_star), float(L_star))


def hjb_residual(value_fn: ValueFunction, x_grid, m: MarketParams, a: AgentParams) -> float:
    """max over the grid of |sup L| / max(1, |v(x)|)."""
    xs = np.atleast_1d(np.asarray(x_grid, dtype=float))
    if xs.size == 0 or np.any(~(xs > 0)):
        raise ParameterError("x_grid must be nonempty and strictly positive")
    worst = 0.0
    for x in xs:
        vb = value_bundle(value_fn, float(x))
        res = abs(maximize_L(float(x), vb, m, a).L_star) / max(1.0, abs(vb.v))
        worst = max(worst, res)
    return worst


def L_eps(pi, c, x, y, eps, vb_at_z: ValueBundle, m: MarketParams, a: AgentParams):
    """Perturbed operator: the drift of V(X + eps Y) with extra consumption
    eps * eta * Y, where Y is optimal wealth from unit capital.

    The bundle is evaluated at z = x + eps * y.
    """
    if a.is_log:
        raise ParameterError("L_eps is implemented for R != 1")
    sol = merton_solution(m, a)
    e, R, s, lam = sol.xi_hat, a.R, m.sigma, m.lam
    pi = np.asarray(pi, dtype=float)
    c = np.asarray(c, dtype=float)
    ey = eps * y
    out = (_utility(c + ey * e, a) - a.delta * vb_at_z.v
           + (x * (m.r + pi * s * lam) - c + (m.r + lam * lam / R - e) * ey) * vb_at_z.v_x
           + 0.5 * (s * pi * x + lam * ey / R) ** 2 * vb_at_z.v_xx)
    return float(out) if out.ndim == 0 else out


def L_eps_reduced(pi, c, x, y, eps, vb_at_z: ValueBundle, m: MarketParams, a: AgentParams):
    """L_eps rewritten as L at the shifted control (pi x/z + lam eps y/(sigma R z), c + eps eta y)."""
    e = merton_solution(m, a).xi_hat
    z = x + eps * y
    pi_t = np.asarray(pi, dtype=float) * x / z + m.lam * eps * y / (m.sigma * a.R * z)
    return L(pi_t, np.asarray(c, dtype=float) + eps * e * y, z, vb_at_z, m, a)


def davis_norman_residual(zeta: float, x: float, m: MarketParams, a: AgentParams) -> float:
    """sup L(.; x, V_hat(. + zeta)) - (-r zeta V_hat_x(x + zeta)), scaled by max(1, |v|)."""
    shifted = davis_norman_value(zeta, m, a)
    vb = value_bundle(shifted, x)
    sup = maximize_L(x, vb, m, a).L_star
    return (sup + m.r * zeta * vb.v_x) / max(1.0, abs(vb.v))


def davis_norman_sup(zeta: float, x: float, m: MarketParams, a: AgentParams) -> float:
    shifted = davis_norman_value(zeta, m, a)
    return maximize_L(x, value_bundle(shifted, x), m, a).L_star


class GridMax(NamedTuple):
    pi: float
    c: float
    value: float
    d_pi: float
    d_c: float


def grid_sup(fn, pi_range=(-5.0, 5.0), c_range=(1e-8, 1.0), n: int = 401) -> GridMax:
    """Brute-force maximum of fn(pi, c) on an n x n grid (test oracle)."""
    pis = np.linspace(pi_range[0], pi_range[1], n)
    cs = np.linspace(c_range[0], c_range[1], n)
    P, C = np.meshgrid(pis, cs, indexing="ij")
    vals = np.asarray(fn(P, C))
    i, j = np.unravel_index(np.nanargmax(vals), vals.shape)
    return GridMax(float(pis[i]), float(cs[j]), float(vals[i, j]),
                   float(pis[1] - pis[0]), float(cs[1] - cs[0]))


def grid_sup_L(x: float, vb: ValueBundle, m: MarketParams, a: AgentParams,
               c_max: float, n: int = 401) -> GridMax:
    return grid_sup(lambda p, c: L(p, c, x, vb, m, a),
                    c_range=(1e-8 * c_max / 5.0, c_max), n=n)
