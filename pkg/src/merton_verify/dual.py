"""Dual checks through the state-price density of the complete market.

zeta_t = exp(-lam W_t - (r + lam^2/2) t) prices consumption streams. The
checks here are budget feasibility E int zeta C <= x, the first-order
condition linking optimal consumption to zeta, the duality bound
J(C) <= V_hat(x), and the supermartingale property of deflated wealth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .closed_form import ClosedFormSolution, merton_solution
from .errors import ParameterError
from .market import AgentParams, MarketParams
from .paths import (ConstantProportional, McEstimate, PathBatch, SimConfig, _euler_chunk,
                    brownian_levels, cp_wealth, estimate, map_chunks, mc_value,
                    trapezoid_weights)
from . import rng


@dataclass(frozen=True)
class StatePriceDensityPath:
    times: np.ndarray
    zeta: np.ndarray


def spd_values(W, times, m: MarketParams) -> np.ndarray:
    lam = m.lam
    return np.exp(-lam * np.asarray(W) - (m.r + 0.5 * lam * lam) * np.asarray(times))


def state_price_density(batch: PathBatch, m: MarketParams) -> StatePriceDensityPath:
    return StatePriceDensityPath(batch.times, spd_values(batch.W, batch.times, m))


def is_optimal(policy, m: MarketParams, a: AgentParams, rtol: float = 1e-12) -> bool:
    if not isinstance(policy, ConstantProportional):
        return False
    sol = merton_solution(m, a)
    return (math.isclose(policy.pi, sol.pi_hat, rel_tol=rtol, abs_tol=0.0)
            and math.isclose(policy.xi, sol.xi_hat, rel_tol=rtol, abs_tol=0.0))


def optimal_budget_tail(x: float, T: float, m: MarketParams, a: AgentParams) -> float:
    """E int_T^inf zeta C_hat dt = x exp(-eta T), since E[zeta_t C_hat_t] = x eta exp(-eta t)."""
    return x * math.exp(-merton_solution(m, a).xi_hat * T)


def budget_gap(x: float, batch: PathBatch, spd: StatePriceDensityPath, cfg: SimConfig,
               tail: float | None = None) -> McEstimate:
    """x - E int_0^T zeta C dt (trapezoid), minus an optional known tail beyond T."""
    w = trapezoid_weights(len(batch.times) - 1, cfg.dt)
    vals = x - (spd.zeta * batch.C) @ w
    return estimate(vals, cfg.antithetic, None if tail is None else -tail)


def budget_gap_streaming(x: float, policy, cfg: SimConfig, m: MarketParams,
                         a: AgentParams) -> McEstimate:
    """Chunked budget gap; the analytic tail is used for the optimal policy only."""
    times = cfg.times
    w = trapezoid_weights(cfg.n_steps, cfg.dt)

    def run(ids):
        if isinstance(policy, ConstantProportional):
            _, W = brownian_levels(cfg, ids)
            C = policy.xi * cp_wealth(x, policy.pi, policy.xi, W, times, m)
        else:
            Z = rng.normals(cfg.seed, ids, cfg.n_steps, cfg.antithetic)
            W, _, C, _, _ = _euler_chunk(x, policy, Z, times, cfg.dt, m, ids)
        return x - (spd_values(W, times, m) * C) @ w

    vals = np.concatenate(map_chunks(cfg, run))
    tail = optimal_budget_tail(x, float(times[-1]), m, a) if is_optimal(policy, m, a) else None
    return estimate(vals, cfg.antithetic, None if tail is None else -tail)


def foc_residual(x: float, batch: PathBatch, spd: StatePriceDensityPath,
                 sol: ClosedFormSolution, consumption: np.ndarray | None = None) -> float:
    """max |exp(-delta t) C^-R - V_x(x) zeta| / (V_x(x) zeta) over paths and grid points.

    The batch must be exact output of the optimal policy. ``consumption``
    replaces the batch consumption, e.g. to measure sensitivity.
    """
    pol = batch.policy
    if not (batch.exact and isinstance(pol, ConstantProportional)
            and math.isclose(pol.pi, sol.pi_hat, rel_tol=1e-12)
            and math.isclose(pol.xi, sol.xi_hat, rel_tol=1e-12)):
        raise ParameterError("first-order condition needs an exact optimal-policy batch")
    C = batch.C if consumption is None else np.asarray(consumption, dtype=float)
    R = sol.R
    log_lhs = -sol.delta * batch.times - R * np.log(C)
    log_rhs = math.log(sol.value_dx(x)) + np.log(spd.zeta)
    return float(np.max(np.abs(np.expm1(log_lhs - log_rhs))))


def duality_upper_bound(x: float, policy, cfg: SimConfig, m: MarketParams, a: AgentParams,
                        sol: ClosedFormSolution | None = None) -> McEstimate:
    """Slack V_hat(x) - J(C); nonnegative for every admissible policy."""
    sol = sol or merton_solution(m, a)
    est = mc_value(x, policy, cfg, m, a)
    return McEstimate(float(sol.value_at(x)) - est.mean, est.std_error, est.n_effective,
                      est.tail_bound, est.divergent, est.warning)


def deflated_wealth_probe(x: float, policy, times: Sequence[float], cfg: SimConfig,
                          m: MarketParams, a: AgentParams) -> list[McEstimate]:
    """E[Y_t] with Y_t = zeta_t X_t + int_0^t zeta C ds at the probe times."""
    idx = np.array([round(float(t) / cfg.dt) for t in times], dtype=int)
    if np.any(idx < 0) or np.any(idx > cfg.n_steps):
        raise ParameterError("probe times must lie within [0, horizon]")
    grid = cfg.times

    def run(ids):
        if isinstance(policy, ConstantProportional):
            _, W = brownian_levels(cfg, ids)
            X = cp_wealth(x, policy.pi, policy.xi, W, grid, m)
            C = policy.xi * X
        else:
            Z = rng.normals(cfg.seed, ids, cfg.n_steps, cfg.antithetic)
            W, X, C, _, _ = _euler_chunk(x, policy, Z, grid, cfg.dt, m, ids)
        z = spd_values(W, grid, m)
        f = z * C
        cum = np.zeros_like(f)
        np.cumsum(0.5 * cfg.dt * (f[:, 1:] + f[:, :-1]), axis=1, out=cum[:, 1:])
        return (z * X + cum)[:, idx]

    vals = np.concatenate(map_chunks(cfg, run))
    return [estimate(vals[:, j], cfg.antithetic) for j in range(len(idx))]


def nonincreasing_within(ests: Sequence[McEstimate], n_se: float = 3.0,
                         atol: float = 1e-8) -> bool:
    """Each successive mean exceeds the previous by at most n_se combined std
    errors plus ``atol`` (quadrature bias when the variance vanishes)."""
    for prev, nxt in zip(ests, ests[1:]):
        band = n_se * math.hypot(prev.std_error, nxt.std_error) + atol
        if nxt.mean - prev.mean > band:
            return False
    return True


@dataclass(frozen=True)
class CheckReport:
    check_name: str
    estimate: float
    ci95: tuple[float, float] | None
    passed: bool

    def to_json(self) -> dict:
        ci = None if self.ci95 is None else [float(self.ci95[0]), float(self.ci95[1])]
        return {"check_name": self.check_name, "estimate": float(self.estimate),
                "ci95": ci, "pass": bool(self.passed)}


def dual_report(x: float, cfg: SimConfig, m: MarketParams, a: AgentParams,
                suboptimal: Sequence[ConstantProportional] = (),
                foc_cfg: SimConfig | None = None) -> list[CheckReport]:
    """Budget equality and duality tightness for the optimal policy, the
    first-order condition, and budget feasibility and duality slack for
    each suboptimal constant-proportional policy."""
    from .paths import simulate_constant_policy

    sol = merton_solution(m, a)
    opt = ConstantProportional(sol.pi_hat, sol.xi_hat)
    out = []

    g = budget_gap_streaming(x, opt, cfg, m, a)
    out.append(CheckReport("budget_gap_optimal", g.mean, g.ci95,
                           abs(g.mean) <= 3 * g.std_error))

    fcfg = foc_cfg or SimConfig(cfg.seed, min(cfg.n_paths, 200), 0.01, 5.0, cfg.antithetic)
    batch = simulate_constant_policy(x, sol.pi_hat, sol.xi_hat, fcfg, m, a)
    res = foc_residual(x, batch, state_price_density(batch, m), sol)
    out.append(CheckReport("foc_residual", res, None, res <= 1e-10))

    s = duality_upper_bound(x, opt, cfg, m, a, sol)
    out.append(CheckReport("duality_slack_optimal", s.mean, s.ci95,
                           abs(s.mean) <= 3 * s.std_error))

    for pol in suboptimal:
        tag = f"pi={pol.pi:g},xi={pol.xi:g}"
        g = budget_gap_streaming(x, pol, cfg, m, a)
        out.append(CheckReport(f"budget_gap[{tag}]", g.mean, g.ci95,
                               g.mean >= -3 * g.std_error))
        s = duality_upper_bound(x, pol, cfg, m, a, sol)
        ok = s.mean >= -3 * s.std_error if math.isfinite(s.mean) else s.mean > 0
        out.append(CheckReport(f"duality_slack[{tag}]", s.mean, s.ci95, bool(ok)))
    return out
