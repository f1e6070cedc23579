"""Monte Carlo simulation of wealth, consumption and the verification martingales.

Constant-proportional strategies are simulated exactly from the Brownian
levels; general strategies use Euler-Maruyama with absorption at zero.
Paths are processed in fixed-size chunks whose layout depends only on the
configuration, so results are identical for any worker count.
"""

from __future__ import annotations

import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, NamedTuple, Sequence

import numpy as np

from . import rng
from .closed_form import F, constant_policy_value, merton_solution
from .errors import ParameterError, PolicyError
from .market import AgentParams, MarketParams

CHUNK_ELEMENTS = 4_000_000


# -- configuration and policies ------------------------------------------------

@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    n_paths: int = 1000
    dt: float = 0.01
    horizon: float = 1.0
    antithetic: bool = True

    def __post_init__(self):
        if not (isinstance(self.seed, (int, np.integer)) and 0 <= self.seed < 2**64):
            raise ParameterError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        if not (isinstance(self.n_paths, (int, np.integer)) and self.n_paths >= 1):
            raise ParameterError(f"n_paths must be a positive integer, got {self.n_paths!r}")
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ParameterError(f"dt must be > 0, got {self.dt!r}")
        if not (math.isfinite(self.horizon) and self.horizon > 0):
            raise ParameterError(f"horizon must be > 0, got {self.horizon!r}")
        n = round(self.horizon / self.dt)
        if n < 1 or abs(n * self.dt - self.horizon) > 1e-9 * self.horizon:
            raise ParameterError("horizon / dt must be a positive integer")
        if self.antithetic and self.n_paths % 2:
            raise ParameterError("antithetic sampling needs an even number of paths")

    @property
    def n_steps(self) -> int:
        return round(self.horizon / self.dt)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    @property
    def chunk_size(self) -> int:
        size = max(2, min(4096, CHUNK_ELEMENTS // (self.n_steps + 1)))
        return size - size % 2


@dataclass(frozen=True)
class ConstantProportional:
    pi: float
    xi: float

    def __post_init__(self):
        if not self.xi >= 0:
            raise ParameterError(f"xi must be >= 0, got {self.xi!r}")


class PathHistory(NamedTuple):
    """Everything observed up to and including the current grid index."""
    times: np.ndarray
    W: np.ndarray
    X: np.ndarray


@dataclass(frozen=True)
class GeneralRule:
    """``rule(t, x, history) -> (pi, c)``, vectorised over the paths of a chunk."""
    rule: Callable[[float, np.ndarray, PathHistory], tuple[Any, Any]]
    name: str = "general"


@dataclass(frozen=True)
class WildInvestment:
    """Unbounded investment X^(R-1)/(1-t) until the verification martingale hits 1."""


@dataclass(frozen=True)
class FastConsumption:
    """Unit investment with consumption X/((R-1)(1-t)) until the martingale hits 1."""


Policy = ConstantProportional | GeneralRule | WildInvestment | FastConsumption


def optimal_policy(m: MarketParams, a: AgentParams) -> ConstantProportional:
    sol = merton_solution(m, a)
    return ConstantProportional(sol.pi_hat, sol.xi_hat)


def default_horizon(pi: float, xi: float, m: MarketParams, a: AgentParams) -> float:
    if a.is_log:
        return max(200.0, 20.0 / a.delta) if a.delta > 0 else 200.0
    f = abs(F(pi, xi, m, a))
    return 200.0 if f == 0 else max(200.0, 20.0 / f)


# -- results -----------------------------------------------------------------------

@dataclass
class PathBatch:
    times: np.ndarray
    W: np.ndarray
    X: np.ndarray
    C: np.ndarray
    Pi: np.ndarray
    absorbed_at: np.ndarray
    x0: float
    policy: Any = None
    exact: bool = False
    path_ids: np.ndarray | None = None

    @property
    def n_paths(self) -> int:
        return self.X.shape[0]

    def to_csv(self, fh=None) -> str | None:
        """Rows ``path_id,t,W,X,C`` with 17 significant digits."""
        n, k = self.X.shape
        ids = self.path_ids if self.path_ids is not None else np.arange(n)
        buf = io.StringIO() if fh is None else fh
        buf.write("path_id,t,W,X,C\n")
        lines = []
        for i in range(n):
            for j in range(k):
                lines.append(f"{ids[i]},{self.times[j]:.17g},{self.W[i, j]:.17g},"
                             f"{self.X[i, j]:.17g},{self.C[i, j]:.17g}\n")
        buf.write("".join(lines))
        return buf.getvalue() if fh is None else None


def _json_number(v):
    if v is None:
        return None
    v = float(v)
    if math.isfinite(v):
        return v
    return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")


@dataclass(frozen=True)
class McEstimate:
    """Monte Carlo mean with standard error.

    ``mean`` already includes the analytic tail beyond the horizon when one
    is known; ``tail_bound`` is the magnitude of that correction (``None``
    when the tail is unknown).
    """

    mean: float
    std_error: float
    n_effective: int
    tail_bound: float | None = None
    divergent: bool = False
    warning: str | None = None

    @property
    def ci95(self) -> tuple[float, float]:
        if not math.isfinite(self.mean):
            return (self.mean, self.mean)
        return (self.mean - 1.96 * self.std_error, self.mean + 1.96 * self.std_error)

    def within(self, target: float, n_se: float = 3.0, rtol: float = 1e-12) -> bool:
        # rtol covers rounding when the estimator has (near) zero variance
        return abs(self.mean - target) <= n_se * self.std_error + rtol * max(1.0, abs(target))

    def to_json(self) -> dict:
        lo, hi = self.ci95
        return {"mean": _json_number(self.mean), "std_error": _json_number(self.std_error),
                "ci95_lo": _json_number(lo), "ci95_hi": _json_number(hi),
                "tail_bound": _json_number(self.tail_bound)}


def estimate(values: np.ndarray, antithetic: bool, tail: float | None = None,
             divergent: bool = False, warning: str | None = None) -> McEstimate:
    """Mean and standard error of per-path values (pairs averaged if antithetic)."""
    v = np.asarray(values, dtype=float)
    if antithetic:
        v = 0.5 * (v[0::2] + v[1::2])
    n = v.size
    with np.errstate(invalid="ignore"):
        mean = float(np.mean(v))
        se = float(np.std(v, ddof=1) / math.sqrt(n)) if n > 1 else math.nan
    if not math.isfinite(mean):
        se = math.nan
    if tail is not None:
        mean += tail
    return McEstimate(mean, se, n, None if tail is None else abs(tail), divergent, warning)


# -- chunked execution -------------------------------------------------------------

def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("MERTON_THREADS", "1")))
    except ValueError:
        return 1


def map_chunks(cfg: SimConfig, fn: Callable[[np.ndarray], Any],
               chunk_size: int | None = None) -> list:
    """Apply ``fn(path_ids)`` to consecutive path-id chunks, results in chunk order."""
    size = chunk_size or cfg.chunk_size
    chunks = [np.arange(i, min(i + size, cfg.n_paths)) for i in range(0, cfg.n_paths, size)]
    workers = min(worker_count(), len(chunks))
    if workers <= 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, chunks))


def brownian_levels(cfg: SimConfig, path_ids: np.ndarray, n_steps: int | None = None):
    """(Z, W): standard normal step draws and Brownian levels with W_0 = 0."""
    n = cfg.n_steps if n_steps is None else n_steps
    Z = rng.normals(cfg.seed, path_ids, n, cfg.antithetic)
    W = np.zeros((len(path_ids), n + 1))
    np.cumsum(Z, axis=1, out=W[:, 1:])
    W[:, 1:] *= math.sqrt(cfg.dt)
    return Z, W


def trapezoid_weights(n_steps: int, dt: float) -> np.ndarray:
    w = np.full(n_steps + 1, dt)
    w[0] = w[-1] = 0.5 * dt
    return w


def _cp_log_growth(pi: float, xi: float, m: MarketParams) -> float:
    return m.r + pi * (m.mu - m.r) - xi - 0.5 * pi * pi * m.sigma**2


def cp_wealth(x: float, pi: float, xi: float, W: np.ndarray, times: np.ndarray,
              m: MarketParams) -> np.ndarray:
    """Exact wealth x exp(pi sigma W_t + (r + pi(mu-r) - xi - pi^2 sigma^2/2) t)."""
    return x * np.exp(pi * m.sigma * W + _cp_log_growth(pi, xi, m) * times)


# -- simulation --------------------------------------------------------------------

def simulate_constant_policy(x: float, pi: float, xi: float, cfg: SimConfig,
                             m: MarketParams, a: AgentParams) -> PathBatch:
    if not x > 0:
        raise ParameterError("x must be > 0")
    policy = ConstantProportional(pi, xi)
    times = cfg.times

    def run(ids):
        _, W = brownian_levels(cfg, ids)
        return W, cp_wealth(x, pi, xi, W, times, m)

    parts = map_chunks(cfg, run)
    W = np.concatenate([p[0] for p in parts])
    X = np.concatenate([p[1] for p in parts])
    return PathBatch(times=times, W=W, X=X, C=xi * X, Pi=np.full_like(X, pi),
                     absorbed_at=np.full(cfg.n_paths, np.nan), x0=x, policy=policy,
                     exact=True, path_ids=np.arange(cfg.n_paths))


def _controls(policy, t: float, X: np.ndarray, hist: PathHistory, ids: np.ndarray):
    if isinstance(policy, ConstantProportional):
        return np.full_like(X, policy.pi), policy.xi * X
    if isinstance(policy, GeneralRule):
        try:
            pi, c = policy.rule(t, X, hist)
        except Exception as exc:
            raise PolicyError(f"policy callback failed at t={t!r} on paths "
                              f"{ids[0]}..{ids[-1]}: {exc}") from exc
        return (np.broadcast_to(np.asarray(pi, dtype=float), X.shape).copy(),
                np.broadcast_to(np.asarray(c, dtype=float), X.shape).copy())
    raise ParameterError(f"{type(policy).__name__} is not simulated by the Euler engine")


def _euler_chunk(x: float, policy, Z: np.ndarray, times: np.ndarray, dt: float,
                 m: MarketParams, ids: np.ndarray):
    n, steps = Z.shape
    W = np.zeros((n, steps + 1))
    np.cumsum(Z, axis=1, out=W[:, 1:])
    W[:, 1:] *= math.sqrt(dt)
    X = np.zeros((n, steps + 1))
    C = np.zeros((n, steps + 1))
    Pi = np.ones((n, steps + 1))
    X[:, 0] = x
    absorbed = np.full(n, np.nan)
    alive = np.ones(n, dtype=bool)
    sq = math.sqrt(dt)
    for k in range(steps + 1):
        t = float(times[k])
        xk = X[:, k]
        hist = PathHistory(times[:k + 1], W[:, :k + 1], X[:, :k + 1])
        pi, c = _controls(policy, t, xk, hist, ids)
        # after absorption: Pi = 1, C = 0 by convention; X stays 0 either way
        pi[~alive] = 1.0
        c[~alive] = 0.0
        bad = ~np.isfinite(c) | (c < 0) | ~np.isfinite(pi)
        if np.any(bad):
            j = int(np.argmax(bad))
            raise PolicyError(f"inadmissible control at t={t!r} on path {ids[j]}: "
                              f"pi={pi[j]!r}, c={c[j]!r}")
        Pi[:, k] = pi
        C[:, k] = c
        if k == steps:
            break
        nxt = xk + xk * pi * m.sigma * sq * Z[:, k] + (xk * (m.r + pi * (m.mu - m.r)) - c) * dt
        hit = alive & (nxt <= 0)
        nxt[hit | ~alive] = 0.0
        absorbed[hit] = times[k + 1]
        alive &= ~hit
        X[:, k + 1] = nxt
    return W, X, C, Pi, absorbed


def simulate_general_policy(x: float, policy, cfg: SimConfig, m: MarketParams,
                            a: AgentParams) -> PathBatch:
    if not x > 0:
        raise ParameterError("x must be > 0")
    times = cfg.times

    def run(ids):
        Z = rng.normals(cfg.seed, ids, cfg.n_steps, cfg.antithetic)
        return _euler_chunk(x, policy, Z, times, cfg.dt, m, ids)

    parts = map_chunks(cfg, run)
    W, X, C, Pi, absorbed = (np.concatenate([p[i] for p in parts]) for i in range(5))
    return PathBatch(times=times, W=W, X=X, C=C, Pi=Pi, absorbed_at=absorbed, x0=x,
                     policy=policy, exact=False, path_ids=np.arange(cfg.n_paths))


# -- value estimation --------------------------------------------------------------

def discounted_utility(C: np.ndarray, times: np.ndarray, a: AgentParams) -> np.ndarray:
    disc = np.exp(-a.delta * times)
    with np.errstate(divide="ignore"):
        if a.is_log:
            u = np.log(C)
        else:
            p = 1.0 - a.R
            u = np.where(C > 0, np.power(np.where(C > 0, C, 1.0), p) / p,
                         -np.inf if a.R > 1 else 0.0)
    return u * disc


def _cp_tail(x: float, pol: ConstantProportional, T: float, m: MarketParams,
             a: AgentParams) -> tuple[float | None, bool]:
    """Analytic integral of E[exp(-delta t) U(C_t)] over (T, inf); flag divergence."""
    if a.is_log:
        d = a.delta
        if d <= 0:
            return None, True
        g = _cp_log_growth(pol.pi, pol.xi, m)
        base = math.log(pol.xi * x)
        return math.exp(-d * T) * ((base + g * T) / d + g / d**2), False
    f = F(pol.pi, pol.xi, m, a)
    if f <= 0:
        return None, True
    p = 1.0 - a.R
    return x**p * pol.xi**p / (p * f) * math.exp(-f * T), False


def _cp_path_values(x: float, pol: ConstantProportional, W: np.ndarray, times: np.ndarray,
                    w: np.ndarray, m: MarketParams, a: AgentParams) -> np.ndarray:
    """Trapezoid integral of exp(-delta t) U(xi X_t) per path, X exact."""
    s = m.sigma
    g = _cp_log_growth(pol.pi, pol.xi, m)
    if pol.xi == 0:
        return np.full(W.shape[0], -np.inf if (a.is_log or a.R > 1) else 0.0)
    if a.is_log:
        disc = w * np.exp(-a.delta * times)
        return (math.log(pol.xi * x) * disc.sum() + pol.pi * s * (W @ disc)
                + g * float(np.dot(times, disc)))
    p = 1.0 - a.R
    E = (p * pol.pi * s) * W
    E += (p * g - a.delta) * times
    np.exp(E, out=E)
    return (pol.xi * x) ** p / p * (E @ w)


def mc_value_many(x: float, policies: Sequence[ConstantProportional], cfg: SimConfig,
                  m: MarketParams, a: AgentParams, *, tail_tol: float = 1e-3) -> list[McEstimate]:
    """Estimate J for several constant-proportional policies on common paths."""
    if not x > 0:
        raise ParameterError("x must be > 0")
    times = cfg.times
    w = trapezoid_weights(cfg.n_steps, cfg.dt)

    def run(ids):
        _, W = brownian_levels(cfg, ids)
        return np.stack([_cp_path_values(x, p, W, times, w, m, a) for p in policies], axis=1)

    vals = np.concatenate(map_chunks(cfg, run))
    out = []
    for j, pol in enumerate(policies):
        tail, divergent = _cp_tail(x, pol, float(times[-1]), m, a)
        est = estimate(vals[:, j], cfg.antithetic, tail, divergent)
        if divergent:
            est = McEstimate(est.mean, est.std_error, est.n_effective, None, True,
                             "integral diverges as the horizon grows")
        elif tail is not None and abs(tail) > tail_tol * max(abs(est.mean), 1e-300):
            est = McEstimate(est.mean, est.std_error, est.n_effective, est.tail_bound, False,
                             "horizon too short for requested tail accuracy")
        out.append(est)
    return out


def mc_value(x: float, policy, cfg: SimConfig, m: MarketParams, a: AgentParams,
             *, tail_tol: float = 1e-3) -> McEstimate:
    """Estimate J(C) = E int_0^T exp(-delta t) U(C_t) dt (trapezoid per path).

    Constant-proportional policies use exact wealth and get the analytic
    tail beyond T; general policies are simulated by Euler and carry no tail.
    """
    if isinstance(policy, ConstantProportional):
        return mc_value_many(x, [policy], cfg, m, a, tail_tol=tail_tol)[0]
    if isinstance(policy, (WildInvestment, FastConsumption)):
        raise ParameterError("counterexample policies are simulated by the counterexample engine")
    times = cfg.times
    w = trapezoid_weights(cfg.n_steps, cfg.dt)

    def run(ids):
        Z = rng.normals(cfg.seed, ids, cfg.n_steps, cfg.antithetic)
        _, _, C, _, _ = _euler_chunk(x, policy, Z, times, cfg.dt, m, ids)
        du = discounted_utility(C, times, a)
        return du @ w, du[:, 0], du[:, -1]

    parts = map_chunks(cfg, run)
    vals = np.concatenate([p[0] for p in parts])
    start = np.concatenate([p[1] for p in parts])
    end = np.concatenate([p[2] for p in parts])
    with np.errstate(invalid="ignore"):
        # heuristic: the discounted utility rate has not decayed over the horizon
        divergent = bool(abs(np.mean(end)) >= abs(np.mean(start)))
    est = estimate(vals, cfg.antithetic, None, divergent)
    warning = "tail beyond the horizon is unknown for general policies"
    return McEstimate(est.mean, est.std_error, est.n_effective, None, divergent, warning)


# -- fiat-condition probes ---------------------------------------------------------

def _grid_indices(times: Sequence[float], cfg: SimConfig) -> np.ndarray:
    idx = np.array([round(float(t) / cfg.dt) for t in times], dtype=int)
    if np.any(idx < 0) or np.any(idx > cfg.n_steps):
        raise ParameterError("probe times must lie within [0, horizon]")
    return idx


def _wealth_paths(x, policy, cfg, m, ids):
    """(Z, W, X, Pi) for a chunk, exact for constant-proportional policies."""
    if isinstance(policy, ConstantProportional):
        Z, W = brownian_levels(cfg, ids)
        X = cp_wealth(x, policy.pi, policy.xi, W, cfg.times, m)
        return Z, W, X, np.full_like(X, policy.pi)
    Z = rng.normals(cfg.seed, ids, cfg.n_steps, cfg.antithetic)
    W, X, _, Pi, _ = _euler_chunk(x, policy, Z, cfg.times, cfg.dt, m, ids)
    return Z, W, X, Pi


def transversality_probe(x: float, policy, times: Sequence[float], cfg: SimConfig,
                         m: MarketParams, a: AgentParams) -> list[McEstimate]:
    """E[exp(-delta t) X_t^(1-R)/(1-R)] at each probe time (log X_t for R = 1)."""
    idx = _grid_indices(times, cfg)
    tgrid = cfg.times[idx]

    def run(ids):
        _, _, X, _ = _wealth_paths(x, policy, cfg, m, ids)
        Xi = X[:, idx]
        with np.errstate(divide="ignore"):
            if a.is_log:
                v = np.log(Xi)
            else:
                p = 1.0 - a.R
                v = np.power(Xi, p) / p
        return v * np.exp(-a.delta * tgrid)

    vals = np.concatenate(map_chunks(cfg, run))
    return [estimate(vals[:, j], cfg.antithetic) for j in range(len(idx))]


def verification_martingale(X: np.ndarray, Pi: np.ndarray, Z: np.ndarray, times: np.ndarray,
                            dt: float, m: MarketParams, a: AgentParams) -> np.ndarray:
    """Ito sums of sigma Pi X V_x(X) exp(-delta t) dW with V the candidate value."""
    sol = merton_solution(m, a)
    Xl = X[:, :-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        vx = sol.value_dx(np.where(Xl > 0, Xl, 1.0))
        integrand = np.where(Xl > 0, m.sigma * Pi[:, :-1] * Xl * vx, 0.0)
    integrand *= np.exp(-a.delta * times[:-1])
    N = np.zeros_like(X)
    np.cumsum(integrand * Z * math.sqrt(dt), axis=1, out=N[:, 1:])
    return N


def supermartingale_probe(x: float, policy, times: Sequence[float], cfg: SimConfig,
                          m: MarketParams, a: AgentParams) -> list[McEstimate]:
    """E[N_t] at the probe times; a supermartingale needs E[N_t] <= 0."""
    if isinstance(policy, (WildInvestment, FastConsumption)):
        from .counterexamples import martingale_at_times
        return martingale_at_times(x, policy, times, cfg, m, a)
    idx = _grid_indices(times, cfg)

    def run(ids):
        Z, _, X, Pi = _wealth_paths(x, policy, cfg, m, ids)
        return verification_martingale(X, Pi, Z, cfg.times, cfg.dt, m, a)[:, idx]

    vals = np.concatenate(map_chunks(cfg, run))
    return [estimate(vals[:, j], cfg.antithetic) for j in range(len(idx))]


# -- stochastic perturbation -------------------------------------------------------

@dataclass(frozen=True)
class PerturbationResult:
    estimate: McEstimate
    target: float
    max_identity_error: float


def perturbed_consumption_value(x: float, eps: float, cfg: SimConfig, m: MarketParams,
                                a: AgentParams, *, tail_tol: float = 1e-3) -> PerturbationResult:
    """Estimate J(C_hat + eps G) from the optimal wealth X (from x) and Y (from 1).

    Also checks pathwise that X + eps Y equals optimal wealth started at x + eps.
    """
    if not (x > 0 and eps > 0):
        raise ParameterError("x and eps must be > 0")
    sol = merton_solution(m, a)
    pol = ConstantProportional(sol.pi_hat, sol.xi_hat)
    times = cfg.times
    w = trapezoid_weights(cfg.n_steps, cfg.dt)

    def run(ids):
        _, W = brownian_levels(cfg, ids)
        X = cp_wealth(x, pol.pi, pol.xi, W, times, m)
        Y = cp_wealth(1.0, pol.pi, pol.xi, W, times, m)
        Xe = cp_wealth(x + eps, pol.pi, pol.xi, W, times, m)
        combined = X + eps * Y
        err = float(np.max(np.abs(combined - Xe) / Xe))
        vals = discounted_utility(sol.xi_hat * combined, times, a) @ w
        return vals, err

    parts = map_chunks(cfg, run)
    vals = np.concatenate([p[0] for p in parts])
    err = max(p[1] for p in parts)
    tail, divergent = _cp_tail(x + eps, pol, float(times[-1]), m, a)
    return PerturbationResult(estimate(vals, cfg.antithetic, tail, divergent),
                              float(sol.value_at(x + eps)), err)


def constant_value_target(pol: ConstantProportional, x: float, m: MarketParams,
                          a: AgentParams) -> float:
    return float(constant_policy_value(pol.pi, pol.xi, x, m, a))
