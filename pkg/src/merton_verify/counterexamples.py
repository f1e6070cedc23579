"""Admissible strategies whose verification local martingale N is not a supermartingale.

Both strategies run until the stopping time at which N first reaches 1, a
time that is almost surely before t = 1. The integrands blow up like
1/(1-t), so paths are advanced on a dyadic grid: step ``dt`` on [0, 1/2]
and step ``dt * 2^-k`` on [1 - 2^-k, 1 - 2^-(k+1)], up to a hard floor
t <= 1 - 1e-6. Hitting is detected at grid points (no bridge correction),
so the stopped value of N overshoots 1 slightly; the overshoot is reported.

* ``WildInvestment``: Pi = X^(R-1)/(1-t), C = rX + Pi X (mu-r). Wealth is
  a time-changed CEV process, simulated by log-Euler (positivity preserved);
  the N integrand is deterministic.
* ``FastConsumption``: Pi = 1, consumption X/((R-1)(1-t)) on top of the
  interest and risk premium. Wealth is simulated exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .closed_form import merton_solution
from .errors import ParameterError
from .market import AgentParams, MarketParams
from .paths import (FastConsumption, McEstimate, PathBatch, SimConfig, WildInvestment,
                    estimate, map_chunks)
from .rng import PathStreams

T_FLOOR = 1.0 - 1e-6
HIT_DEADLINE = 1.0 - 1e-3
DEFAULT_PROBES = (0.5, 0.9, 0.99, HIT_DEADLINE, T_FLOOR)
BLOCK = 512
CHUNK = 2048


class DyadicGrid:
    """Grid points t_j, computed from j without storing the grid."""

    def __init__(self, dt: float, floor: float = T_FLOOR):
        if not (0 < dt <= 0.5):
            raise ParameterError("base step must lie in (0, 0.5]")
        self.M = max(1, math.ceil(0.5 / dt - 1e-9))
        self.floor = floor
        kf = math.floor(-math.log2(1.0 - floor))
        j = kf * self.M + math.ceil((floor - (1.0 - 2.0**-kf)) * self.M * 2.0 ** (kf + 1) - 1e-9)
        while self.time(j - 1) >= floor:
            j -= 1
        while self.time(j) < floor:
            j += 1
        self.j_max = j

    def time(self, j):
        j = np.asarray(j, dtype=np.int64)
        k = j // self.M
        i = j % self.M
        t = 1.0 - np.exp2(-k.astype(float)) + i * np.exp2(-(k + 1).astype(float)) / self.M
        t = np.minimum(t, self.floor)
        return float(t) if t.ndim == 0 else t

    def index_at_or_before(self, t: float) -> int:
        """Largest j <= j_max with t_j <= t."""
        if t >= self.floor:
            return self.j_max
        k = math.floor(-math.log2(1.0 - t))
        j = k * self.M + math.floor((t - (1.0 - 2.0**-k)) * self.M * 2.0 ** (k + 1))
        j = min(max(j, 0), self.j_max)
        while j > 0 and self.time(j) > t:
            j -= 1
        while j < self.j_max and self.time(j + 1) <= t:
            j += 1
        return j


@dataclass(frozen=True)
class HittingStats:
    n_paths: int
    hit_fraction: float
    """fraction of paths with N reaching 1 before 1 - 1e-3"""
    hit_fraction_floor: float
    mean_hit_time: float
    max_hit_time: float
    overshoot_mean: float
    overshoot_max: float
    min_wealth: float
    max_pi: float

    def to_json(self) -> dict:
        return {k: (None if isinstance(v, float) and not math.isfinite(v) else v)
                for k, v in self.__dict__.items()}


@dataclass
class CounterexampleResult:
    batch: PathBatch
    stats: HittingStats
    probe_times: tuple[float, ...]
    probes: list[McEstimate]


def _check_regime(m: MarketParams, a: AgentParams) -> float:
    if a.is_log or a.R <= 1:
        raise ParameterError("counterexamples need R > 1")
    if not (m.mu >= m.r > 0):
        raise ParameterError("counterexamples need mu >= r > 0")
    return merton_solution(m, a).xi_hat


def default_record_times() -> np.ndarray:
    early = np.geomspace(1e-6, 0.5, 40)
    late = 1.0 - np.exp2(-np.arange(1, 20, dtype=float))
    return np.unique(np.concatenate([[0.0], early, late, [T_FLOOR]]))


def _controls(kind, X, t, hit_done, m: MarketParams, a: AgentParams):
    """(Pi, C) at wealth X and time t; after the stop Pi = 0 and C = rX."""
    if kind == "wild":
        pi = np.power(X, a.R - 1.0) / (1.0 - t)
        extra = 0.0
    else:
        pi = np.ones_like(X)
        extra = X / ((a.R - 1.0) * (1.0 - t))
    pi = np.where(hit_done, 0.0, pi)
    c = m.r * X + pi * X * (m.mu - m.r) + np.where(hit_done, 0.0, extra)
    return pi, c


def _run_chunk(kind: str, x: float, ids: np.ndarray, cfg: SimConfig, grid: DyadicGrid,
               rec_idx: np.ndarray, probe_idx: np.ndarray, m: MarketParams, a: AgentParams,
               e: float):
    n = len(ids)
    R, s, d = a.R, m.sigma, a.delta
    streams = PathStreams(cfg.seed, ids, cfg.antithetic)
    W = np.zeros(n)
    N = np.zeros(n)
    logX = np.full(n, math.log(x))
    hit_j = np.full(n, -1, dtype=np.int64)
    min_logx = logX.copy()
    # snapshots of (W, N, logX) at record and probe grid indices
    snap_idx = np.unique(np.concatenate([rec_idx, probe_idx]))
    snaps = np.full((3, n, len(snap_idx)), np.nan)
    scale = e ** (-R) * s
    if kind == "fast":
        scale *= x ** (1.0 - R)

    if snap_idx[0] == 0:
        snaps[:, :, 0] = np.stack([W, N, logX])
    active = np.arange(n)
    j0 = 0
    while active.size and j0 < grid.j_max:
        nb = min(BLOCK, grid.j_max - j0)
        t = grid.time(np.arange(j0, j0 + nb + 1))
        h = np.diff(t)
        dW = streams.draw(active, nb) * np.sqrt(h)
        Wb = W[active, None] + np.cumsum(dW, axis=1)
        Wl = np.concatenate([W[active, None], Wb[:, :-1]], axis=1)
        if kind == "wild":
            integ = np.broadcast_to(scale * np.exp(-d * t[:-1]) / (1.0 - t[:-1]), dW.shape)
        else:
            integ = scale * np.exp(s * (1.0 - R) * Wl - (d + 0.5 * (1.0 - R) * s * s) * t[:-1]) \
                / (1.0 - t[:-1])
        Nb = N[active, None] + np.cumsum(integ * dW, axis=1)
        crossed = Nb >= 1.0
        has = crossed.any(axis=1)
        first = np.where(has, crossed.argmax(axis=1), nb - 1)
        # freeze everything after the hitting step
        cols = np.arange(nb)[None, :]
        after = cols > first[:, None]
        Wb = np.where(after, np.take_along_axis(Wb, first[:, None], 1), Wb)
        Nb = np.where(after, np.take_along_axis(Nb, first[:, None], 1), Nb)
        if kind == "wild":
            Lb = np.empty_like(Wb)
            lx = logX[active].copy()
            live = np.ones(len(active), dtype=bool)
            for k in range(nb):
                b = s * np.exp((R - 1.0) * lx) / (1.0 - t[k])
                lx = np.where(live, lx + b * dW[:, k] - 0.5 * b * b * h[k], lx)
                Lb[:, k] = lx
                live &= k < first
        else:
            Lb = math.log(x) + np.log1p(-t[1:]) / (R - 1.0) + s * Wb - 0.5 * s * s * t[1:]
            Lb = np.where(after, np.take_along_axis(Lb, first[:, None], 1), Lb)
        for pos, j in enumerate(snap_idx):
            if j0 < j <= j0 + nb:
                snaps[0, active, pos] = Wb[:, j - j0 - 1]
                snaps[1, active, pos] = Nb[:, j - j0 - 1]
                snaps[2, active, pos] = Lb[:, j - j0 - 1]
        W[active] = Wb[:, -1]
        N[active] = Nb[:, -1]
        logX[active] = Lb[:, -1]
        min_logx[active] = np.minimum(min_logx[active], Lb.min(axis=1))
        hit_j[active[has]] = j0 + 1 + first[has]
        active = active[~has]
        j0 += nb
    # stopped paths keep their final state at later snapshots
    for q in range(3):
        final = (W, N, logX)[q]
        fill = np.isnan(snaps[q])
        snaps[q][fill] = np.broadcast_to(final[:, None], snaps[q].shape)[fill]
    return hit_j, N, snaps, snap_idx, min_logx


def _simulate(kind: str, x: float, cfg: SimConfig, m: MarketParams, a: AgentParams,
              probe_times: Sequence[float], record_times: Sequence[float] | None):
    if not x > 0:
        raise ParameterError("x must be > 0")
    e = _check_regime(m, a)
    grid = DyadicGrid(cfg.dt)
    probe_times = tuple(float(p) for p in probe_times)
    if any(not (0 <= p <= T_FLOOR) for p in probe_times):
        raise ParameterError(f"probe times must lie in [0, {T_FLOOR}]")
    rec_t = default_record_times() if record_times is None else np.asarray(record_times, float)
    rec_t = np.clip(rec_t, 0.0, T_FLOOR)
    rec_idx = np.array([grid.index_at_or_before(t) for t in rec_t], dtype=np.int64)
    probe_idx = np.array([grid.index_at_or_before(t) for t in probe_times], dtype=np.int64)

    parts = map_chunks(cfg, lambda ids: _run_chunk(kind, x, ids, cfg, grid, rec_idx, probe_idx,
                                                   m, a, e), CHUNK)
    hit_j = np.concatenate([p[0] for p in parts])
    N_end = np.concatenate([p[1] for p in parts])
    snaps = np.concatenate([p[2] for p in parts], axis=1)
    snap_idx = parts[0][3]
    min_logx = np.concatenate([p[4] for p in parts])

    hit_t = np.where(hit_j >= 0, grid.time(np.maximum(hit_j, 0)), np.nan)
    hit = hit_j >= 0
    col = {int(j): i for i, j in enumerate(snap_idx)}
    rec_cols = [col[int(j)] for j in rec_idx]
    times = grid.time(rec_idx)
    Wr, Xr = snaps[0][:, rec_cols], np.exp(snaps[2][:, rec_cols])
    done = hit[:, None] & (rec_idx[None, :] > hit_j[:, None])
    Pi, C = _controls(kind, Xr, times[None, :], done, m, a)
    batch = PathBatch(times=times, W=Wr, X=Xr, C=C, Pi=Pi,
                      absorbed_at=np.full(cfg.n_paths, np.nan), x0=x,
                      policy=WildInvestment() if kind == "wild" else FastConsumption(),
                      exact=(kind == "fast"), path_ids=np.arange(cfg.n_paths))
    probes = [estimate(snaps[1][:, col[int(j)]], cfg.antithetic) for j in probe_idx]
    over = N_end[hit] - 1.0
    stats = HittingStats(
        n_paths=cfg.n_paths,
        hit_fraction=float(np.mean(hit & (hit_t < HIT_DEADLINE))),
        hit_fraction_floor=float(np.mean(hit)),
        mean_hit_time=float(np.mean(hit_t[hit])) if hit.any() else math.nan,
        max_hit_time=float(np.max(hit_t[hit])) if hit.any() else math.nan,
        overshoot_mean=float(np.mean(over)) if hit.any() else math.nan,
        overshoot_max=float(np.max(over)) if hit.any() else math.nan,
        min_wealth=float(np.exp(np.min(min_logx))),
        max_pi=float(np.max(Pi)),
    )
    return CounterexampleResult(batch, stats, probe_times, probes)


def counterexample_wild(x: float, cfg: SimConfig, m: MarketParams, a: AgentParams, *,
                        probe_times: Sequence[float] = DEFAULT_PROBES,
                        record_times: Sequence[float] | None = None) -> CounterexampleResult:
    return _simulate("wild", x, cfg, m, a, probe_times, record_times)


def counterexample_fast_consumption(x: float, cfg: SimConfig, m: MarketParams, a: AgentParams,
                                    *, probe_times: Sequence[float] = DEFAULT_PROBES,
                                    record_times: Sequence[float] | None = None
                                    ) -> CounterexampleResult:
    return _simulate("fast", x, cfg, m, a, probe_times, record_times)


def fast_consumption_wealth(x: float, t, W, m: MarketParams, a: AgentParams):
    """Closed-form wealth x (1-t)^(1/(R-1)) exp(sigma W - sigma^2 t / 2) before the stop."""
    t = np.asarray(t, dtype=float)
    s = m.sigma
    return x * np.exp(np.log1p(-t) / (a.R - 1.0) + s * np.asarray(W) - 0.5 * s * s * t)


def martingale_at_times(x: float, policy, times: Sequence[float], cfg: SimConfig,
                        m: MarketParams, a: AgentParams) -> list[McEstimate]:
    kind = "wild" if isinstance(policy, WildInvestment) else "fast"
    return _simulate(kind, x, cfg, m, a, times, [0.0]).probes
