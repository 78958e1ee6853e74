"""Finite-horizon pricing recursion for a frozen market situation.

The situation observed now is assumed to persist for the rest of the horizon,
which reduces the state to (time, inventory). Re-solving whenever the market
moves and posting only the first decision gives the observe-solve-price
heuristic. An optional fixed penalty for price changes adds the previous price
to the state.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .demand import DemandModel, MarketSituation, poisson_table, probability_matrix

TIE_TOL = 1e-12
_RANK_ATOL = 1e-9


class SolverError(ValueError):
    pass


@dataclass(frozen=True)
class SolverParams:
    T: int
    N: int
    c: float
    l: float
    delta: float
    A: tuple[float, ...]
    z: float = 0.0
    eps: float = 0.01

    def __post_init__(self) -> None:
        A = tuple(float(a) for a in np.asarray(self.A, dtype=float).ravel())
        object.__setattr__(self, "A", A)
        if int(self.T) != self.T or self.T < 1:
            raise SolverError("T must be a positive integer")
        if int(self.N) != self.N or self.N < 1:
            raise SolverError("N must be a positive integer")
        if not 0 < self.delta <= 1:
            raise SolverError("delta must lie in (0, 1]")
        if not A:
            raise SolverError("empty action set")
        if any(b <= a for a, b in zip(A, A[1:])):
            raise SolverError("A must be strictly increasing")
        if self.z < 0:
            raise SolverError("z must be nonnegative")
        if self.l < 0:
            raise SolverError("l must be nonnegative")
        if not self.eps > 0:
            raise SolverError("eps must be positive")

    @property
    def grid(self) -> np.ndarray:
        return np.asarray(self.A)

    def replace(self, **kw) -> "SolverParams":
        fields = dict(T=self.T, N=self.N, c=self.c, l=self.l, delta=self.delta,
                      A=self.A, z=self.z, eps=self.eps)
        fields.update(kw)
        return SolverParams(**fields)


@dataclass
class ValueTable:
    """``values[s, n]`` at time ``times[s]``; with a previous-price axis,
    ``values[s, n, m]`` where ``a_prev[m]`` is the price posted last period
    (0 for none)."""

    times: np.ndarray
    values: np.ndarray
    a_prev: np.ndarray | None = None

    def at(self, t: float, n: int, a_prev: float | None = None) -> float:
        s = _time_index(self.times, t)
        if self.a_prev is None:
            return float(self.values[s, n])
        return float(self.values[s, n, _price_index(self.a_prev, a_prev or 0.0)])


@dataclass
class PolicyTable:
    """Prices for every decision time; NaN where inventory is zero."""

    times: np.ndarray
    prices: np.ndarray
    a_prev: np.ndarray | None = None

    def at(self, t: float, n: int, a_prev: float | None = None) -> float:
        s = _time_index(self.times, t)
        if self.a_prev is None:
            return float(self.prices[s, n])
        return float(self.prices[s, n, _price_index(self.a_prev, a_prev or 0.0)])


def _time_index(times: np.ndarray, t: float) -> int:
    s = int(np.argmin(np.abs(times - t)))
    if abs(times[s] - t) > 1e-9:
        raise SolverError(f"time {t} not on the grid")
    return s


def _price_index(grid: np.ndarray, a: float) -> int:
    m = int(np.argmin(np.abs(grid - a)))
    if abs(grid[m] - a) > 1e-9:
        raise SolverError(f"price {a} not in the grid")
    return m


def _steps(T: int, duration: float) -> int:
    if not 0 < duration <= 1:
        raise SolverError("duration must lie in (0, 1]")
    H = round(1 / duration)
    if abs(H * duration - 1) > 1e-12:
        raise SolverError("duration must be 1/H for an integer H")
    return T * H


# -- action reduction ---------------------------------------------------------


def restricted_action_set(prices, eps: float) -> np.ndarray:
    """Prices that undercut each competitor by ``eps`` (floored at zero)."""
    if eps <= 0:
        raise SolverError("eps must be positive")
    p = np.asarray(prices, dtype=float)
    if p.size == 0:
        return p
    return np.unique(np.round(np.maximum(p - eps, 0.0), 12))


def reduction_is_exact(m: DemandModel, params: SolverParams, K: int) -> bool:
    """True when only rank-interval endpoints can be optimal.

    Inside an interval of constant price rank the logit moves linearly with
    slope ``s``. If ``|s| * B < 1`` with ``B = max(A) - c + l*T + (c - min(A))+``
    the one-step value is strictly increasing in the price there, whatever the
    continuation values are, so the largest grid price of each interval
    dominates the rest of it. ``B`` bounds |(a - c) - delta * (V(k) - V(k-1))|
    by a one-hidden-unit coupling.
    """
    slope = m.within_rank_slope(K)
    if slope is None or K == 0:
        return False
    A = params.grid
    bound = A[-1] - params.c + params.l * params.T + max(params.c - A[0], 0.0)
    return A[-1] >= params.c and abs(slope) * bound < 1.0


def candidate_indices(A: np.ndarray, competitors: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-row grid indices that can be optimal under an exact reduction.

    For each competitor price: the largest grid price strictly below it and a
    grid price tied with it; plus the top of the grid. ``competitors`` is
    ``(S, K)`` (NaN for absent firms). Returns an ``(S, C)`` index array sorted
    by price with ``-1`` padding and the per-row counts.
    """
    comp = np.atleast_2d(np.asarray(competitors, dtype=float))
    S = comp.shape[0]
    M = A.size
    safe = np.where(np.isnan(comp), np.inf, comp)
    lo = np.searchsorted(A, safe - _RANK_ATOL, side="left")
    below = np.where(np.isfinite(safe), lo - 1, -1)
    tie = np.where((lo < M) & (A[np.minimum(lo, M - 1)] <= safe + _RANK_ATOL), lo, -1)
    idx = np.concatenate([below, tie, np.full((S, 1), M - 1)], axis=1)
    idx = np.sort(idx, axis=1)
    dup = np.zeros_like(idx, dtype=bool)
    dup[:, 1:] = idx[:, 1:] == idx[:, :-1]
    idx = np.where(dup | (idx < 0), M, idx)
    idx = np.sort(idx, axis=1)
    counts = (idx < M).sum(axis=1)
    idx = idx[:, : counts.max()]
    return np.where(idx < M, idx, -1), counts


def situation_candidates(
    s: MarketSituation, params: SolverParams, m: DemandModel, full_grid: bool = False
) -> np.ndarray:
    """Prices the solver needs to examine for situation ``s``."""
    A = params.grid
    if full_grid or not reduction_is_exact(m, params, s.K):
        return A
    idx, counts = candidate_indices(A, np.array([s.competitor_prices]))
    return A[idx[0, : counts[0]]]


# -- sticky recursion ----------------------------------------------------------


def _tables_for(s: MarketSituation, prices: np.ndarray, m: DemandModel, duration: float, N: int):
    comp = np.array([s.competitor_prices], dtype=float).reshape(1, -1)
    p = probability_matrix(m, prices[None, :], comp, np.array([s.time]), situations=[s])[0]
    return poisson_table(duration * m.d * p, N)


def solve_sticky(
    s: MarketSituation,
    params: SolverParams,
    m: DemandModel,
    duration: float = 1.0,
    full_grid: bool = False,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Raw recursion over remaining steps: ``(V[r, n], policy index[r, n], prices)``."""
    steps = _steps(params.T, duration)
    prices = situation_candidates(s, params, m, full_grid)
    pmf, sf = _tables_for(s, prices, m, duration, params.N)
    V, pol = _kernels.sticky_backward(
        prices, pmf, sf, params.c, params.l * duration, params.delta**duration,
        steps, params.N, TIE_TOL,
    )
    return V, pol, prices


def solve_value(
    s: MarketSituation,
    params: SolverParams,
    m: DemandModel,
    duration: float = 1.0,
    full_grid: bool = False,
) -> tuple[ValueTable, PolicyTable]:
    """Value and policy tables for a situation held fixed over the horizon.

    ``duration`` is the period length used for the conditional sales
    distribution; the horizon is split into ``T / duration`` steps with
    per-step discount ``delta**duration`` and holding cost ``l * duration``.
    """
    V, pol, prices = solve_sticky(s, params, m, duration, full_grid)
    steps = V.shape[0] - 1
    times = np.arange(steps + 1) * duration
    values = V[::-1].copy()
    idx = pol[::-1][:-1]
    out = np.where(idx >= 0, prices[np.maximum(idx, 0)], np.nan)
    return ValueTable(times, values), PolicyTable(times[:-1], out)


def heuristic_price(
    s: MarketSituation,
    n: int,
    t: float,
    params: SolverParams,
    m: DemandModel,
    duration: float = 1.0,
) -> float:
    """Price for inventory ``n`` at time ``t`` from a fresh solve on ``s``."""
    if t >= params.T:
        raise SolverError("horizon exhausted")
    if t < 0:
        raise SolverError("time must be nonnegative")
    steps = _steps(params.T, duration)
    done = int(round(t / duration))
    if abs(done * duration - t) > 1e-9:
        raise SolverError(f"time {t} not on the update grid")
    return sticky_price(s, n, steps - done, params, m, duration)


def sticky_price(
    s: MarketSituation,
    n: int,
    remaining: int,
    params: SolverParams,
    m: DemandModel,
    duration: float = 1.0,
) -> float:
    """First decision of a ``remaining``-step sticky solve for inventory ``n``."""
    if n < 1:
        raise SolverError("nothing to sell")
    if n > params.N:
        raise SolverError("inventory exceeds N")
    if remaining < 1:
        raise SolverError("horizon exhausted")
    prices = situation_candidates(s, params, m)
    pmf, sf = _tables_for(s, prices, m, duration, n)
    _, pol = _kernels.sticky_backward(
        prices, pmf, sf, params.c, params.l * duration, params.delta**duration,
        remaining, n, TIE_TOL,
    )
    return float(prices[pol[remaining, n]])


def solve_with_adjustment_cost(
    s: MarketSituation, params: SolverParams, m: DemandModel
) -> tuple[ValueTable, PolicyTable]:
    """Recursion with the previous price in the state and penalty ``params.z``.

    The previous-price axis is ``(0, *A)``; 0 stands for no earlier price, so
    the first posting is free. Uses the full grid because continuation values
    now depend on the price itself.
    """
    prices = params.grid
    pmf, sf = _tables_for(s, prices, m, 1.0, params.N)
    V, pol = _kernels.adjustment_backward(
        prices, pmf, sf, params.c, params.l, params.delta, float(params.z),
        params.T, params.N, TIE_TOL,
    )
    times = np.arange(params.T + 1, dtype=float)
    a_prev = np.concatenate([[0.0], prices])
    out = np.where(pol >= 0, prices[np.maximum(pol, 0)], np.nan)
    return ValueTable(times, V, a_prev), PolicyTable(times[:-1], out, a_prev)


def simulate_adjustment_path(
    policy: PolicyTable, n0: int, sales: np.ndarray
) -> np.ndarray:
    """Prices posted along one path given per-period demand draws ``sales``."""
    n = n0
    prev = 0.0
    out = []
    for t in range(policy.prices.shape[0]):
        if n <= 0:
            break
        a = policy.at(float(policy.times[t]), n, prev)
        out.append(a)
        n -= min(n, int(sales[t]))
        prev = a
    return np.array(out)


# -- export --------------------------------------------------------------------


def write_tables_csv(value: ValueTable, policy: PolicyTable, path: str | Path) -> None:
    """Long-format CSV with header ``t, n, a_prev, value, price``."""
    V = value.values
    P = policy.prices
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "n", "a_prev", "value", "price"])
        for si, t in enumerate(value.times):
            for n in range(V.shape[1]):
                if value.a_prev is None:
                    price = P[si, n] if si < P.shape[0] else np.nan
                    w.writerow([_num(t), n, "", repr(float(V[si, n])), _num(price)])
                    continue
                for mi, ap in enumerate(value.a_prev):
                    price = P[si, n, mi] if si < P.shape[0] else np.nan
                    w.writerow([_num(t), n, _num(ap), repr(float(V[si, n, mi])), _num(price)])


def _num(x: float) -> str:
    if x is None or (isinstance(x, float) and np.isnan(x)) or (np.ndim(x) == 0 and np.isnan(x)):
        return ""
    x = float(x)
    return repr(round(x, 10))
