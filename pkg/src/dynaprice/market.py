"""Stochastic competitor price paths and simulated selling seasons.

Competitor prices follow capped random jumps on the subperiod grid. Our firm
(or every firm, in self-play) posts sticky-solver prices and sells Poisson
demand until the horizon ends or stock runs out.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .demand import DemandModel, MarketSituation
from .oracle import Trajectory
from .solver import SolverParams, sticky_price

FAMILIES = ("no_trend", "positive_trend", "negative_trend", "strategic_undercutter", "self_play")

DEFAULT_JUMPS = {
    "no_trend": (-20.0, 20.0),
    "positive_trend": (-15.0, 25.0),
    "negative_trend": (-25.0, 15.0),
    "strategic_undercutter": (-20.0, 20.0),
    "self_play": (0.0, 0.0),
}

FAMILY_ALIASES = {"i": "no_trend", "ii": "positive_trend", "iii": "negative_trend", "iv": "strategic_undercutter"}


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    family: str = "no_trend"
    K: int = 10
    T: int = 100
    H: int = 10
    pi: float = 0.1
    jumps: tuple[float, float] | None = None
    p0: tuple[float, ...] | None = None
    p0_range: tuple[float, float] = (5.0, 15.0)
    c: float = 3.0
    exit_prob: float = 0.0
    entry_prob: float = 0.0
    entry_range: tuple[float, float] = (5.0, 15.0)
    undercut_eps: float = 0.2
    seed: int = 0
    stream: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        fam = FAMILY_ALIASES.get(self.family, self.family)
        object.__setattr__(self, "family", fam)
        if fam not in FAMILIES:
            raise ScenarioError(f"unknown family {self.family!r}")
        if not 0 < self.pi <= 1:
            raise ScenarioError("pi must lie in (0, 1]")
        if self.K < 0 or self.T < 1 or self.H < 1:
            raise ScenarioError("K >= 0, T >= 1 and H >= 1 required")
        lo, hi = self.bounds
        if lo > hi:
            raise ScenarioError("jump bounds must satisfy lo <= hi")
        if self.p0 is not None and len(self.p0) != self.K:
            raise ScenarioError("p0 must list one price per competitor")
        for q in (self.exit_prob, self.entry_prob):
            if not 0 <= q <= 1:
                raise ScenarioError("entry/exit probabilities must lie in [0, 1]")
        if self.undercut_eps <= 0:
            raise ScenarioError("undercut_eps must be positive")

    @property
    def bounds(self) -> tuple[float, float]:
        return tuple(self.jumps) if self.jumps is not None else DEFAULT_JUMPS[self.family]

    @property
    def h(self) -> float:
        return 1.0 / self.H

    @property
    def floor(self) -> float:
        return self.c + 0.01

    def with_stream(self, *key: int) -> "ScenarioConfig":
        from dataclasses import replace

        return replace(self, stream=tuple(key))


def streams(cfg: ScenarioConfig, count: int) -> list[np.random.Generator]:
    """Independent generators for one scenario: one per firm plus extras."""
    ss = np.random.SeedSequence(cfg.seed, spawn_key=cfg.stream)
    return [np.random.default_rng(s) for s in ss.spawn(count)]


def _firm_path(cfg: ScenarioConfig, rng: np.random.Generator, p0: float | None, steps: int) -> np.ndarray:
    start = rng.uniform(*cfg.p0_range) if p0 is None else p0
    lo, hi = cfg.bounds
    adjust = rng.random(steps) < cfg.pi
    jumps = rng.uniform(lo, hi, steps) * cfg.h / cfg.pi / cfg.T
    return _kernels.floor_walk(np.array([start]), adjust[:, None], jumps[:, None], cfg.floor)[:, 0]


def price_paths(cfg: ScenarioConfig) -> np.ndarray:
    """Competitor prices at ``t = 0, h, ..., T`` (``T*H + 1`` rows, NaN if absent)."""
    S = cfg.T * cfg.H
    rngs = streams(cfg, cfg.K + 1)
    cols = [
        _firm_path(cfg, rngs[k], None if cfg.p0 is None else cfg.p0[k], S + 1)
        for k in range(cfg.K)
    ]
    paths = np.column_stack(cols) if cols else np.empty((S + 1, 0))
    if cfg.exit_prob > 0 or cfg.entry_prob > 0:
        paths = _with_entry_exit(cfg, paths, rngs[-1])
    return paths


def apply_entry_exit(row: np.ndarray, cfg: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    """One subperiod of exits (price becomes NaN) and at most one entry."""
    out = row.copy()
    present = ~np.isnan(out)
    leave = rng.random(out.size) < cfg.exit_prob
    out[present & leave] = np.nan
    if rng.random() < cfg.entry_prob:
        price = rng.uniform(*cfg.entry_range)
        free = np.flatnonzero(np.isnan(out) & ~present)
        if free.size == 0:
            free = np.flatnonzero(np.isnan(out))
        if free.size:
            out[free[0]] = price
        else:
            out = np.append(out, price)
    return out


def _with_entry_exit(cfg: ScenarioConfig, paths: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Overlay exits and entries; entrants then move like everyone else."""
    S1, K = paths.shape
    lo, hi = cfg.bounds
    rows = [paths[0].copy()]
    for j in range(1, S1):
        prev = rows[-1]
        width = max(prev.size, K)
        cur = np.full(width, np.nan)
        # incumbents keep their own generated increments
        base = paths[j] - paths[j - 1]
        for k in range(width):
            if np.isnan(prev[k]):
                continue
            step = base[k] if k < K else (
                rng.uniform(lo, hi) * cfg.h / cfg.pi / cfg.T if rng.random() < cfg.pi else 0.0
            )
            cur[k] = max(cfg.floor, prev[k] + step)
        rows.append(apply_entry_exit(cur, cfg, rng))
    width = max(r.size for r in rows)
    out = np.full((S1, width), np.nan)
    for j, r in enumerate(rows):
        out[j, : r.size] = r
    return out


def gen_trajectories(cfg: ScenarioConfig) -> Trajectory:
    """Exogenous competitor trajectory on ``t = 0, h, ..., T - h``."""
    if cfg.family in ("strategic_undercutter", "self_play"):
        raise ScenarioError(f"family {cfg.family!r} depends on our prices; simulate it instead")
    paths = price_paths(cfg)
    return Trajectory(cfg.T, cfg.H, paths[:-1])


def strategic_undercutter_step(our_price: float, eps: float, c: float) -> float:
    if eps <= 0:
        raise ScenarioError("eps must be positive")
    return max(our_price - eps, c + 0.01)


# -- simulated seasons ------------------------------------------------------------


@dataclass
class MarketRun:
    """Per-subperiod record of one season.

    Column 0 of ``prices`` is our firm. Firms without managed inventory (the
    exogenous competitors) have NaN inventory, sales and profit.
    """

    run_id: int
    H: int
    prices: np.ndarray
    inventory: np.ndarray
    sold: np.ndarray
    profit: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.prices.shape[0]) / self.H

    @property
    def our_prices(self) -> np.ndarray:
        return self.prices[:, 0]

    @property
    def G0(self) -> float:
        return float(self.profit[0])


def realized_profit(
    prices: np.ndarray, inventory: np.ndarray, sold: np.ndarray, H: int, c: float, l: float, delta: float
) -> float:
    """Discounted profit on the subperiod grid: each step earns margin on units
    sold, pays ``l/H`` per unit held, and is discounted by ``delta**(j/H)``."""
    total = 0.0
    for j in range(sold.size):
        x = inventory[j]
        # no posted price: the season ended before this step
        if x <= 0 or np.isnan(prices[j]):
            continue
        total += delta ** (j / H) * ((prices[j] - c) * sold[j] - l / H * x)
    return float(total)


def _situation(row: np.ndarray, t: float) -> MarketSituation:
    return MarketSituation(t, tuple(row[~np.isnan(row)]))


def simulate_heuristic_run(
    cfg: ScenarioConfig, params: SolverParams, m: DemandModel, run_id: int = 0
) -> MarketRun:
    """Our firm re-solves at each integer time against the observed prices and
    sells Poisson demand each subperiod; the strategic family's first
    competitor undercuts our current price when it gets to move."""
    H, S = cfg.H, cfg.T * cfg.H
    if params.T != cfg.T:
        raise ScenarioError("scenario and solver horizons differ")
    strategic = cfg.family == "strategic_undercutter"
    if strategic:
        base = ScenarioConfig(
            "no_trend", cfg.K, cfg.T, cfg.H, cfg.pi, cfg.jumps, cfg.p0, cfg.p0_range, cfg.c,
            cfg.exit_prob, cfg.entry_prob, cfg.entry_range, cfg.undercut_eps, cfg.seed, cfg.stream,
        )
        comp = price_paths(base)[:S]
    else:
        comp = price_paths(cfg)[:S]
    sales_rng = streams(cfg, cfg.K + 2)[-1]
    undercut_rng = streams(cfg.with_stream(*cfg.stream, 1), 1)[0]
    comp = comp.copy()
    n = params.N
    ours = np.full(S, np.nan)
    inv = np.zeros(S + 1)
    sold = np.zeros(S)
    inv[0] = n
    a = np.nan
    for j in range(S):
        t = j / H
        if strategic and j > 0 and cfg.K > 0:
            prev = comp[j - 1, 0]
            move = undercut_rng.random() < cfg.pi and not np.isnan(ours[j - 1])
            comp[j, 0] = strategic_undercutter_step(ours[j - 1], cfg.undercut_eps, cfg.c) if move else prev
        if n > 0:
            s = _situation(comp[j], t)
            if j % H == 0:
                a = sticky_price(s, n, cfg.T - j // H, params, m)
            ours[j] = a
            mu = cfg.h * m.d * m.probability(a, s)
            k = min(n, int(sales_rng.poisson(mu)))
            sold[j] = k
            n -= k
        inv[j + 1] = n
    F = comp.shape[1] + 1
    prices = np.column_stack([ours, comp])
    inventory = np.full((S + 1, F), np.nan)
    inventory[:, 0] = inv
    sales = np.full((S, F), np.nan)
    sales[:, 0] = sold
    profit = np.full(F, np.nan)
    profit[0] = realized_profit(ours, inv, sold, H, params.c, params.l, params.delta)
    return MarketRun(run_id, H, prices, inventory, sales, profit, {"family": cfg.family})


def self_play(
    cfg: ScenarioConfig, params: SolverParams, m: DemandModel, run_id: int = 0
) -> MarketRun:
    """Every firm runs the sticky heuristic against the others.

    Each firm moves with probability ``cfg.pi`` per subperiod, plans with the
    demand intensity divided by the number of firms, and leaves the market
    when sold out. The season stops early once fewer than two firms remain.
    """
    K, H, S = cfg.K, cfg.H, cfg.T * cfg.H
    if K < 2:
        raise ScenarioError("self-play needs at least two firms")
    if params.T != cfg.T:
        raise ScenarioError("scenario and solver horizons differ")
    rngs = streams(cfg, K + 1)
    planning = m.with_scale(m.d / K)
    p0 = np.full(K, 20.0) if cfg.p0 is None else np.asarray(cfg.p0, dtype=float)
    price = p0.copy()
    stock = np.full(K, params.N, dtype=np.int64)
    prices = np.full((S, K), np.nan)
    inventory = np.full((S + 1, K), np.nan)
    sold = np.zeros((S, K))
    inventory[0] = stock
    for j in range(S):
        t = j / H
        active = stock > 0
        if active.sum() < 2:
            inventory[j + 1 :] = stock
            break
        remaining = int(np.ceil(cfg.T - t - 1e-9))
        for k in range(K):
            if active[k] and rngs[k].random() < cfg.pi:
                others = price[active & (np.arange(K) != k)]
                s = MarketSituation(t, tuple(others))
                price[k] = sticky_price(s, int(stock[k]), remaining, params, planning)
        for k in range(K):
            if not active[k]:
                continue
            prices[j, k] = price[k]
            others = price[active & (np.arange(K) != k)]
            mu = cfg.h * m.d * m.probability(price[k], MarketSituation(t, tuple(others)))
            q = min(int(stock[k]), int(rngs[K].poisson(mu)))
            sold[j, k] = q
        stock = stock - sold[j].astype(np.int64)
        inventory[j + 1] = stock
    profit = np.array([
        realized_profit(prices[:, k], inventory[:, k], sold[:, k], H, params.c, params.l, params.delta)
        for k in range(K)
    ])
    return MarketRun(run_id, H, prices, inventory, sold, profit, {"family": "self_play"})


def write_runs_csv(runs: list[MarketRun], path: str | Path) -> None:
    """Long format: ``run_id, t, firm_id, price, inventory, sold_units``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run_id", "t", "firm_id", "price", "inventory", "sold_units"])
        for run in runs:
            for j, t in enumerate(run.times):
                for f in range(run.prices.shape[1]):
                    p = run.prices[j, f]
                    if np.isnan(p):
                        continue
                    inv = run.inventory[j, f]
                    q = run.sold[j, f]
                    w.writerow([
                        run.run_id, repr(round(float(t), 10)), f, repr(float(p)),
                        "" if np.isnan(inv) else int(inv), "" if np.isnan(q) else int(q),
                    ])
