"""Upper bounds and exact evaluation of pricing strategies along a known
competitor price path.

Five strategies are compared on one trajectory sampled every ``h = 1/H``
periods:

* ``A`` optimal with full anticipation, price changes every subperiod
* ``B`` optimal with full anticipation, price changes at integer times only
* ``C`` sticky heuristic re-solved every subperiod
* ``D`` sticky heuristic re-solved at integer times
* ``E`` best single price for the whole horizon

All values are expectations computed by backward induction, never by
sampling sales.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .demand import DemandModel, MarketSituation, poisson_table, probability_matrix
from .solver import (
    TIE_TOL,
    PolicyTable,
    SolverError,
    SolverParams,
    ValueTable,
    candidate_indices,
    reduction_is_exact,
)

LEMMA_TOL = 1e-9


@dataclass(frozen=True)
class Trajectory:
    """Competitor prices on the grid ``t = j / H``, ``j = 0 .. T*H - 1``.

    ``prices[j, k]`` is firm ``k``'s price on ``[j/H, (j+1)/H)``; NaN marks a
    firm that is not in the market.
    """

    T: int
    H: int
    prices: np.ndarray

    def __post_init__(self) -> None:
        p = np.atleast_2d(np.asarray(self.prices, dtype=float))
        object.__setattr__(self, "prices", p)
        if self.H < 1 or self.T < 1:
            raise SolverError("T and H must be positive integers")
        if p.shape[0] != self.T * self.H:
            raise SolverError(
                f"grid mismatch: expected {self.T * self.H} rows, got {p.shape[0]}"
            )
        if np.any(p[~np.isnan(p)] <= 0):
            raise SolverError("competitor prices must be positive")

    @property
    def h(self) -> float:
        return 1.0 / self.H

    @property
    def steps(self) -> int:
        return self.T * self.H

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.steps) / self.H

    def situation(self, j: int) -> MarketSituation:
        row = self.prices[j]
        return MarketSituation(j / self.H, tuple(row[~np.isnan(row)]))

    @classmethod
    def constant(cls, prices, T: int, H: int = 1) -> "Trajectory":
        row = np.asarray(prices, dtype=float)
        return cls(T, H, np.tile(row, (T * H, 1)))


@dataclass
class HeldPriceTable:
    """Values when prices may change only at integer times.

    ``candidates[k, :counts[k]]`` are the prices allowed in period ``k``;
    ``values[j, i, n]`` is the value at step ``j`` holding candidate ``i`` of
    period ``j // H`` (at period starts every ``i`` holds the free value).
    """

    H: int
    candidates: np.ndarray
    counts: np.ndarray
    values: np.ndarray
    policy: np.ndarray

    def start_value(self, n: int) -> float:
        return float(self.values[0, 0, n])

    def value(self, j: int, n: int, a_prev: float | None = None) -> float:
        if j % self.H == 0 or j == self.values.shape[0] - 1:
            return float(self.values[j, 0, n])
        k = j // self.H
        row = self.candidates[k, : self.counts[k]]
        hit = np.flatnonzero(np.abs(row - a_prev) <= 1e-9) if a_prev is not None else []
        if len(hit) == 0:
            raise SolverError(f"previous price {a_prev} not tracked in period {k}")
        return float(self.values[j, hit[0], n])


@dataclass
class PriceMap:
    """Heuristic prices ``prices[g, n]`` for update times ``g * step``."""

    step: float
    prices: np.ndarray


@dataclass
class StrategyReport:
    V_A: float
    V_B: float
    V_C: float
    V_D: float
    V_E: float
    fixed_price: float
    lemma: dict[str, bool] = field(default_factory=dict)

    @property
    def ratios(self) -> dict[str, float]:
        return {k: getattr(self, f"V_{k}") / self.V_A for k in "BCDE"}

    @property
    def hard_violation(self) -> bool:
        return not (self.lemma["A>=B"] and self.lemma["B>=D"] and self.lemma["A>=C"])


# -- shared building blocks ----------------------------------------------------


def _check(traj: Trajectory, params: SolverParams) -> None:
    if traj.T != params.T:
        raise SolverError(f"grid mismatch: trajectory covers {traj.T} periods, T={params.T}")


def _exact(traj: Trajectory, params: SolverParams, m: DemandModel, rows: np.ndarray) -> bool:
    Ks = np.unique((~np.isnan(traj.prices[rows])).sum(axis=1))
    return all(reduction_is_exact(m, params, int(K)) for K in Ks)


def _probabilities(m: DemandModel, traj: Trajectory, rows: np.ndarray, prices: np.ndarray) -> np.ndarray:
    """Sale probabilities of ``prices[r, :]`` against trajectory row ``rows[r]``."""
    comp = traj.prices[rows]
    times = rows / traj.H
    sits = None if m.spec.builtin_only else [traj.situation(int(j)) for j in rows]
    return probability_matrix(m, prices, comp, times, situations=sits)


def _distinct_rows(traj: Trajectory, m: DemandModel) -> tuple[np.ndarray, np.ndarray]:
    """Label steps by situation; returns ``(label[j], first step of each label)``."""
    if "time_power" in m.spec.enabled_features or not m.spec.builtin_only:
        idx = np.arange(traj.steps)
        return idx, idx
    key = np.nan_to_num(traj.prices, nan=-1.0)
    _, first, label = np.unique(key, axis=0, return_index=True, return_inverse=True)
    label = label.ravel()
    order = np.argsort(first)
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    return rank[label], first[order]


def _candidates(traj, params, m, rows, full_grid):
    """Candidate price rows (padded with the top grid price) and counts."""
    A = params.grid
    if full_grid or not _exact(traj, params, m, rows):
        return np.tile(A, (rows.size, 1)), np.full(rows.size, A.size, dtype=np.int64)
    idx, counts = candidate_indices(A, traj.prices[rows])
    prices = A[np.where(idx >= 0, idx, A.size - 1)]
    return prices, counts.astype(np.int64)


def _tables(m, traj, rows, prices, duration, N):
    p = _probabilities(m, traj, rows, prices)
    return poisson_table(duration * m.d * p, N)


def _step_tables(params: SolverParams, traj: Trajectory):
    return params.c, params.l * traj.h, params.delta**traj.h


# -- anticipating bounds -------------------------------------------------------


def solve_ofl_h(
    traj: Trajectory, params: SolverParams, m: DemandModel, full_grid: bool = False
) -> tuple[ValueTable, PolicyTable]:
    """Optimal values with known future prices and adjustments every subperiod."""
    _check(traj, params)
    rows = np.arange(traj.steps)
    prices, counts = _candidates(traj, params, m, rows, full_grid)
    pmf, sf = _tables(m, traj, rows, prices, traj.h, params.N)
    c, hold, disc = _step_tables(params, traj)
    V, pol = _kernels.trajectory_backward(prices, counts, pmf, sf, c, hold, disc, params.N, TIE_TOL)
    chosen = np.take_along_axis(prices, np.maximum(pol, 0), axis=1)
    chosen = np.where(pol >= 0, chosen, np.nan)
    times = np.arange(traj.steps + 1) / traj.H
    return ValueTable(times, V), PolicyTable(times[:-1], chosen)


HELD_CANDIDATES = ("period_start", "period_union", "full")


def _period_candidates(traj, params, m, mode):
    A = params.grid
    rows = np.arange(traj.steps)
    if mode not in HELD_CANDIDATES:
        raise SolverError(f"unknown candidate mode {mode!r}")
    if mode == "full" or not _exact(traj, params, m, rows):
        P = np.tile(A, (traj.T, 1))
        return P, np.full(traj.T, A.size, dtype=np.int64)
    if mode == "period_start":
        starts = rows[:: traj.H]
        return _candidates(traj, params, m, starts, False)
    idx, _ = candidate_indices(A, traj.prices)
    sets = []
    for k in range(traj.T):
        blk = idx[k * traj.H : (k + 1) * traj.H]
        sets.append(np.unique(blk[blk >= 0]))
    C = max(len(s) for s in sets)
    out = np.full((traj.T, C), A[-1])
    for k, s in enumerate(sets):
        out[k, : len(s)] = A[s]
    return out, np.array([len(s) for s in sets], dtype=np.int64)


def solve_ofl_1(
    traj: Trajectory, params: SolverParams, m: DemandModel, candidates: str = "period_start"
) -> HeldPriceTable:
    """Optimal values with known future prices, adjustments at integer times.

    ``candidates`` selects the prices allowed in each period:

    * ``"period_start"``: for each competitor at the period start, the
      largest grid price below it (the undercut), a grid price tied with it,
      and the top grid price. This is the undercut acceleration on a grid and
      contains every price the once-per-period heuristic can post.
    * ``"period_union"``: the same set for every subperiod of the period;
      provably optimal over the whole grid when the reduction is exact.
    * ``"full"``: the whole grid.

    The held-price state ranges over the running period's candidates.
    """
    _check(traj, params)
    cands, counts = _period_candidates(traj, params, m, candidates)
    per_step = np.repeat(cands, traj.H, axis=0)
    rows = np.arange(traj.steps)
    pmf, sf = _tables(m, traj, rows, per_step, traj.h, params.N)
    c, hold, disc = _step_tables(params, traj)
    W, pol = _kernels.held_price_backward(
        cands, counts, pmf, sf, c, hold, disc, params.N, traj.H, TIE_TOL
    )
    chosen = np.where(pol >= 0, np.take_along_axis(cands, np.maximum(pol, 0), axis=1), np.nan)
    return HeldPriceTable(traj.H, cands, counts, W, chosen)


# -- non-anticipating heuristics -------------------------------------------------


def heuristic_prices_on_grid(
    traj: Trajectory,
    params: SolverParams,
    m: DemandModel,
    update: str = "1",
) -> PriceMap:
    """Sticky-solver prices at each update time for the situation seen then.

    ``update="1"`` re-solves at integer times with one-period conditional
    sales; ``update="h"`` re-solves every subperiod with subperiod sales.
    """
    _check(traj, params)
    if update == "1":
        stride, duration = traj.H, 1.0
    elif update == "h":
        stride, duration = 1, traj.h
    else:
        raise SolverError("update must be '1' or 'h'")
    grid_rows = np.arange(0, traj.steps, stride)
    G = grid_rows.size
    label, first = _distinct_rows(traj, m)
    # relabel on the update grid
    glabel = label[grid_rows]
    uniq, gfirst, ginv = np.unique(glabel, return_index=True, return_inverse=True)
    order = np.argsort(gfirst)
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    group = rank[ginv.ravel()].astype(np.int64)
    firsts = gfirst[order].astype(np.int64)
    sit_rows = grid_rows[firsts]
    prices, counts = _candidates(traj, params, m, sit_rows, False)
    pmf, sf = _tables(m, traj, sit_rows, prices, duration, params.N)
    out = _kernels.sticky_groups(
        group, firsts, prices, pmf, sf, params.c, params.l * duration,
        params.delta**duration, params.N, TIE_TOL,
    )
    chosen = np.take_along_axis(prices[group], np.maximum(out, 0), axis=1)
    chosen = np.where(out >= 0, chosen, np.nan)
    return PriceMap(float(stride) / traj.H, chosen)


def _expand(price_map: PriceMap, traj: Trajectory) -> np.ndarray:
    stride = int(round(price_map.step * traj.H))
    if stride < 1 or price_map.prices.shape[0] * stride != traj.steps:
        raise SolverError("price map does not match the trajectory grid")
    return np.repeat(price_map.prices, stride, axis=0)


def evaluate_nah(
    traj: Trajectory, params: SolverParams, m: DemandModel, price_map: PriceMap
) -> ValueTable:
    """Exact expected profit of posting ``price_map`` along the trajectory.

    Between updates the price of the last update time is used for the current
    inventory level, under the true subperiod sales distribution.
    """
    _check(traj, params)
    price = _expand(price_map, traj)
    if np.isnan(price[:, 1:]).any():
        raise SolverError("missing price entry")
    price = np.where(np.isnan(price), price[:, [1]], price)
    rows = np.arange(traj.steps)
    pmf, sf = _tables(m, traj, rows, price, traj.h, params.N)
    c, hold, disc = _step_tables(params, traj)
    V = _kernels.trajectory_evaluate(price, pmf, sf, c, hold, disc, params.N)
    return ValueTable(np.arange(traj.steps + 1) / traj.H, V)


def evaluate_policy(
    traj: Trajectory, params: SolverParams, m: DemandModel, policy: PolicyTable
) -> ValueTable:
    """Evaluate a subperiod policy table (for instance the anticipating one)."""
    return evaluate_nah(traj, params, m, PriceMap(traj.h, policy.prices))


def fixed_price_values(
    traj: Trajectory, params: SolverParams, m: DemandModel, prices=None
) -> tuple[np.ndarray, np.ndarray]:
    """Start values with ``N`` units for each fixed price (default: all of ``A``)."""
    _check(traj, params)
    A = params.grid if prices is None else np.asarray(prices, dtype=float)
    label, first = _distinct_rows(traj, m)
    return A, _fixed_values(traj, params, m, A, A, label, first)


def _fixed_values(traj, params, m, price, demand_price, label, first):
    P = _probabilities(m, traj, first, np.broadcast_to(demand_price, (first.size, demand_price.size)))
    c, hold, disc = _step_tables(params, traj)
    return _kernels.fixed_price_start_values(
        price, np.ascontiguousarray(P), label.astype(np.int64), traj.h * m.d, c, hold, disc, params.N
    )


def _demand_falls_with_price(m: DemandModel) -> bool:
    if not m.spec.builtin_only:
        return False
    coef = dict(zip(m.spec.enabled_features, m.beta))
    return all(coef.get(f, 0.0) <= 0 for f in ("price_rank", "price_gap", "average_price"))


def best_fixed_price(
    traj: Trajectory, params: SolverParams, m: DemandModel, block: int = 50
) -> tuple[float, float]:
    """Largest price maximizing the start value when it is never changed.

    When demand cannot rise with the price, a block of consecutive grid prices
    is bounded by pairing its top price with its bottom price's demand; blocks
    whose bound falls short of the best value found are skipped.
    """
    _check(traj, params)
    A = params.grid
    label, first = _distinct_rows(traj, m)
    if not _demand_falls_with_price(m):
        v = _fixed_values(traj, params, m, A, A, label, first)
        j = np.flatnonzero(v >= v.max() - TIE_TOL)[-1]
        return float(A[j]), float(v[j])
    starts = np.arange(0, A.size, block)
    ends = np.minimum(starts + block, A.size) - 1
    bounds = _fixed_values(traj, params, m, A[ends], A[starts], label, first)
    values = np.full(A.size, -np.inf)
    best = -np.inf
    for b in np.argsort(-bounds, kind="stable"):
        if bounds[b] < best - TIE_TOL:
            break
        idx = np.arange(starts[b], ends[b] + 1)
        v = _fixed_values(traj, params, m, A[idx], A[idx], label, first)
        values[idx] = v
        best = max(best, v.max())
    j = np.flatnonzero(values >= best - TIE_TOL)[-1]
    return float(A[j]), float(values[j])


# -- comparison -------------------------------------------------------------------


def compare_strategies(
    traj: Trajectory, params: SolverParams, m: DemandModel
) -> StrategyReport:
    N = params.N
    VA, _ = solve_ofl_h(traj, params, m)
    B = solve_ofl_1(traj, params, m)
    VC = evaluate_nah(traj, params, m, heuristic_prices_on_grid(traj, params, m, "h"))
    VD = evaluate_nah(traj, params, m, heuristic_prices_on_grid(traj, params, m, "1"))
    price, VE = best_fixed_price(traj, params, m)
    a, b = VA.values[0, N], B.start_value(N)
    c, d = VC.values[0, N], VD.values[0, N]
    lemma = {
        "A>=B": a >= b - LEMMA_TOL,
        "B>=D": b >= d - LEMMA_TOL,
        "A>=C": a >= c - LEMMA_TOL,
        "C>=D": c >= d - LEMMA_TOL,
        "A>=E": a >= VE - LEMMA_TOL,
    }
    return StrategyReport(a, b, c, d, VE, price, lemma)


@dataclass
class Table1Row:
    scenario_family: str
    pi: float
    mean_V_A: float
    ratio_B: float
    ratio_C: float
    ratio_D: float
    ratio_E: float
    n_scenarios: int
    lemma_violations: int
    c_below_d: int

    @classmethod
    def from_reports(cls, family: str, pi: float, reports: list[StrategyReport]) -> "Table1Row":
        VA = np.array([r.V_A for r in reports])

        def ratio(k: str) -> float:
            # average of per-scenario ratios
            return float(np.mean([getattr(r, f"V_{k}") / r.V_A for r in reports]))

        return cls(
            family, pi, float(VA.mean()), ratio("B"), ratio("C"), ratio("D"), ratio("E"),
            len(reports),
            int(sum(r.hard_violation for r in reports)),
            int(sum(not r.lemma["C>=D"] for r in reports)),
        )


TABLE1_COLUMNS = (
    "scenario_family", "pi", "mean_V_A", "ratio_B", "ratio_C", "ratio_D", "ratio_E",
    "n_scenarios", "lemma_violations", "c_below_d",
)


def write_table1_csv(rows: list[Table1Row], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TABLE1_COLUMNS)
        for r in rows:
            w.writerow([
                r.scenario_family, repr(r.pi), f"{r.mean_V_A:.6f}", f"{r.ratio_B:.6f}",
                f"{r.ratio_C:.6f}", f"{r.ratio_D:.6f}", f"{r.ratio_E:.6f}",
                r.n_scenarios, r.lemma_violations, r.c_below_d,
            ])
