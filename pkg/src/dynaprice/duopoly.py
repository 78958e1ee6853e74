"""Two-firm pricing against a competitor that answers each of our prices.

We post at integer times. A fraction ``reaction`` of each period later the
competitor moves to ``F(a, p)``, so a period splits into a phase at the old
competitor price and a phase at the reacted one. Sales in both phases are
Poisson, so the period total is Poisson with the summed mean.

Three policies are compared:

* the optimal response, which knows ``F`` and the delay,
* a sticky heuristic that assumes the competitor price never moves,
* the same heuristic fed the true period sales distribution.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .demand import DemandModel, example_model, poisson_table, probability_matrix
from .solver import TIE_TOL, SolverError, SolverParams

REACTION_GRID = (0.1, 0.3, 0.5, 0.55, 0.7, 0.9)
BENCHMARK_REACTION = 0.5


@dataclass(frozen=True)
class ResponseFunction:
    """Competitor reply ``F(a, p)``; the default undercuts by ``eps`` down to ``floor``."""

    eps: float = 1.0
    floor: float = 3.0
    rule: Callable[[float, float], float] | None = None

    def __call__(self, a: float, p: float) -> float:
        if self.rule is not None:
            return max(float(self.rule(a, p)), self.floor)
        return max(a - self.eps, self.floor)

    def successor_indices(self, A: np.ndarray) -> np.ndarray:
        """``succ[p, a]``: grid index of the competitor price after the reply.

        Replies are moved up to the nearest grid point (never below the floor).
        """
        A = np.asarray(A, dtype=float)
        M = A.size
        lowest = int(np.searchsorted(A, self.floor - 1e-9))
        succ = np.empty((M, M), dtype=np.int64)
        for ip, p in enumerate(A):
            for ia, a in enumerate(A):
                j = int(np.searchsorted(A, self(a, p) - 1e-9))
                succ[ip, ia] = min(max(j, lowest), M - 1)
        return succ


@dataclass(frozen=True)
class DuopolyParams:
    reaction: float
    params: SolverParams
    d: float = 10.0

    def __post_init__(self) -> None:
        if not 0 < self.reaction < 1:
            raise SolverError("reaction delay must lie strictly between 0 and 1")
        if not self.d > 0:
            raise SolverError("d must be positive")

    def with_reaction(self, reaction: float) -> "DuopolyParams":
        return DuopolyParams(reaction, self.params, self.d)


def example_params(reaction: float = 0.5, N: int = 10) -> DuopolyParams:
    """The undercutting duopoly: ``A = {1..120}``, ``c = 3``, ``T = 100``."""
    params = SolverParams(T=100, N=N, c=3.0, l=0.01, delta=0.9995, A=tuple(range(1, 121)))
    return DuopolyParams(reaction, params, 10.0)


def example_response() -> ResponseFunction:
    return ResponseFunction(eps=1.0, floor=3.0)


def sale_probabilities(dp: DuopolyParams, m: DemandModel) -> np.ndarray:
    """``P[p, a]``: one-period sale probability at our price ``a`` against ``p``."""
    A = dp.params.grid
    return probability_matrix(m, A, A[:, None], np.zeros(A.size))


# -- conditional sales distributions -----------------------------------------


@dataclass(frozen=True)
class Conditional:
    """Period sales distribution given the competitor price at the period start."""

    mean: np.ndarray  # [p, a]
    label: str

    def tables(self, cap: int) -> tuple[np.ndarray, np.ndarray]:
        return poisson_table(self.mean, cap)


def build_conditional_naive(dp: DuopolyParams, m: DemandModel) -> Conditional:
    """Sales as if the competitor price stayed put for the whole period."""
    return Conditional(dp.d * sale_probabilities(dp, m), "naive")


def phase_means(F: ResponseFunction, dp: DuopolyParams, m: DemandModel) -> tuple[np.ndarray, np.ndarray]:
    P = sale_probabilities(dp, m)
    succ = F.successor_indices(dp.params.grid)
    reacted = np.take_along_axis(P.T, succ.T, axis=1).T  # P[succ[p, a], a]
    return dp.reaction * dp.d * P, (1 - dp.reaction) * dp.d * reacted


def build_conditional_accurate(F: ResponseFunction, dp: DuopolyParams, m: DemandModel) -> Conditional:
    """Sales over a period that contains the competitor's reply."""
    mu1, mu2 = phase_means(F, dp, m)
    return Conditional(mu1 + mu2, "accurate")


def convolved_pmf(F: ResponseFunction, dp: DuopolyParams, m: DemandModel, cap: int) -> np.ndarray:
    """Explicit convolution of the two phase distributions, ``pmf[p, a, i]``, ``i <= cap``."""
    mu1, mu2 = phase_means(F, dp, m)
    p1, _ = poisson_table(mu1, cap)
    p2, _ = poisson_table(mu2, cap)
    out = np.zeros_like(p1)
    for i in range(cap + 1):
        for i1 in range(i + 1):
            out[..., i] += p1[..., i1] * p2[..., i - i1]
    return out


# -- recursions ----------------------------------------------------------------


@dataclass
class DuopolyTables:
    """``values[t, n, p]`` and posted grid indices ``policy[t, n, p]`` (-1 at n = 0)."""

    prices: np.ndarray
    values: np.ndarray
    policy: np.ndarray

    def value(self, n: int, p: float, t: int = 0) -> float:
        return float(self.values[t, n, _grid_index(self.prices, p)])

    def price(self, n: int, p: float, t: int = 0) -> float:
        return float(self.prices[self.policy[t, n, _grid_index(self.prices, p)]])


def _grid_index(A: np.ndarray, p: float) -> int:
    i = int(np.argmin(np.abs(A - p)))
    if abs(A[i] - p) > 1e-9:
        raise SolverError(f"price {p} not in the grid")
    return i


def solve_optimal_response(F: ResponseFunction, dp: DuopolyParams, m: DemandModel) -> DuopolyTables:
    prm = dp.params
    A = prm.grid
    pmf, sf = build_conditional_accurate(F, dp, m).tables(prm.N)
    succ = F.successor_indices(A)
    dummy = np.zeros((prm.T, prm.N + 1, A.size), dtype=np.int64)
    V, pol = _kernels.duopoly_backward(
        A, pmf, sf, succ, prm.c, prm.l, prm.delta, prm.T, prm.N, TIE_TOL, True, dummy
    )
    return DuopolyTables(A, V, pol)


def solve_duopoly_heuristic(cond: Conditional, dp: DuopolyParams, m: DemandModel) -> DuopolyTables:
    """Sticky recursion: the competitor price in the state never changes."""
    prm = dp.params
    A = prm.grid
    pmf, sf = cond.tables(prm.N)
    V, pol = _kernels.duopoly_sticky(A, pmf, sf, prm.c, prm.l, prm.delta, prm.T, prm.N, TIE_TOL)
    return DuopolyTables(A, V, pol)


def evaluate_duopoly_policy(
    policy: np.ndarray, F: ResponseFunction, dp: DuopolyParams, m: DemandModel
) -> DuopolyTables:
    """Expected profit of a fixed policy under the true two-phase dynamics."""
    prm = dp.params
    A = prm.grid
    policy = np.asarray(policy, dtype=np.int64)
    if policy.shape != (prm.T, prm.N + 1, A.size):
        raise SolverError(f"policy shape {policy.shape} does not match (T, N+1, |A|)")
    live = policy[:, 1:, :]
    if np.any(live < 0) or np.any(live >= A.size):
        raise SolverError("policy has missing entries")
    pmf, sf = build_conditional_accurate(F, dp, m).tables(prm.N)
    succ = F.successor_indices(A)
    V, pol = _kernels.duopoly_backward(
        A, pmf, sf, succ, prm.c, prm.l, prm.delta, prm.T, prm.N, TIE_TOL, False, policy
    )
    return DuopolyTables(A, V, pol)


def literal_values(
    F: ResponseFunction, dp: DuopolyParams, m: DemandModel, policy: np.ndarray | None = None
) -> np.ndarray:
    """The recursion with its explicit double sum over phase sales.

    Slow; kept to check the single-Poisson shortcut on small instances.
    """
    prm = dp.params
    A = prm.grid
    M, N = A.size, prm.N
    mu1, mu2 = phase_means(F, dp, m)
    p1, s1 = poisson_table(mu1, N)
    p2, s2 = poisson_table(mu2, N)
    succ = F.successor_indices(A)
    V = np.zeros((prm.T + 1, N + 1, M))
    for t in range(prm.T - 1, -1, -1):
        for p in range(M):
            for n in range(1, N + 1):
                best = -np.inf
                actions = range(M) if policy is None else (int(policy[t, n, p]),)
                for a in actions:
                    nxt = succ[p, a]
                    margin = A[a] - prm.c
                    # first phase sells out on its own
                    q = s1[p, a, n] * (margin * n + prm.delta * V[t + 1, 0, nxt])
                    for i1 in range(n):
                        left = n - i1
                        inner = s2[p, a, left] * (margin * n + prm.delta * V[t + 1, 0, nxt])
                        for i2 in range(left):
                            inner += p2[p, a, i2] * (
                                margin * (i1 + i2) + prm.delta * V[t + 1, left - i2, nxt]
                            )
                        q += p1[p, a, i1] * inner
                    q -= n * prm.l
                    best = max(best, q)
                V[t, n, p] = best
    return V


# -- simulation ------------------------------------------------------------------


@dataclass
class DuopolyPath:
    """Event rows ``(time, our price, competitor price, inventory after)``."""

    times: np.ndarray
    ours: np.ndarray
    theirs: np.ndarray
    inventory: np.ndarray


def simulate_duopoly_path(
    policy: DuopolyTables,
    F: ResponseFunction,
    dp: DuopolyParams,
    m: DemandModel,
    seed: int,
    T: int | None = None,
    n0: int | None = None,
    p0: float = 50.0,
) -> DuopolyPath:
    """Sample one season: we post at integer times, the competitor replies ``reaction`` later."""
    prm = dp.params
    A = prm.grid
    T = prm.T if T is None else int(T)
    n = prm.N if n0 is None else int(n0)
    if T > policy.policy.shape[0]:
        raise SolverError("simulation horizon exceeds the policy horizon")
    rng = np.random.default_rng(seed)
    P = sale_probabilities(dp, m)
    succ = F.successor_indices(A)
    ip = _grid_index(A, p0)
    rows = []
    for t in range(T):
        if n <= 0:
            break
        ia = int(policy.policy[t, n, ip])
        n -= min(n, int(rng.poisson(dp.reaction * dp.d * P[ip, ia])))
        rows.append((t, A[ia], A[ip], n))
        ip = int(succ[ip, ia])
        n -= min(n, int(rng.poisson((1 - dp.reaction) * dp.d * P[ip, ia])))
        rows.append((t + dp.reaction, A[ia], A[ip], n))
    arr = np.array(rows, dtype=float).reshape(-1, 4)
    return DuopolyPath(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3].astype(int))


def price_cycles(prices: np.ndarray) -> list[np.ndarray]:
    """Split a price sequence at each upward reset."""
    prices = np.asarray(prices, dtype=float)
    if prices.size == 0:
        return []
    cuts = np.flatnonzero(np.diff(prices) > 0) + 1
    return np.split(prices, cuts)


# -- reaction-time study ---------------------------------------------------------


@dataclass
class StrategyValues:
    optimal: DuopolyTables
    naive: DuopolyTables
    accurate: DuopolyTables


def strategy_values(F: ResponseFunction, dp: DuopolyParams, m: DemandModel) -> StrategyValues:
    """Optimal values and the true values of both heuristic policies."""
    opt = solve_optimal_response(F, dp, m)
    naive = solve_duopoly_heuristic(build_conditional_naive(dp, m), dp, m)
    acc = solve_duopoly_heuristic(build_conditional_accurate(F, dp, m), dp, m)
    return StrategyValues(
        opt,
        evaluate_duopoly_policy(naive.policy, F, dp, m),
        evaluate_duopoly_policy(acc.policy, F, dp, m),
    )





def comparison_table(
    F: ResponseFunction,
    dp: DuopolyParams,
    m: DemandModel,
    reactions: Sequence[float] = (0.1, 0.9),
    ns: Sequence[int] = (1, 2, 3, 5, 7, 10),
    p: float = 50.0,
) -> list[dict]:
    """Optimal value and heuristic-to-optimal ratios per reaction delay and stock."""
    rows = []
    for r in reactions:
        sv = strategy_values(F, dp.with_reaction(r), m)
        for n in ns:
            v = sv.optimal.value(n, p)
            rows.append(dict(
                reaction=r, n=n, optimal_value=v,
                naive_ratio=sv.naive.value(n, p) / v,
                accurate_ratio=sv.accurate.value(n, p) / v,
            ))
    return rows


def reaction_time_study(
    F: ResponseFunction,
    dp: DuopolyParams,
    m: DemandModel,
    reactions: Sequence[float] = REACTION_GRID,
    ns: Sequence[int] = (1, 5, 10),
    p: float = 50.0,
    benchmark: float = BENCHMARK_REACTION,
) -> list[dict]:
    """Values of all three strategies relative to the optimum at ``benchmark``."""
    for r in reactions:
        if not 0 < r < 1:
            raise SolverError("reaction delays must lie strictly between 0 and 1")
    base = solve_optimal_response(F, dp.with_reaction(benchmark), m)
    per = {r: strategy_values(F, dp.with_reaction(r), m) for r in reactions}
    rows = []
    for name in ("optimal", "naive", "accurate"):
        for n in ns:
            ref = base.value(n, p)
            for r in reactions:
                if name == "optimal" and r == benchmark:
                    ratio = 1.0
                else:
                    ratio = getattr(per[r], name).value(n, p) / ref
                rows.append(dict(strategy=name, n=n, reaction=r, ratio=ratio))
    return rows


def write_table2_csv(rows: list[dict], path: str | Path) -> None:
    """One row per stock level; per delay the optimal value and both ratios."""
    reactions = sorted({r["reaction"] for r in rows})
    ns = sorted({r["n"] for r in rows})
    cell = {(r["reaction"], r["n"]): r for r in rows}
    header = ["n"]
    for d in reactions:
        header += [f"optimal_{d:g}", f"naive_ratio_{d:g}", f"accurate_ratio_{d:g}"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for n in ns:
            line = [n]
            for d in reactions:
                r = cell[(d, n)]
                line += [_cell(r["optimal_value"]), _cell(r["naive_ratio"]), _cell(r["accurate_ratio"])]
            w.writerow(line)


def write_table3_csv(rows: list[dict], path: str | Path) -> None:
    """One row per (strategy, stock level), one column per delay."""
    reactions = sorted({r["reaction"] for r in rows})
    keys = list(dict.fromkeys((r["strategy"], r["n"]) for r in rows))
    cell = {(r["strategy"], r["n"], r["reaction"]): r["ratio"] for r in rows}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["strategy", "n"] + [f"{d:g}" for d in reactions])
        for name, n in keys:
            w.writerow([name, n] + [_cell(cell[(name, n, d)]) for d in reactions])


def write_policy_csv(tables: dict[str, DuopolyTables], path: str | Path, t: int = 0) -> None:
    """Long format ``strategy, n, competitor_price, price, value`` at time ``t``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["strategy", "n", "competitor_price", "price", "value"])
        for name, tab in tables.items():
            for n in range(1, tab.values.shape[1]):
                for ip, p in enumerate(tab.prices):
                    w.writerow([name, n, _cell(p), _cell(tab.prices[tab.policy[t, n, ip]]),
                                _cell(tab.values[t, n, ip])])


def write_paths_csv(paths: dict[str, DuopolyPath], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["strategy", "t", "our_price", "competitor_price", "inventory"])
        for name, p in paths.items():
            for row in zip(p.times, p.ours, p.theirs, p.inventory):
                w.writerow([name, _cell(row[0]), _cell(row[1]), _cell(row[2]), int(row[3])])


def _cell(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(round(float(x), 10))
    return str(x)


def default_setup(reaction: float = 0.5) -> tuple[ResponseFunction, DuopolyParams, DemandModel]:
    return example_response(), example_params(reaction), example_model(10.0)
