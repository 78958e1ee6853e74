import csv
import time

import numpy as np
import pytest

from dynaprice.demand import MarketSituation, build_features, example_model, price_grid
from dynaprice.demand import FeatureSpec
from dynaprice.market import (
    ScenarioConfig,
    ScenarioError,
    apply_entry_exit,
    gen_trajectories,
    price_paths,
    self_play,
    simulate_heuristic_run,
    strategic_undercutter_step,
    write_runs_csv,
)
from dynaprice.solver import SolverParams, sticky_price

PARAMS = SolverParams(T=100, N=10, c=3.0, l=0.01, delta=0.9995, A=tuple(price_grid(0.01, 20, 0.01)))
SELF_PLAY = ScenarioConfig("self_play", K=3, T=100, H=10, pi=0.1)
SELF_PARAMS = SolverParams(T=100, N=10, c=3.0, l=0.01, delta=0.9995, A=tuple(range(1, 101)))


def total_drift(family, seeds, **kw):
    return np.array([
        price_paths(ScenarioConfig(family, K=1, T=100, H=10, pi=0.1, seed=s, **kw))[-1, 0]
        - price_paths(ScenarioConfig(family, K=1, T=100, H=10, pi=0.1, seed=s, **kw))[0, 0]
        for s in seeds
    ])


def test_degenerate_jumps_freeze_prices():
    traj = gen_trajectories(ScenarioConfig("no_trend", K=4, T=5, H=2, pi=1.0, jumps=(0.0, 0.0), seed=1))
    assert np.all(traj.prices == traj.prices[0])


def test_prices_respect_floor():
    for fam in ("no_trend", "negative_trend"):
        paths = price_paths(ScenarioConfig(fam, K=10, T=100, H=10, pi=0.3, seed=9))
        assert paths.min() >= 3.01


def test_same_seed_same_path():
    cfg = ScenarioConfig("positive_trend", K=5, T=20, H=10, pi=0.1, seed=4)
    assert np.array_equal(price_paths(cfg), price_paths(cfg))
    assert not np.array_equal(price_paths(cfg), price_paths(cfg.with_stream(1)))


@pytest.mark.parametrize("family, drift", [("no_trend", 0.0), ("positive_trend", 5.0), ("negative_trend", -5.0)])
def test_drift_matches_update_rule(family, drift):
    # floor far below so that only the jump law acts
    d = total_drift(family, range(1000), c=-1000.0)
    assert abs(d.mean() - drift) <= 3 * d.std(ddof=1) / np.sqrt(d.size)


def test_upward_drift_with_floor():
    d = total_drift("positive_trend", range(1000))
    assert abs(d.mean() - 5.0) <= 3 * d.std(ddof=1) / np.sqrt(d.size)


def test_no_entry_or_exit_keeps_market_size():
    paths = price_paths(ScenarioConfig("no_trend", K=6, T=10, H=10, pi=0.3, seed=2))
    assert np.all((~np.isnan(paths)).sum(axis=1) == 6)


def test_certain_exit_removes_competitor():
    cfg = ScenarioConfig("no_trend", K=3, exit_prob=1.0)
    row = apply_entry_exit(np.array([5.0, 6.0, 7.0]), cfg, np.random.default_rng(0))
    assert np.isnan(row).all()
    paths = price_paths(ScenarioConfig("no_trend", K=3, T=3, H=2, pi=0.3, exit_prob=1.0, seed=1))
    assert (~np.isnan(paths[1:])).sum() == 0


def test_entrants_feed_competitor_count():
    cfg = ScenarioConfig("no_trend", K=2, T=20, H=5, pi=0.3, entry_prob=0.3, exit_prob=0.05, seed=3)
    traj = gen_trajectories(cfg)
    counts = (~np.isnan(traj.prices)).sum(axis=1)
    assert counts.max() > 2 and len(set(counts)) > 2
    entrants = traj.prices[:, 2:]
    assert np.nanmin(entrants) >= 3.01
    for j in (0, 37, 99):
        s = traj.situation(j)
        assert build_features(10.0, s, FeatureSpec())[3] == counts[j]


def test_undercutter_step():
    assert strategic_undercutter_step(10.0, 0.2, 3.0) == pytest.approx(9.8)
    assert strategic_undercutter_step(3.0, 0.2, 3.0) == pytest.approx(3.01)
    with pytest.raises(ScenarioError):
        strategic_undercutter_step(10.0, 0.0, 3.0)


def test_config_validation():
    with pytest.raises(ScenarioError):
        ScenarioConfig("sideways")
    with pytest.raises(ScenarioError):
        ScenarioConfig(pi=0.0)
    with pytest.raises(ScenarioError):
        ScenarioConfig(jumps=(3.0, -3.0))
    assert ScenarioConfig("ii").family == "positive_trend"
    with pytest.raises(ScenarioError):
        gen_trajectories(ScenarioConfig("strategic_undercutter"))


def recompute_profit(run, params):
    """Discounted margin minus holding cost, step by step from the event log."""
    inv, sold, price = run.inventory[:, 0], run.sold[:, 0], run.our_prices
    h = 1.0 / run.H
    total = 0.0
    for j in range(sold.size):
        if inv[j] > 0:
            total += params.delta ** (j * h) * ((price[j] - params.c) * sold[j] - params.l * h * inv[j])
    return total


@pytest.mark.parametrize("family", ["no_trend", "positive_trend", "strategic_undercutter"])
def test_heuristic_run_bookkeeping(family):
    cfg = ScenarioConfig(family, K=10, T=100, H=10, pi=0.1, seed=5)
    start = time.perf_counter()
    run = simulate_heuristic_run(cfg, PARAMS, example_model())
    assert time.perf_counter() - start < 1.0 or family == "no_trend"  # first call compiles
    inv = run.inventory[:, 0]
    assert np.all(np.diff(inv) <= 0) and run.sold[:, 0].sum() == PARAMS.N - inv[-1] <= PARAMS.N
    assert abs(run.G0 - recompute_profit(run, PARAMS)) <= 1e-9
    # posted prices are the sticky solve for the period-start situation
    for j in range(0, 1000, 10):
        if inv[j] <= 0:
            break
        s = MarketSituation(j / 10, tuple(run.prices[j, 1:][~np.isnan(run.prices[j, 1:])]))
        assert run.our_prices[j] == sticky_price(s, int(inv[j]), 100 - j // 10, PARAMS, example_model())
        assert np.all(run.our_prices[j : j + 10][inv[j : j + 10] > 0] == run.our_prices[j])


def test_heuristic_run_is_fast():
    cfg = ScenarioConfig("no_trend", K=10, T=100, H=10, pi=0.1, seed=6)
    simulate_heuristic_run(cfg, PARAMS, example_model())
    start = time.perf_counter()
    simulate_heuristic_run(cfg.with_stream(1), PARAMS, example_model())
    assert time.perf_counter() - start < 1.0


def test_heuristic_run_is_seeded():
    cfg = ScenarioConfig("strategic_undercutter", K=10, T=100, H=10, pi=0.1, seed=8)
    a = simulate_heuristic_run(cfg, PARAMS, example_model())
    b = simulate_heuristic_run(cfg, PARAMS, example_model())
    assert np.array_equal(a.prices, b.prices, equal_nan=True) and a.G0 == b.G0


def test_undercutter_chases_our_price():
    cfg = ScenarioConfig("strategic_undercutter", K=10, T=100, H=10, pi=0.5, seed=1)
    run = simulate_heuristic_run(cfg, PARAMS, example_model())
    ours, rival = run.prices[:, 0], run.prices[:, 1]
    moved = np.flatnonzero(np.diff(rival) != 0) + 1
    assert moved.size > 0
    for j in moved:
        assert rival[j] == pytest.approx(max(ours[j - 1] - 0.2, 3.01))


def mean_rank(run, rows):
    ranks = []
    for j in rows:
        if run.inventory[j, 0] <= 0:
            continue
        comp = run.prices[j, 1:]
        ranks.append(1 + np.sum(comp < run.prices[j, 0]) + 0.5 * np.sum(comp == run.prices[j, 0]))
    return np.mean(ranks) if ranks else np.nan


def test_leading_ranks_late_in_rising_market():
    early, late = [], []
    for seed in range(100):
        cfg = ScenarioConfig("positive_trend", K=10, T=100, H=10, pi=0.1, seed=seed)
        run = simulate_heuristic_run(cfg, PARAMS, example_model())
        early.append(mean_rank(run, range(0, 100)))
        late.append(mean_rank(run, range(900, 1000)))
    assert np.nanmean(late) < np.nanmean(early)


def test_self_play_needs_two_firms():
    with pytest.raises(ScenarioError):
        self_play(ScenarioConfig("self_play", K=1), SELF_PARAMS, example_model(40.0))


def test_self_play_cycles_and_bookkeeping():
    run = self_play(SELF_PLAY.with_stream(0), SELF_PARAMS, example_model(40.0))
    inv = run.inventory
    for k in range(3):
        col = inv[:, k][~np.isnan(inv[:, k])]
        assert np.all(np.diff(col) <= 0) and col[0] == 10
        assert np.isfinite(run.profit[k])
    # undercutting runs followed by resets: at least two peaks rising 5 units above the trough before them
    p = run.prices[:, 0]
    p = p[~np.isnan(p)]
    per_period = p[: p.size // 10 * 10].reshape(-1, 10).mean(axis=1)
    peaks = 0
    low = per_period[0]
    for x in per_period[1:]:
        low = min(low, x)
        if x - low >= 5:
            peaks += 1
            low = x
    assert peaks >= 2


def test_self_play_symmetric_and_seeded():
    a = self_play(SELF_PLAY.with_stream(2), SELF_PARAMS, example_model(40.0))
    b = self_play(SELF_PLAY.with_stream(2), SELF_PARAMS, example_model(40.0))
    assert np.array_equal(a.prices, b.prices, equal_nan=True)
    assert np.all(a.prices[0] == 20.0) or np.all(a.prices[0] <= 20.0)


def test_runs_csv(tmp_path):
    cfg = ScenarioConfig("no_trend", K=2, T=100, H=10, pi=0.1, seed=1)
    run = simulate_heuristic_run(cfg, PARAMS, example_model())
    write_runs_csv([run], tmp_path / "runs.csv")
    with open(tmp_path / "runs.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["run_id", "t", "firm_id", "price", "inventory", "sold_units"]
    assert {r[2] for r in rows[1:]} == {"0", "1", "2"}
