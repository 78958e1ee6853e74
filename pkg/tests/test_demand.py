import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from dynaprice.demand import (
    EXAMPLE_PRICES,
    DemandError,
    DemandModel,
    FeatureSpec,
    MarketSituation,
    build_features,
    demand_curve,
    load_model,
    logit_probability,
    pmf_from_mean,
    price_grid,
    price_rank,
    register_feature,
    sales_pmf,
    save_model,
    single_period_profit,
)

BETA = (-3.89, -0.56, -0.01, 0.07, -0.05)
prices_st = st.lists(st.floats(0.5, 30, allow_nan=False).map(lambda x: round(x, 2)), min_size=1, max_size=12)


@pytest.mark.parametrize("a, rank", [(5.17, 1.0), (5.18, 1.5), (20.0, 11.0), (10.0, 7.0)])
def test_price_rank_examples(a, rank):
    assert price_rank(a, EXAMPLE_PRICES) == rank


def test_rank_of_empty_market_is_one():
    assert price_rank(3.0, []) == 1.0


@given(prices_st, st.floats(0.01, 40), st.floats(0.01, 40))
def test_rank_bounds_and_monotone(prices, a, b):
    lo, hi = sorted((round(a, 2), round(b, 2)))
    r1, r2 = price_rank(lo, prices), price_rank(hi, prices)
    assert 1 <= r1 <= r2 <= len(prices) + 1
    assert r1 == oracles.features(lo, prices)[1]


@pytest.mark.parametrize("a", [5.17, 5.18, 7.0, 10.0, 13.52, 19.99])
def test_features_match_hand_formulas(situation, a):
    x = build_features(a, situation, FeatureSpec())
    np.testing.assert_allclose(x, oracles.features(a, list(EXAMPLE_PRICES)), rtol=0, atol=1e-12)


def test_features_at_ten():
    x = build_features(10.0, MarketSituation(0, EXAMPLE_PRICES), FeatureSpec())
    np.testing.assert_allclose(x, [1, 7, 4.82, 10, 101.59 / 11], atol=1e-12)


def test_time_power_feature():
    spec = FeatureSpec(("intercept", "time_power"), (2.0, 0.5))
    x = build_features(1.0, MarketSituation(9.0, (4.0,)), spec)
    assert list(x) == [1.0, 6.0]


def test_intercept_only_on_empty_market():
    assert list(build_features(4.0, MarketSituation(0, ()), FeatureSpec(("intercept",)))) == [1.0]


def test_empty_market_rejects_gap():
    with pytest.raises(DemandError, match="feature undefined for empty market"):
        build_features(4.0, MarketSituation(0, ()), FeatureSpec())


def test_spec_and_model_validation():
    with pytest.raises(DemandError):
        FeatureSpec(("price_rank", "intercept"))
    with pytest.raises(DemandError):
        DemandModel(FeatureSpec(), (1.0, 2.0))
    with pytest.raises(DemandError):
        MarketSituation(0, (5.0, -1.0))


def test_custom_feature_reads_extras():
    register_feature("best_rating", lambda a, s: max(s.extras["rating"]))
    spec = FeatureSpec(("intercept", "best_rating"))
    s = MarketSituation(0, (5.0, 6.0)).with_extras(rating=(0.9, 0.7))
    m = DemandModel(spec, (0.0, 2.0))
    assert list(build_features(5.0, s, spec)) == [1.0, 0.9]
    assert logit_probability(m, 5.0, s) == pytest.approx(oracles.logit((0.0, 2.0), [1.0, 0.9]), abs=1e-15)


@pytest.mark.parametrize("a", [0.01, 5.17, 5.18, 6.0, 9.48, 12.0, 20.0])
def test_logit_matches_arbitrary_precision(model, situation, a):
    want = oracles.prob(BETA, a, list(EXAMPLE_PRICES))
    assert logit_probability(model, a, situation) == pytest.approx(want, rel=1e-13)


def test_zero_coefficients_give_one_half(situation):
    m = DemandModel(FeatureSpec(), (0.0,) * 5)
    assert logit_probability(m, 7.3, situation) == 0.5


def test_probability_falls_with_price(model, situation):
    assert logit_probability(model, 6.0, situation) > logit_probability(model, 12.0, situation)
    p = model.probabilities(price_grid(0.01, 20, 0.01), situation)
    assert np.all(np.diff(p) <= 0)
    assert np.all((p > 0) & (p < 1))


@pytest.mark.parametrize("z", [-500.0, 500.0, -745.0, 800.0])
def test_logit_stable_for_extreme_scores(situation, z):
    m = DemandModel(FeatureSpec(("intercept",)), (z,))
    with np.errstate(all="raise"):
        p = logit_probability(m, 1.0, situation)
    assert p == pytest.approx(oracles.logit((z,), [1.0]), rel=1e-12, abs=1e-300)


@given(st.lists(st.floats(-2, 2), min_size=5, max_size=5), st.floats(0.5, 20), prices_st)
def test_negated_coefficients_complement(beta, a, prices):
    s = MarketSituation(0, tuple(prices))
    p = logit_probability(DemandModel(FeatureSpec(), beta), a, s)
    q = logit_probability(DemandModel(FeatureSpec(), [-b for b in beta]), a, s)
    assert 0 <= p <= 1
    assert p + q == pytest.approx(1.0, abs=1e-14)


def test_poisson_mass_definition():
    pmf = pmf_from_mean(3.0, 8)
    i = np.arange(8)
    from math import factorial

    want = [np.exp(-3) * 3.0**k / factorial(k) for k in i]
    np.testing.assert_allclose(pmf.mass, want, rtol=1e-13)
    mass, tail = oracles.pmf_tail(3.0, 8)
    assert pmf.tail == pytest.approx(tail, rel=1e-12)


def test_sales_pmf_scales_by_duration(model, situation):
    full = sales_pmf(model, 6.0, situation, 1.0, 5)
    part = sales_pmf(model, 6.0, situation, 0.1, 5)
    assert part.mean < full.mean
    mu = 0.1 * 10 * oracles.prob(BETA, 6.0, list(EXAMPLE_PRICES))
    np.testing.assert_allclose(part.mass, oracles.pmf_tail(mu, 5)[0], rtol=1e-12)


def test_vanishing_mean_puts_mass_at_zero(situation):
    m = DemandModel(FeatureSpec(("intercept",)), (-60.0,), 10.0)
    assert sales_pmf(m, 5.0, situation, 1.0, 3).mass[0] == pytest.approx(1.0, abs=1e-20)


@given(st.floats(0, 60), st.integers(1, 40))
def test_pmf_conservation(mu, cap):
    pmf = pmf_from_mean(mu, cap)
    assert np.all((pmf.mass >= 0) & (pmf.mass <= 1)) and 0 <= pmf.tail <= 1
    assert abs(pmf.mass.sum() + pmf.tail - 1) <= 1e-12


@given(st.floats(0, 8), st.floats(0, 8), st.integers(1, 5))
def test_additivity_matches_convolution(mu1, mu2, cap):
    a, b = pmf_from_mean(mu1, cap), pmf_from_mean(mu2, cap)
    conv = [sum(a.mass[i] * b.mass[k - i] for i in range(k + 1)) for k in range(cap)]
    joint = pmf_from_mean(mu1 + mu2, cap)
    np.testing.assert_allclose(joint.mass, conv, rtol=0, atol=1e-12)
    assert joint.tail == pytest.approx(1 - sum(conv), abs=1e-12)


def test_profit_zero_at_cost(model, situation):
    assert single_period_profit(model, 3.0, situation, 3.0) == 0.0


def test_profit_argmax_undercuts_best_competitor(model, situation):
    curve = demand_curve(model, price_grid(0.01, 20, 0.01), situation, 3.0)
    assert curve[np.argmax(curve[:, 2]), 0] == 5.17


def test_probability_jumps_at_competitor_prices(model, situation):
    for p in EXAMPLE_PRICES:
        below, at, above = (logit_probability(model, x, situation) for x in (p - 0.01, p, p + 0.01))
        inside = logit_probability(model, p - 0.02, situation) - below
        assert below - at > 5 * abs(inside)
        assert at - above > 5 * abs(inside)


def test_model_round_trip(tmp_path, model):
    save_model(model, tmp_path / "m.ini")
    assert load_model(tmp_path / "m.ini") == model
