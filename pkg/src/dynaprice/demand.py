"""Logit sale probabilities and Poisson sales-count distributions.

A market situation is reduced to a feature vector for each candidate offer
price; the logit of ``x'beta`` gives the probability of a sale within one
period, and ``d`` scales it into a Poisson intensity for periods of arbitrary
length.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import special

from . import _kernels

BUILTIN_FEATURES = (
    "intercept",
    "price_rank",
    "price_gap",
    "competitor_count",
    "average_price",
    "time_power",
)

# name -> fn(price, situation) -> float
_CUSTOM_FEATURES: dict[str, Callable[[float, "MarketSituation"], float]] = {}

_TIE_ATOL = 1e-9


class DemandError(ValueError):
    pass


def register_feature(name: str, fn: Callable[[float, "MarketSituation"], float]) -> None:
    """Make a user-defined regressor available to :class:`FeatureSpec`.

    Extra offer dimensions (ratings, shipping days, ...) only reach the model
    through functions registered here.
    """
    if name in BUILTIN_FEATURES:
        raise DemandError(f"cannot override builtin feature {name!r}")
    _CUSTOM_FEATURES[name] = fn


@dataclass(frozen=True)
class MarketSituation:
    time: float = 0.0
    competitor_prices: tuple[float, ...] = ()
    extras: Mapping[str, tuple] = field(default_factory=dict)

    def __post_init__(self) -> None:
        prices = tuple(float(p) for p in self.competitor_prices)
        object.__setattr__(self, "competitor_prices", prices)
        if any(not p > 0 for p in prices):
            raise DemandError("competitor prices must be positive")
        if self.time < 0:
            raise DemandError("time must be nonnegative")

    @property
    def K(self) -> int:
        return len(self.competitor_prices)

    def with_extras(self, **extras: tuple) -> "MarketSituation":
        merged = dict(self.extras)
        merged.update(extras)
        return MarketSituation(self.time, self.competitor_prices, merged)


@dataclass(frozen=True)
class FeatureSpec:
    enabled_features: tuple[str, ...] = BUILTIN_FEATURES[:5]
    time_params: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self) -> None:
        feats = tuple(self.enabled_features)
        object.__setattr__(self, "enabled_features", feats)
        if not feats or feats[0] != "intercept":
            raise DemandError("intercept must be the first feature")
        if len(set(feats)) != len(feats):
            raise DemandError("duplicate feature in spec")
        for f in feats:
            if f not in BUILTIN_FEATURES and f not in _CUSTOM_FEATURES:
                raise DemandError(f"unknown feature {f!r}")

    def __len__(self) -> int:
        return len(self.enabled_features)

    @property
    def builtin_only(self) -> bool:
        return all(f in BUILTIN_FEATURES for f in self.enabled_features)


@dataclass(frozen=True)
class DemandModel:
    spec: FeatureSpec
    beta: tuple[float, ...]
    d: float = 1.0

    def __post_init__(self) -> None:
        beta = tuple(float(b) for b in self.beta)
        object.__setattr__(self, "beta", beta)
        if len(beta) != len(self.spec):
            raise DemandError(
                f"beta has {len(beta)} entries but spec enables {len(self.spec)} features"
            )
        if not self.d > 0:
            raise DemandError("d must be positive")

    def probability(self, a: float, s: MarketSituation) -> float:
        return logit_probability(self, a, s)

    def probabilities(self, prices, s: MarketSituation) -> np.ndarray:
        """Sale probabilities for many offer prices in one situation."""
        prices = np.asarray(prices, dtype=float)
        comp = np.asarray(s.competitor_prices, dtype=float)[None, :]
        p = probability_matrix(self, prices[None, :], comp, np.array([s.time]), situations=[s])
        return p[0]

    def within_rank_slope(self, K: int) -> float | None:
        """d(x'beta)/da while the price rank is held fixed, or None if unknown.

        Only the gap and average-price regressors move with the price inside a
        rank interval. Custom features make the slope unknown.
        """
        if not self.spec.builtin_only:
            return None
        coef = dict(zip(self.spec.enabled_features, self.beta))
        slope = coef.get("price_gap", 0.0)
        slope += coef.get("average_price", 0.0) / (1 + K)
        return slope

    def with_scale(self, d: float) -> "DemandModel":
        return DemandModel(self.spec, self.beta, d)


def example_model(d: float = 10.0) -> DemandModel:
    """The five-regressor model with the production-inspired coefficients."""
    return DemandModel(FeatureSpec(), (-3.89, -0.56, -0.01, 0.07, -0.05), d)


EXAMPLE_PRICES = (5.18, 5.96, 6.31, 8.28, 9.48, 9.88, 10.33, 10.98, 11.67, 13.52)


def price_rank(a: float, prices: Sequence[float]) -> float:
    p = np.asarray(prices, dtype=float)
    if p.size == 0:
        return 1.0
    below = np.count_nonzero(p < a - _TIE_ATOL)
    ties = np.count_nonzero(np.abs(p - a) <= _TIE_ATOL)
    return 1.0 + below + 0.5 * ties


def _left_sum(p: np.ndarray) -> float:
    # same summation order as the compiled kernel
    total = 0.0
    for x in p:
        total += float(x)
    return total


def build_features(a: float, s: MarketSituation, spec: FeatureSpec) -> np.ndarray:
    p = np.asarray(s.competitor_prices, dtype=float)
    K = p.size
    out = []
    for name in spec.enabled_features:
        if name == "intercept":
            out.append(1.0)
        elif name == "price_rank":
            out.append(price_rank(a, p))
        elif name == "price_gap":
            if K == 0:
                raise DemandError("feature undefined for empty market: price_gap")
            out.append(a - p.min())
        elif name == "competitor_count":
            out.append(float(K))
        elif name == "average_price":
            out.append((a + _left_sum(p)) / (1 + K))
        elif name == "time_power":
            a1, a2 = spec.time_params
            out.append(a1 * s.time**a2)
        else:
            out.append(float(_CUSTOM_FEATURES[name](a, s)))
    return np.array(out)


def logit_probability(m: DemandModel, a: float, s: MarketSituation) -> float:
    if m.spec.builtin_only:
        comp = np.array([s.competitor_prices], dtype=float).reshape(1, -1)
        return float(probability_matrix(m, np.array([[a]], dtype=float), comp, np.array([s.time]))[0, 0])
    x = build_features(a, s, m.spec)
    return float(special.expit(float(np.dot(x, m.beta))))


def feature_tensor(
    spec: FeatureSpec,
    prices: np.ndarray,
    competitors: np.ndarray,
    times: np.ndarray,
    situations: Sequence[MarketSituation] | None = None,
) -> np.ndarray:
    """Features for a batch of situations, shape ``(S, M, F)``.

    ``prices`` is ``(S, M)`` (or ``(M,)`` shared by all rows), ``competitors``
    is ``(S, K)`` with NaN marking absent firms.
    """
    comp = np.atleast_2d(np.asarray(competitors, dtype=float))
    S = comp.shape[0]
    a = np.asarray(prices, dtype=float)
    if a.ndim == 1:
        a = np.broadcast_to(a, (S, a.size))
    present = ~np.isnan(comp)
    K = present.sum(axis=1).astype(float)
    cols = []
    for name in spec.enabled_features:
        if name == "intercept":
            cols.append(np.ones_like(a))
        elif name == "price_rank":
            c3 = comp[:, None, :]
            a3 = a[:, :, None]
            below = np.sum(c3 < a3 - _TIE_ATOL, axis=2)
            ties = np.sum(np.abs(c3 - a3) <= _TIE_ATOL, axis=2)
            cols.append(1.0 + below + 0.5 * ties)
        elif name == "price_gap":
            if np.any(K == 0):
                raise DemandError("feature undefined for empty market: price_gap")
            cols.append(a - np.nanmin(comp, axis=1)[:, None])
        elif name == "competitor_count":
            cols.append(np.broadcast_to(K[:, None], a.shape))
        elif name == "average_price":
            total = np.zeros(S)
            for k in range(comp.shape[1]):
                total = total + np.where(present[:, k], comp[:, k], 0.0)
            cols.append((a + total[:, None]) / (1.0 + K[:, None]))
        elif name == "time_power":
            a1, a2 = spec.time_params
            t = np.asarray(times, dtype=float)
            cols.append(np.broadcast_to((a1 * t**a2)[:, None], a.shape))
        else:
            fn = _CUSTOM_FEATURES[name]
            col = np.empty(a.shape)
            for r in range(S):
                if situations is not None:
                    sit = situations[r]
                else:
                    row = comp[r][present[r]]
                    sit = MarketSituation(float(np.asarray(times)[r]), tuple(row))
                for j in range(a.shape[1]):
                    col[r, j] = fn(float(a[r, j]), sit)
            cols.append(col)
    return np.stack(cols, axis=-1)


def probability_matrix(
    m: DemandModel,
    prices: np.ndarray,
    competitors: np.ndarray,
    times: np.ndarray,
    situations: Sequence[MarketSituation] | None = None,
) -> np.ndarray:
    """Sale probabilities, shape ``(S, M)``; arguments as for :func:`feature_tensor`."""
    comp = np.atleast_2d(np.asarray(competitors, dtype=float))
    S = comp.shape[0]
    a = np.asarray(prices, dtype=float)
    if a.ndim == 1:
        a = np.broadcast_to(a, (S, a.size))
    if not m.spec.builtin_only:
        x = feature_tensor(m.spec, a, comp, times, situations)
        return special.expit(x @ np.asarray(m.beta))
    if "price_gap" in m.spec.enabled_features and np.any((~np.isnan(comp)).sum(axis=1) == 0):
        raise DemandError("feature undefined for empty market: price_gap")
    codes = np.array([BUILTIN_FEATURES.index(f) for f in m.spec.enabled_features], dtype=np.int64)
    t = np.broadcast_to(np.asarray(times, dtype=float).reshape(-1), (S,))
    a1, a2 = m.spec.time_params
    return _kernels.builtin_probabilities(
        np.ascontiguousarray(a), np.ascontiguousarray(comp), np.ascontiguousarray(t),
        codes, np.asarray(m.beta), float(a1), float(a2), _TIE_ATOL,
    )


@dataclass(frozen=True)
class SalesPmf:
    duration: float
    mass: np.ndarray
    tail: float
    cap: int

    @property
    def mean(self) -> float:
        return float(np.arange(self.cap) @ self.mass + self.cap * self.tail)


def poisson_table(mu: np.ndarray, cap: int) -> tuple[np.ndarray, np.ndarray]:
    """Poisson pmf and survival columns for a batch of means.

    Returns ``pmf[..., i] = P(I = i)`` for ``i = 0..cap`` and
    ``sf[..., n] = P(I >= n)`` for ``n = 0..cap``. Each entry depends only on
    its own mean, so the same mean always yields the same bits.
    """
    mu = np.asarray(mu, dtype=float)
    if np.any(mu < 0) or not np.all(np.isfinite(mu)):
        raise DemandError("Poisson means must be finite and nonnegative")
    pmf, sf = _kernels.poisson_rows(np.ascontiguousarray(mu.ravel()), int(cap))
    shape = mu.shape + (cap + 1,)
    return pmf.reshape(shape), sf.reshape(shape)


def sales_pmf(m: DemandModel, a: float, s: MarketSituation, duration: float, cap: int) -> SalesPmf:
    if not 0 < duration <= 1:
        raise DemandError("duration must lie in (0, 1]")
    if cap < 1:
        raise DemandError("cap must be at least 1")
    mu = duration * m.d * logit_probability(m, a, s)
    return pmf_from_mean(mu, cap, duration)


def pmf_from_mean(mu: float, cap: int, duration: float = 1.0) -> SalesPmf:
    pmf, sf = poisson_table(np.array(mu), cap)
    return SalesPmf(duration, pmf[:cap].copy(), float(sf[cap]), cap)


def single_period_profit(m: DemandModel, a: float, s: MarketSituation, c: float) -> float:
    return (a - c) * logit_probability(m, a, s)


def demand_curve(m: DemandModel, prices, s: MarketSituation, c: float) -> np.ndarray:
    """Rows of (price, probability, one-period expected profit)."""
    a = np.asarray(prices, dtype=float)
    p = m.probabilities(a, s)
    return np.column_stack([a, p, (a - c) * p])


def price_grid(lo: float, hi: float, step: float) -> np.ndarray:
    """Evenly spaced price grid built from integer multiples of ``step``.

    Steps like 0.01 are applied as ``k / 100`` so that grid points print and
    compare exactly as their decimal literals.
    """
    k = np.arange(int(round(lo / step)), int(round(hi / step)) + 1)
    inv = 1.0 / step
    if step < 1 and abs(inv - round(inv)) < 1e-9:
        return k / round(inv)
    return k * step


# -- flat key-value serialization -------------------------------------------


def _fmt_floats(values) -> str:
    return ", ".join(repr(float(v)) for v in values)


def model_to_config(m: DemandModel, name: str = "demand") -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    cp[f"model.{name}"] = {
        "features": ", ".join(m.spec.enabled_features),
        "beta": _fmt_floats(m.beta),
        "d": repr(float(m.d)),
        "time_params": _fmt_floats(m.spec.time_params),
    }
    return cp


def save_model(m: DemandModel, path: str | Path, name: str = "demand") -> None:
    cp = model_to_config(m, name)
    with open(path, "w") as fh:
        cp.write(fh)


def model_from_section(section: Mapping[str, str]) -> DemandModel:
    allowed = {"features", "beta", "d", "time_params"}
    unknown = set(section) - allowed
    if unknown:
        raise DemandError(f"unknown model keys: {sorted(unknown)}")
    feats = tuple(f.strip() for f in section["features"].split(",") if f.strip())
    beta = tuple(float(b) for b in section["beta"].split(","))
    tp = section.get("time_params", "1.0, 1.0")
    a1, a2 = (float(v) for v in tp.split(","))
    return DemandModel(FeatureSpec(feats, (a1, a2)), beta, float(section["d"]))


def load_model(path: str | Path, name: str = "demand") -> DemandModel:
    cp = configparser.ConfigParser()
    with open(path) as fh:
        cp.read_file(fh)
    key = f"model.{name}"
    if key not in cp:
        raise DemandError(f"no section [{key}] in {path}")
    return model_from_section(cp[key])
