"""Demand-model estimation from observation logs.

Each observation is one exposure window of our offer in a recorded market
situation. The sale flag (at least one unit sold) is regressed on the demand
features by weighted logistic regression, fitted with damped Newton steps
(iteratively reweighted least squares). The intensity ``d`` is matched
separately from unit counts.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import special

from .demand import DemandModel, FeatureSpec, MarketSituation, feature_tensor, price_grid
from .market import ScenarioConfig, price_paths

GRAD_TOL = 1e-8
MAX_ITER = 100

MARKET_COLUMNS = ("obs_id", "t", "own_price", "duration", "K")
COMPETITOR_COLUMNS = ("obs_id", "k", "price", "quality", "rating", "feedback", "ship_days", "ship_cost")
SALES_COLUMNS = ("obs_id", "units")
ATTRIBUTES = COMPETITOR_COLUMNS[3:]


class CalibrationError(ValueError):
    pass


@dataclass
class ObservationLog:
    """Column arrays, one entry per exposure window.

    ``competitors`` is ``(R, Kmax)`` with NaN padding; ``attributes`` maps each
    offer attribute to an array of the same shape.
    """

    obs_id: np.ndarray
    t: np.ndarray
    own_price: np.ndarray
    duration: np.ndarray
    competitors: np.ndarray
    units: np.ndarray
    weight: np.ndarray
    attributes: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if np.any(self.duration <= 0):
            raise CalibrationError("durations must be positive")
        if np.any(self.weight < 0):
            raise CalibrationError("weights must be nonnegative")

    def __len__(self) -> int:
        return int(self.obs_id.size)

    @property
    def sold(self) -> np.ndarray:
        return (self.units >= 1).astype(float)

    def situation(self, r: int) -> MarketSituation:
        row = self.competitors[r]
        keep = ~np.isnan(row)
        extras = {k: tuple(v[r][keep]) for k, v in self.attributes.items()}
        return MarketSituation(float(self.t[r]), tuple(row[keep]), extras)

    def design(self, spec: FeatureSpec) -> np.ndarray:
        sits = None if spec.builtin_only else [self.situation(r) for r in range(len(self))]
        x = feature_tensor(spec, self.own_price[:, None], self.competitors, self.t, sits)
        return x[:, 0, :]


# -- file IO -----------------------------------------------------------------------


def companion_path(market_file: str | Path) -> Path:
    """Competitor rows live next to the market file as ``<stem>_competitors.csv``."""
    p = Path(market_file)
    return p.with_name(f"{p.stem}_competitors{p.suffix}")


def _rows(path: Path, required: Sequence[str]):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise CalibrationError(f"{path}:1: missing header")
        header = [h.strip() for h in header]
        missing = [c for c in required if c not in header]
        if missing:
            raise CalibrationError(f"{path}:1: missing columns {missing}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise CalibrationError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            yield lineno, dict(zip(header, (c.strip() for c in row)))


def _parse(path: Path, lineno: int, kind, value: str, name: str, allow_empty: bool = False):
    if allow_empty and value == "":
        return math.nan
    try:
        return kind(value)
    except ValueError:
        raise CalibrationError(f"{path}:{lineno}: bad {name} {value!r}") from None


def load_observations(
    market_file: str | Path,
    sales_file: str | Path,
    competitors_file: str | Path | None = None,
) -> ObservationLog:
    """Join market snapshots, competitor offers and sales into one log.

    Observations without a sales row count as zero units. Sales rows that match
    no observation are reported together in one error.
    """
    market_file = Path(market_file)
    sales_file = Path(sales_file)
    comp_file = Path(competitors_file) if competitors_file else companion_path(market_file)

    market: dict[int, tuple] = {}
    for ln, r in _rows(market_file, MARKET_COLUMNS):
        oid = _parse(market_file, ln, int, r["obs_id"], "obs_id")
        if oid in market:
            raise CalibrationError(f"{market_file}:{ln}: duplicate obs_id {oid}")
        t = _parse(market_file, ln, float, r["t"], "t")
        a = _parse(market_file, ln, float, r["own_price"], "own_price")
        dur = _parse(market_file, ln, float, r["duration"], "duration")
        K = _parse(market_file, ln, int, r["K"], "K")
        w = _parse(market_file, ln, float, r.get("weight", "1") or "1", "weight")
        if not dur > 0:
            raise CalibrationError(f"{market_file}:{ln}: duration must be positive")
        if w < 0:
            raise CalibrationError(f"{market_file}:{ln}: weight must be nonnegative")
        if K < 0:
            raise CalibrationError(f"{market_file}:{ln}: K must be nonnegative")
        market[oid] = (t, a, dur, K, w)

    offers: dict[int, dict[int, tuple]] = {oid: {} for oid in market}
    if comp_file.exists():
        for ln, r in _rows(comp_file, COMPETITOR_COLUMNS[:3]):
            oid = _parse(comp_file, ln, int, r["obs_id"], "obs_id")
            k = _parse(comp_file, ln, int, r["k"], "k")
            if oid not in offers:
                raise CalibrationError(f"{comp_file}:{ln}: unknown obs_id {oid}")
            if k in offers[oid]:
                raise CalibrationError(f"{comp_file}:{ln}: duplicate competitor ({oid}, {k})")
            price = _parse(comp_file, ln, float, r["price"], "price")
            attrs = tuple(_parse(comp_file, ln, float, r.get(c, ""), c, True) for c in ATTRIBUTES)
            offers[oid][k] = (price, attrs)
    for oid, (_, _, _, K, _) in market.items():
        if len(offers[oid]) != K:
            raise CalibrationError(
                f"obs_id {oid}: K = {K} but {len(offers[oid])} competitor rows in {comp_file}"
            )

    units: dict[int, int] = {}
    unmatched = []
    for ln, r in _rows(sales_file, SALES_COLUMNS):
        oid = _parse(sales_file, ln, int, r["obs_id"], "obs_id")
        u = _parse(sales_file, ln, int, r["units"], "units")
        if u < 0:
            raise CalibrationError(f"{sales_file}:{ln}: units must be nonnegative")
        if oid not in market:
            unmatched.append(f"line {ln} (obs_id {oid})")
            continue
        if oid in units:
            raise CalibrationError(f"{sales_file}:{ln}: duplicate obs_id {oid}")
        units[oid] = u
    if unmatched:
        raise CalibrationError(f"{sales_file}: unmatched sales rows: {', '.join(unmatched)}")

    ids = sorted(market)
    kmax = max((market[i][3] for i in ids), default=0)
    comp = np.full((len(ids), kmax), np.nan)
    attrs = {c: np.full((len(ids), kmax), np.nan) for c in ATTRIBUTES}
    for r, oid in enumerate(ids):
        for j, k in enumerate(sorted(offers[oid])):
            price, extra = offers[oid][k]
            comp[r, j] = price
            for c, v in zip(ATTRIBUTES, extra):
                attrs[c][r, j] = v
    cols = np.array([market[i][:3] + (market[i][4],) for i in ids], dtype=float).reshape(-1, 4)
    return ObservationLog(
        obs_id=np.array(ids, dtype=np.int64),
        t=cols[:, 0],
        own_price=cols[:, 1],
        duration=cols[:, 2],
        competitors=comp,
        units=np.array([units.get(i, 0) for i in ids], dtype=np.int64),
        weight=cols[:, 3],
        attributes=attrs,
    )


def write_observations(log: ObservationLog, market_file: str | Path, sales_file: str | Path) -> Path:
    """Write the three CSV files; returns the competitor file path."""
    market_file = Path(market_file)
    comp_file = companion_path(market_file)
    with open(market_file, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MARKET_COLUMNS + ("weight",))
        for r in range(len(log)):
            K = int(np.count_nonzero(~np.isnan(log.competitors[r])))
            w.writerow([int(log.obs_id[r]), repr(float(log.t[r])), repr(float(log.own_price[r])),
                        repr(float(log.duration[r])), K, repr(float(log.weight[r]))])
    with open(comp_file, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COMPETITOR_COLUMNS)
        for r in range(len(log)):
            for k, p in enumerate(log.competitors[r]):
                if np.isnan(p):
                    continue
                extra = [log.attributes.get(c, None) for c in ATTRIBUTES]
                extra = ["" if a is None or np.isnan(a[r, k]) else repr(float(a[r, k])) for a in extra]
                w.writerow([int(log.obs_id[r]), k, repr(float(p)), *extra])
    with open(sales_file, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SALES_COLUMNS)
        for r in range(len(log)):
            if log.units[r]:
                w.writerow([int(log.obs_id[r]), int(log.units[r])])
    return comp_file


# -- fitting -----------------------------------------------------------------------


@dataclass
class FitResult:
    features: tuple[str, ...]
    beta: np.ndarray
    se: np.ndarray
    loglik: float
    iterations: int
    converged: bool
    grad_norm: float
    history: list[float] = field(default_factory=list)

    def model(self, d: float = 1.0, spec: FeatureSpec | None = None) -> DemandModel:
        spec = spec or FeatureSpec(self.features)
        return DemandModel(spec, tuple(self.beta), d)


def _loglik(X, y, w, beta, penalty):
    z = X @ beta
    # log(1 + e^z) computed stably
    ll = float(np.sum(w * (y * z - np.logaddexp(0.0, z))))
    return ll - 0.5 * float(beta @ (penalty * beta))


def fit_logistic(
    log: ObservationLog,
    spec: FeatureSpec,
    l2: float = 0.0,
    tol: float = GRAD_TOL,
    max_iter: int = MAX_ITER,
) -> FitResult:
    """Weighted logistic regression of the sale flag on the demand features.

    ``l2`` penalizes every coefficient except the intercept. Raises on
    one-sided outcomes, and on rank deficiency or separation without ridge.
    """
    if l2 < 0:
        raise CalibrationError("l2 must be nonnegative")
    X = log.design(spec)
    return fit_design(X, log.sold, log.weight, spec.enabled_features, l2, tol, max_iter)


def fit_design(X, y, w, names, l2=0.0, tol=GRAD_TOL, max_iter=MAX_ITER) -> FitResult:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    active = w > 0
    pos = float(np.sum(w * y))
    neg = float(np.sum(w * (1 - y)))
    if pos <= 0 or neg <= 0:
        raise CalibrationError("need at least one sale and one non-sale with positive weight")
    F = X.shape[1]
    penalty = np.full(F, float(l2))
    penalty[0] = 0.0
    if l2 == 0 and np.linalg.matrix_rank(X[active] * np.sqrt(w[active])[:, None]) < F:
        raise CalibrationError("design matrix is rank deficient; use l2 > 0")

    beta = np.zeros(F)
    beta[0] = special.logit(pos / (pos + neg))
    ll = _loglik(X, y, w, beta, penalty)
    history = [ll]
    converged = False
    it = 0
    g = np.inf
    for it in range(1, max_iter + 1):
        p = special.expit(X @ beta)
        grad = X.T @ (w * (y - p)) - penalty * beta
        g = float(np.max(np.abs(grad)))
        if g <= tol:
            converged = True
            it -= 1
            break
        H = (X * (w * p * (1 - p))[:, None]).T @ X + np.diag(penalty)
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            raise CalibrationError("singular information matrix (separation?); use l2 > 0") from None
        scale = 1.0
        for _ in range(60):
            cand = beta + scale * step
            new = _loglik(X, y, w, cand, penalty)
            if new >= ll:
                break
            scale *= 0.5
        else:
            break
        beta, ll = cand, new
        history.append(ll)
        if l2 == 0 and np.max(np.abs(beta)) > 1e6:
            raise CalibrationError("coefficients diverge (separation); use l2 > 0")
    else:
        p = special.expit(X @ beta)
        grad = X.T @ (w * (y - p)) - penalty * beta
        g = float(np.max(np.abs(grad)))
        converged = g <= tol

    p = special.expit(X @ beta)
    if l2 == 0:
        # a perfect split means beta itself separates the data: no finite optimum
        fitted = (p > 0.5) == (y > 0.5)
        if np.all(fitted[active]):
            raise CalibrationError("outcomes are perfectly separated; use l2 > 0")
    H = (X * (w * p * (1 - p))[:, None]).T @ X + np.diag(penalty)
    try:
        cov = np.linalg.inv(H)
        se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    except np.linalg.LinAlgError:
        se = np.full(F, np.nan)
    return FitResult(tuple(names), beta, se, ll, it, converged, g, history)


def estimate_intensity(log: ObservationLog, m: DemandModel) -> float:
    """Moment estimate of ``d``: total units over the modeled sale probability mass.

    Matches ``E[units] = d * duration * P`` summed over all windows.
    """
    spec = m.spec
    z = log.design(spec) @ np.asarray(m.beta)
    mass = float(np.sum(log.duration * special.expit(z)))
    if mass <= 0:
        raise CalibrationError("no exposure to match against")
    return float(np.sum(log.units)) / mass


def write_fit(result: FitResult, path: str | Path, d: float | None = None) -> None:
    """Key-value text summary."""
    lines = [
        f"features = {', '.join(result.features)}",
        f"beta = {', '.join(repr(float(b)) for b in result.beta)}",
        f"se = {', '.join(repr(float(s)) for s in result.se)}",
        f"loglik = {result.loglik!r}",
        f"iterations = {result.iterations}",
        f"converged = {str(result.converged).lower()}",
        f"grad_norm = {result.grad_norm!r}",
    ]
    if d is not None:
        lines.append(f"d = {d!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_coefficients_csv(result: FitResult, path: str | Path, truth: Sequence[float] | None = None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["feature", "estimate", "std_error"] + (["truth", "z"] if truth is not None else []))
        for i, name in enumerate(result.features):
            row = [name, repr(float(result.beta[i])), repr(float(result.se[i]))]
            if truth is not None:
                row += [repr(float(truth[i])), repr(float((result.beta[i] - truth[i]) / result.se[i]))]
            w.writerow(row)


# -- synthetic data ------------------------------------------------------------------


def generate_synthetic_log(
    m: DemandModel,
    cfg: ScenarioConfig,
    n_obs: int,
    seed: int,
    A: np.ndarray | None = None,
) -> ObservationLog:
    """Sale flags drawn from ``m`` in situations taken from simulated markets.

    Each simulated market contributes its integer-time snapshots. Its number of
    competitors is drawn uniformly from ``1..cfg.K`` so that the competitor
    count varies. Offered prices are uniform over ``A``.
    """
    if n_obs < 1:
        raise CalibrationError("n_obs must be at least 1")
    if cfg.family in ("strategic_undercutter", "self_play"):
        raise CalibrationError("synthetic logs need an exogenous market family")
    A = price_grid(0.01, 20.0, 0.01) if A is None else np.asarray(A, dtype=float)
    rng = np.random.default_rng(seed)
    per = cfg.T
    markets = -(-n_obs // per)
    comp = np.full((markets * per, max(cfg.K, 1)), np.nan)
    times = np.tile(np.arange(per, dtype=float), markets)
    for j in range(markets):
        K = int(rng.integers(1, max(cfg.K, 1) + 1))
        sub = ScenarioConfig(
            family=cfg.family, K=K, T=cfg.T, H=1, pi=cfg.pi, jumps=cfg.jumps,
            p0_range=cfg.p0_range, c=cfg.c, seed=seed, stream=(j,),
        )
        comp[j * per:(j + 1) * per, :K] = price_paths(sub)[:per]
    comp = comp[:n_obs]
    times = times[:n_obs]
    own = A[rng.integers(0, A.size, n_obs)]
    log = ObservationLog(
        obs_id=np.arange(n_obs, dtype=np.int64),
        t=times,
        own_price=own,
        duration=np.ones(n_obs),
        competitors=comp,
        units=np.zeros(n_obs, dtype=np.int64),
        weight=np.ones(n_obs),
    )
    z = log.design(m.spec) @ np.asarray(m.beta)
    log.units = (rng.random(n_obs) < special.expit(z)).astype(np.int64)
    return log


def consistency_sweep(
    m: DemandModel,
    cfg: ScenarioConfig,
    sizes: Sequence[int] = (10_000, 100_000, 1_000_000),
    seeds: Sequence[int] = tuple(range(10)),
    l2: float = 0.0,
) -> list[dict]:
    """Median absolute coefficient error per sample size and feature."""
    truth = np.asarray(m.beta)
    rows = []
    for n in sizes:
        errs = []
        for s in seeds:
            fit = fit_logistic(generate_synthetic_log(m, cfg, n, s), m.spec, l2)
            errs.append(np.abs(fit.beta - truth))
        med = np.median(np.array(errs), axis=0)
        for name, e in zip(m.spec.enabled_features, med):
            rows.append(dict(n_obs=n, feature=name, median_abs_error=float(e)))
    return rows
