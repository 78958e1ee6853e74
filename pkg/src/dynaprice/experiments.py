"""Config-driven experiment runs, manifests and baseline comparison.

A config is a sectioned key-value file. Every section and key is checked
against a fixed schema; typos are errors that point at the offending line.
Each run writes its CSVs plus ``manifest.json``, which records the config
hash, seed, library versions and a sha256 per output file.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import json
import math
import os
import platform
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .calibration import (
    CalibrationError,
    consistency_sweep,
    estimate_intensity,
    fit_logistic,
    generate_synthetic_log,
    load_observations,
    write_coefficients_csv,
    write_fit,
)
from .demand import (
    EXAMPLE_PRICES,
    DemandError,
    DemandModel,
    MarketSituation,
    demand_curve,
    example_model,
    model_from_section,
    price_grid,
)
from .duopoly import (
    DuopolyParams,
    ResponseFunction,
    build_conditional_accurate,
    build_conditional_naive,
    comparison_table,
    reaction_time_study,
    simulate_duopoly_path,
    solve_duopoly_heuristic,
    solve_optimal_response,
    write_paths_csv,
    write_policy_csv,
    write_table2_csv,
    write_table3_csv,
)
from .market import MarketRun, ScenarioConfig, gen_trajectories, self_play, simulate_heuristic_run, write_runs_csv
from .oracle import StrategyReport, Table1Row, compare_strategies, write_table1_csv
from .solver import SolverError, SolverParams, solve_value, solve_with_adjustment_cost, write_tables_csv

KINDS = (
    "demand_curve",
    "solve_policy",
    "simulate",
    "table1",
    "table2",
    "table3",
    "self_play",
    "calibrate",
    "adjustment_cost_study",
)
SEEDED = {"simulate", "table1", "self_play", "calibrate", "adjustment_cost_study"}
OUT_ENV = "DYNAPRICE_OUT"


class ConfigError(ValueError):
    pass


class NumericalError(RuntimeError):
    pass


# -- parsing ---------------------------------------------------------------------


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x.strip())


def _words(text: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in text.split(",") if x.strip())


def _pair(text: str) -> tuple[float, float]:
    v = _floats(text)
    if len(v) != 2:
        raise ValueError("expected two comma-separated numbers")
    return v


def _grid(text: str) -> tuple[float, ...]:
    """``lo:hi:step`` or an explicit comma list."""
    if ":" in text:
        parts = [float(x) for x in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise ValueError("expected lo:hi:step with step > 0")
        return tuple(price_grid(*parts))
    return _floats(text)


SCHEMA: dict[str, dict[str, Callable[[str], Any]]] = {
    "experiment": {
        "kind": str, "name": str, "seed": int, "scenarios": int, "jobs": int, "out": str,
    },
    "solver": {
        "T": int, "N": int, "c": float, "l": float, "delta": float, "A": _grid, "z": float, "eps": float,
    },
    "demand": {"features": str, "beta": str, "d": str, "time_params": str},
    "market": {
        "family": str, "K": int, "H": int, "pi": float, "jumps": _pair, "p0_range": _pair,
        "exit_prob": float, "entry_prob": float, "entry_range": _pair, "undercut_eps": float,
    },
    "situation": {"time": float, "competitors": _floats},
    "table1": {"families": _words, "pis": _floats},
    "duopoly": {
        "reactions": _floats, "ns": _ints, "price": float, "eps": float, "floor": float,
        "benchmark": float, "figure_reaction": float, "figure_periods": int,
    },
    "calibration": {
        "market_file": str, "sales_file": str, "competitors_file": str, "n_obs": int,
        "l2": float, "sizes": _ints, "sweep_seeds": int,
    },
    "adjustment": {"z_values": _floats, "paths": int},
}


@dataclass
class ExperimentConfig:
    kind: str
    name: str
    seed: int | None
    scenarios: int
    jobs: int
    sections: dict[str, dict[str, Any]]
    source: Path | None = None
    text: str = ""
    out: Path | None = None
    lines: dict[tuple[str, str], int] = field(default_factory=dict)

    def section(self, name: str) -> dict[str, Any]:
        return self.sections.get(name, {})

    def resolve(self, p: str) -> Path:
        q = Path(p)
        if not q.is_absolute() and self.source is not None:
            q = self.source.parent / q
        return q


def _line_map(text: str) -> dict[tuple[str, str], int]:
    out = {}
    section = None
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        m = re.match(r"^\[(.+)\]$", line)
        if m:
            section = m.group(1).strip()
            out[(section, "")] = i
            continue
        m = re.match(r"^([^=:]+?)\s*[=:]", line)
        if m and section is not None:
            out[(section, m.group(1).strip())] = i
    return out


def parse_config(text: str, source: Path | None = None) -> ExperimentConfig:
    """Strict parse; every error names ``file:line``."""
    where = str(source) if source else "<config>"
    cp = configparser.ConfigParser(interpolation=None, strict=True, empty_lines_in_values=False)
    cp.optionxform = str
    try:
        cp.read_string(text, source=where)
    except configparser.MissingSectionHeaderError as e:
        raise ConfigError(f"{where}:{e.lineno}: key outside any section") from None
    except configparser.DuplicateSectionError as e:
        raise ConfigError(f"{where}:{e.lineno}: duplicate section [{e.section}]") from None
    except configparser.DuplicateOptionError as e:
        raise ConfigError(f"{where}:{e.lineno}: duplicate key {e.option!r} in [{e.section}]") from None
    except configparser.ParsingError as e:
        lineno, line = e.errors[0]
        raise ConfigError(f"{where}:{lineno}: cannot parse {line.strip()!r}") from None
    if cp.defaults():
        raise ConfigError(f"{where}:1: [DEFAULT] sections are not supported")
    lines = _line_map(text)

    def at(section: str, key: str = "") -> str:
        return f"{where}:{lines.get((section, key), 0)}"

    sections: dict[str, dict[str, Any]] = {}
    for name in cp.sections():
        if name not in SCHEMA:
            raise ConfigError(f"{at(name)}: unknown section [{name}]")
        conv = SCHEMA[name]
        parsed = {}
        for key, raw in cp[name].items():
            if key not in conv:
                raise ConfigError(f"{at(name, key)}: unknown key {key!r} in [{name}]")
            try:
                parsed[key] = conv[key](raw.strip())
            except ValueError as e:
                raise ConfigError(f"{at(name, key)}: bad value for {key!r}: {e}") from None
        sections[name] = parsed

    exp = sections.get("experiment")
    if exp is None:
        raise ConfigError(f"{where}:1: missing [experiment] section")
    kind = exp.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"{at('experiment', 'kind')}: unknown experiment kind {kind!r}")
    cfg = ExperimentConfig(
        kind=kind,
        name=exp.get("name", kind),
        seed=exp.get("seed"),
        scenarios=exp.get("scenarios", 1),
        jobs=exp.get("jobs", 1),
        sections=sections,
        source=source,
        text=text,
        lines=lines,
    )
    if "out" in exp:
        cfg.out = cfg.resolve(exp["out"])
    if cfg.scenarios < 1:
        raise ConfigError(f"{at('experiment', 'scenarios')}: scenarios must be at least 1")
    if cfg.jobs < 1:
        raise ConfigError(f"{at('experiment', 'jobs')}: jobs must be at least 1")
    cal = sections.get("calibration", {})
    for key in ("market_file", "sales_file", "competitors_file"):
        if key in cal and not cfg.resolve(cal[key]).exists():
            raise ConfigError(f"{at('calibration', key)}: file not found: {cal[key]}")
    if ("market_file" in cal) != ("sales_file" in cal):
        raise ConfigError(f"{at('calibration')}: market_file and sales_file go together")
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"{path}: {e.strerror}") from None
    return parse_config(text, path)


def validate(cfg: ExperimentConfig) -> None:
    """Build every object the run needs so that bad values fail before any work."""
    if cfg.kind in SEEDED or (cfg.kind == "table2" and "figure_reaction" in cfg.section("duopoly")):
        if cfg.seed is None:
            raise ConfigError(
                f"{cfg.source or '<config>'}:{cfg.lines.get(('experiment', ''), 1)}: "
                f"experiment {cfg.kind!r} needs an explicit seed"
            )
    try:
        params = solver_params(cfg)
        demand(cfg)
        if cfg.kind in ("simulate", "self_play", "calibrate"):
            scenario(cfg, params)
        if cfg.kind in ("table1",):
            for fam in cfg.section("table1").get("families", ("i", "ii", "iii")):
                for pi in cfg.section("table1").get("pis", (0.01, 0.03, 0.1, 0.3)):
                    ScenarioConfig(fam, pi=pi)
        if cfg.kind in ("table2", "table3"):
            duopoly_setup(cfg, 0.5)
    except (ValueError, KeyError) as e:
        raise ConfigError(f"{cfg.source or '<config>'}: {e}") from None


# -- object builders -------------------------------------------------------------


def solver_params(cfg: ExperimentConfig, duopoly: bool = False) -> SolverParams:
    s = cfg.section("solver")
    if duopoly:
        base = dict(T=100, N=10, c=3.0, l=0.01, delta=0.9995, A=tuple(range(1, 121)))
    else:
        base = dict(T=100, N=10, c=3.0, l=0.01, delta=0.9995, A=tuple(price_grid(0.01, 20.0, 0.01)))
    base.update(s)
    return SolverParams(**base)


def demand(cfg: ExperimentConfig) -> DemandModel:
    s = cfg.section("demand")
    if not s:
        return example_model(10.0)
    if set(s) < {"features", "beta", "d"}:
        raise DemandError("[demand] needs features, beta and d")
    return model_from_section(s)


def scenario(cfg: ExperimentConfig, params: SolverParams, **over) -> ScenarioConfig:
    s = dict(cfg.section("market"))
    s.update(over)
    s.setdefault("family", "no_trend")
    return ScenarioConfig(T=params.T, c=params.c, seed=cfg.seed or 0, **s)


def situation(cfg: ExperimentConfig) -> MarketSituation:
    s = cfg.section("situation")
    return MarketSituation(s.get("time", 0.0), s.get("competitors", EXAMPLE_PRICES))


def duopoly_setup(cfg: ExperimentConfig, reaction: float) -> tuple[ResponseFunction, DuopolyParams, DemandModel]:
    s = cfg.section("duopoly")
    params = solver_params(cfg, duopoly=True)
    F = ResponseFunction(eps=s.get("eps", 1.0), floor=s.get("floor", params.c))
    m = demand(cfg)
    return F, DuopolyParams(reaction, params, m.d), m


# -- runners ---------------------------------------------------------------------


def _run_demand_curve(cfg, out: Path) -> list[str]:
    params = solver_params(cfg)
    rows = demand_curve(demand(cfg), params.grid, situation(cfg), params.c)
    best = int(np.argmax(rows[:, 2]))
    with open(out / "demand_curve.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["price", "probability", "expected_profit", "argmax"])
        for i, (a, p, g) in enumerate(rows):
            w.writerow([_num(a), _num(p), _num(g), int(i == best)])
    return ["demand_curve.csv"]


def _run_solve_policy(cfg, out: Path) -> list[str]:
    params = solver_params(cfg)
    m = demand(cfg)
    s = situation(cfg)
    if params.z > 0:
        V, P = solve_with_adjustment_cost(s, params, m)
    else:
        V, P = solve_value(s, params, m, full_grid=True)
    write_tables_csv(V, P, out / "policy.csv")
    return ["policy.csv"]


def _summary_csv(runs: list[MarketRun], path: Path, tail: int | None = None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        head = ["run_id", "firm_id", "profit"] + (["tail_mean_price"] if tail else [])
        w.writerow(head)
        for r in runs:
            for f in range(r.prices.shape[1]):
                if np.isnan(r.profit[f]):
                    continue
                row = [r.run_id, f, _num(r.profit[f])]
                if tail:
                    cut = r.times >= r.prices.shape[0] / r.H - tail
                    seg = r.prices[cut, f]
                    seg = seg[~np.isnan(seg)]
                    row.append(_num(seg.mean()) if seg.size else "")
                w.writerow(row)


def _run_simulate(cfg, out: Path) -> list[str]:
    params = solver_params(cfg)
    m = demand(cfg)
    runs = [simulate_heuristic_run(scenario(cfg, params).with_stream(k), params, m, k)
            for k in range(cfg.scenarios)]
    write_runs_csv(runs, out / "runs.csv")
    _summary_csv(runs, out / "summary.csv")
    return ["runs.csv", "summary.csv"]


def _run_self_play(cfg, out: Path) -> list[str]:
    params = solver_params(cfg)
    m = demand(cfg)
    over = {} if "family" in cfg.section("market") else {"family": "self_play"}
    runs = [self_play(scenario(cfg, params, **over).with_stream(k), params, m, k)
            for k in range(cfg.scenarios)]
    write_runs_csv(runs, out / "runs.csv")
    _summary_csv(runs, out / "summary.csv", tail=50)
    return ["runs.csv", "summary.csv"]


def _table1_task(args) -> StrategyReport:
    sc, params, m = args
    return compare_strategies(gen_trajectories(sc), params, m)


def table1_reports(
    family: str, pi: float, scenarios: int, seed: int, params: SolverParams, m: DemandModel,
    jobs: int = 1, base: dict | None = None,
) -> list[StrategyReport]:
    """Strategy values on ``scenarios`` seeded trajectories; scenario ``k`` uses stream ``(k,)``.

    Cells share streams, so every (family, pi) cell starts from the same initial prices.
    """
    base = dict(base or {})
    base.pop("family", None)
    base.pop("pi", None)
    tasks = [(ScenarioConfig(family, T=params.T, pi=pi, seed=seed, stream=(k,), **base), params, m)
             for k in range(scenarios)]
    if jobs <= 1:
        return [_table1_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(_table1_task, tasks, chunksize=max(1, scenarios // (4 * jobs))))


def _run_table1(cfg, out: Path) -> list[str]:
    params = solver_params(cfg)
    m = demand(cfg)
    t1 = cfg.section("table1")
    rows = []
    with open(out / "table1_scenarios.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scenario_family", "pi", "scenario", "V_A", "V_B", "V_C", "V_D", "V_E",
                    "fixed_price", "hard_violation", "c_below_d"])
        for fam in t1.get("families", ("i", "ii", "iii")):
            for pi in t1.get("pis", (0.01, 0.03, 0.1, 0.3)):
                reps = table1_reports(fam, pi, cfg.scenarios, cfg.seed, params, m, cfg.jobs,
                                      cfg.section("market"))
                label = ScenarioConfig(fam).family
                rows.append(Table1Row.from_reports(label, pi, reps))
                for k, r in enumerate(reps):
                    w.writerow([label, repr(pi), k] + [_num(v) for v in (r.V_A, r.V_B, r.V_C, r.V_D, r.V_E)]
                               + [_num(r.fixed_price), int(r.hard_violation), int(not r.lemma["C>=D"])])
    write_table1_csv(rows, out / "table1.csv")
    return ["table1.csv", "table1_scenarios.csv"]


def _run_table2(cfg, out: Path) -> list[str]:
    s = cfg.section("duopoly")
    F, dp, m = duopoly_setup(cfg, 0.5)
    rows = comparison_table(F, dp, m, s.get("reactions", (0.1, 0.9)), s.get("ns", (1, 2, 3, 5, 7, 10)),
                            s.get("price", 50.0))
    write_table2_csv(rows, out / "table2.csv")
    files = ["table2.csv"]
    if "figure_reaction" in s:
        fdp = dp.with_reaction(s["figure_reaction"])
        tabs = {
            "optimal": solve_optimal_response(F, fdp, m),
            "naive": solve_duopoly_heuristic(build_conditional_naive(fdp, m), fdp, m),
            "accurate": solve_duopoly_heuristic(build_conditional_accurate(F, fdp, m), fdp, m),
        }
        write_policy_csv(tabs, out / "duopoly_policy.csv")
        T = s.get("figure_periods", fdp.params.T)
        paths = {k: simulate_duopoly_path(v, F, fdp, m, cfg.seed, T=T, p0=s.get("price", 50.0))
                 for k, v in tabs.items()}
        write_paths_csv(paths, out / "duopoly_paths.csv")
        files += ["duopoly_policy.csv", "duopoly_paths.csv"]
    return files


def _run_table3(cfg, out: Path) -> list[str]:
    s = cfg.section("duopoly")
    F, dp, m = duopoly_setup(cfg, 0.5)
    rows = reaction_time_study(
        F, dp, m, s.get("reactions", (0.1, 0.3, 0.5, 0.55, 0.7, 0.9)), s.get("ns", (1, 5, 10)),
        s.get("price", 50.0), s.get("benchmark", 0.5),
    )
    write_table3_csv(rows, out / "table3.csv")
    return ["table3.csv"]


def _run_calibrate(cfg, out: Path) -> list[str]:
    s = cfg.section("calibration")
    params = solver_params(cfg)
    m = demand(cfg)
    if "market_file" in s:
        comp = cfg.resolve(s["competitors_file"]) if "competitors_file" in s else None
        try:
            log = load_observations(cfg.resolve(s["market_file"]), cfg.resolve(s["sales_file"]), comp)
        except CalibrationError as e:
            raise ConfigError(str(e)) from None
        truth = None
    else:
        log = generate_synthetic_log(m, scenario(cfg, params), s.get("n_obs", 100_000), cfg.seed)
        truth = m.beta
    fit = fit_logistic(log, m.spec, s.get("l2", 0.0))
    d = estimate_intensity(log, fit.model(1.0, m.spec))
    write_fit(fit, out / "fit.txt", d)
    write_coefficients_csv(fit, out / "coefficients.csv", truth)
    files = ["fit.txt", "coefficients.csv"]
    if "sizes" in s:
        seeds = tuple(cfg.seed + k for k in range(s.get("sweep_seeds", 10)))
        rows = consistency_sweep(m, scenario(cfg, params), s["sizes"], seeds, s.get("l2", 0.0))
        with open(out / "consistency.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n_obs", "feature", "median_abs_error"])
            for r in rows:
                w.writerow([r["n_obs"], r["feature"], _num(r["median_abs_error"])])
        files.append("consistency.csv")
    return files


def _run_adjustment(cfg, out: Path) -> list[str]:
    params = solver_params(cfg)
    m = demand(cfg)
    s = situation(cfg)
    a = cfg.section("adjustment")
    zs = a.get("z_values", (0.0, 0.5, 2.0, 10 * max(params.A) * params.N))
    paths = a.get("paths", 100)
    p_hat = dict(zip(params.A, m.probabilities(params.grid, s)))
    with open(out / "adjustment_cost.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["z", "value", "mean_price_changes", "max_distinct_prices"])
        for i, z in enumerate(zs):
            V, P = solve_with_adjustment_cost(s, params.replace(z=z), m)
            rng = np.random.default_rng([cfg.seed, i])
            changes, distinct = [], 0
            for _ in range(paths):
                n, prev, posted = params.N, 0.0, []
                for t in range(params.T):
                    if n <= 0:
                        break
                    price = P.at(float(t), n, prev)
                    posted.append(price)
                    n -= min(n, int(rng.poisson(m.d * p_hat[price])))
                    prev = price
                changes.append(sum(1 for x, y in zip(posted, posted[1:]) if x != y))
                distinct = max(distinct, len(set(posted)))
            w.writerow([_num(z), _num(V.at(0.0, params.N, 0.0)), _num(float(np.mean(changes))), distinct])
    return ["adjustment_cost.csv"]


RUNNERS = {
    "demand_curve": _run_demand_curve,
    "solve_policy": _run_solve_policy,
    "simulate": _run_simulate,
    "table1": _run_table1,
    "table2": _run_table2,
    "table3": _run_table3,
    "self_play": _run_self_play,
    "calibrate": _run_calibrate,
    "adjustment_cost_study": _run_adjustment,
}
AUXILIARY = {"table1_scenarios.csv", "duopoly_policy.csv", "duopoly_paths.csv"}


def output_dir(cfg: ExperimentConfig, override: str | Path | None = None) -> Path:
    if override:
        return Path(override)
    if cfg.out is not None:
        return cfg.out
    root = os.environ.get(OUT_ENV)
    return Path(root or "dynaprice_runs") / cfg.name


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _versions() -> dict[str, str]:
    import numba
    import scipy

    return {
        "dynaprice": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
    }


def run_experiment(cfg: ExperimentConfig, out: str | Path | None = None) -> Path:
    """Validate, run and write the manifest; returns the output directory."""
    validate(cfg)
    dest = output_dir(cfg, out)
    dest.mkdir(parents=True, exist_ok=True)
    try:
        with np.errstate(divide="raise", invalid="raise"):
            files = RUNNERS[cfg.kind](cfg, dest)
    except ConfigError:
        raise
    except (FloatingPointError, np.linalg.LinAlgError, CalibrationError, SolverError) as e:
        raise NumericalError(str(e)) from e
    manifest = {
        "kind": cfg.kind,
        "name": cfg.name,
        "seed": cfg.seed,
        "scenarios": cfg.scenarios,
        "config_sha256": hashlib.sha256(cfg.text.encode()).hexdigest(),
        "versions": _versions(),
        "files": {f: _sha256(dest / f) for f in files},
        "auxiliary": sorted(AUXILIARY.intersection(files)),
    }
    (dest / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return dest


def _num(x) -> str:
    x = float(x)
    if math.isnan(x):
        return ""
    return repr(round(x, 10))


# -- verification ----------------------------------------------------------------


@dataclass
class Diff:
    file: str
    row: str
    column: str
    expected: str
    actual: str
    tolerance: str


@dataclass
class VerifyReport:
    compared: list[str]
    missing: list[str]
    diffs: list[Diff]

    @property
    def ok(self) -> bool:
        return not self.missing and not self.diffs

    def lines(self) -> list[str]:
        out = [f"compared: {', '.join(self.compared) or '(none)'}"]
        out += [f"missing baseline: {m}" for m in self.missing]
        out += [
            f"{d.file} [{d.row}] {d.column}: expected {d.expected}, got {d.actual} (tolerance {d.tolerance})"
            for d in self.diffs
        ]
        out.append("OK" if self.ok else f"FAILED: {len(self.diffs)} cell(s), {len(self.missing)} missing")
        return out


def packaged_baselines() -> Path:
    return Path(str(resources.files("dynaprice") / "baselines"))


def _read_csv(path: Path) -> tuple[list[str], list[dict[str, str]]]:
    with open(path, newline="") as fh:
        r = csv.DictReader(fh)
        return list(r.fieldnames or []), list(r)


def _within(expected: str, actual: str, tol: dict | None) -> bool:
    if expected == actual:
        return True
    try:
        e, a = float(expected), float(actual)
    except ValueError:
        return False
    if tol is None:
        return e == a
    if "abs" in tol and abs(a - e) <= tol["abs"] + 1e-12:
        return True
    if "rel" in tol and abs(a - e) <= tol["rel"] * abs(e) + 1e-12:
        return True
    return False


def verify(baseline_dir: str | Path, run_dir: str | Path, tolerances: dict | None = None) -> VerifyReport:
    """Compare a run's tables cell by cell against a baseline directory.

    Tables are matched on key columns and compared with per-column
    tolerances from the baseline manifest (or ``tolerances``); columns
    without a tolerance must match exactly. Blank baseline cells are skipped.
    """
    base, run = Path(baseline_dir), Path(run_dir)
    for d in (base, run):
        if not (d / "manifest.json").exists():
            raise ConfigError(f"{d}: no manifest.json")
    bman = json.loads((base / "manifest.json").read_text())
    rman = json.loads((run / "manifest.json").read_text())
    specs = dict(bman.get("tables", {}))
    if tolerances:
        specs.update(tolerances)
    aux = set(rman.get("auxiliary", []))
    compared, missing, diffs = [], [], []
    for f in rman.get("files", {}):
        if not f.endswith(".csv"):
            continue
        if not (base / f).exists():
            if f not in aux:
                missing.append(f)
            continue
        compared.append(f)
        spec = specs.get(f, {})
        bcols, brows = _read_csv(base / f)
        rcols, rrows = _read_csv(run / f)
        keys = spec.get("keys") or []
        tols = spec.get("tolerances", {})

        def key(row, i):
            return tuple(row.get(k, "") for k in keys) if keys else (i,)

        index = {key(r, i): r for i, r in enumerate(rrows)}
        for i, brow in enumerate(brows):
            k = key(brow, i)
            label = ", ".join(f"{a}={b}" for a, b in zip(keys, k)) if keys else f"row {i + 1}"
            rrow = index.get(k)
            if rrow is None:
                diffs.append(Diff(f, label, "*", "row", "absent", "-"))
                continue
            for col in bcols:
                if col in keys:
                    continue
                ev = brow.get(col, "")
                if ev == "":
                    continue
                av = rrow.get(col)
                if av is None:
                    diffs.append(Diff(f, label, col, ev, "absent", "-"))
                    continue
                tol = tols.get(col)
                if not _within(ev, av, tol):
                    diffs.append(Diff(f, label, col, ev, av, json.dumps(tol) if tol else "exact"))
    return VerifyReport(compared, missing, diffs)


def list_experiments() -> list[tuple[str, str]]:
    """Packaged configs as ``(name, kind)``."""
    root = resources.files("dynaprice") / "configs"
    out = []
    for entry in sorted(root.iterdir(), key=lambda p: p.name):
        if entry.name.endswith(".ini"):
            cfg = parse_config(entry.read_text())
            out.append((entry.name[:-4], cfg.kind))
    return out


def packaged_config(name: str) -> Path:
    p = Path(str(resources.files("dynaprice") / "configs" / f"{name}.ini"))
    if not p.exists():
        raise ConfigError(f"no packaged experiment named {name!r}")
    return p
