"""Replicated simulation studies: scenario cells x sample sizes x replicates,
each replicate scored by a suite of estimators, with bias/SE aggregation.

Every replicate draws from its own random stream keyed by
``(seed, cell, n-index, replicate)``, so results do not depend on the number
of worker threads or on execution order.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import diagnostics as dg
from . import estimators as est
from . import generators as gen
from . import summary as sm

WEAK_VS_STRONG = "WeakVsStrong"
NON_GAUSS_BETA = "NonGaussBeta"
BINOMIAL_PREDICTORS = "BinomialPredictors"
WEIGHTING = "Weighting"
POP_STRAT = "PopStrat"
CUSTOM = "Custom"
SCENARIOS = (WEAK_VS_STRONG, NON_GAUSS_BETA, BINOMIAL_PREDICTORS, WEIGHTING, POP_STRAT, CUSTOM)

TWICE_N = "twice_n"
MAX_MISSING_FRACTION = 0.01

ROW_FIELDS = ("scenario", "estimator", "n", "m", "rep", "h2_hat")
AGG_FIELDS = ("scenario", "estimator", "n", "m", "mean", "bias", "se", "mc_se", "n_ok")

# Stream tags keep the data and panel draws of a replicate apart from the
# once-per-cell draws (stratification shifts f).
_DATA, _PANEL, _CELL = 0, 1, 2


class ExperimentError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Cells
# ---------------------------------------------------------------------------

def _fmt(v) -> str:
    return f"{v:g}"


@dataclass(frozen=True)
class Cell:
    """One scenario value: predictor law, effect law and optional stratification."""

    correlation: dict
    predictors: dict = field(default_factory=lambda: {"type": "gaussian"})
    effects: dict = field(default_factory=lambda: {"type": "gaussian"})
    stratification: Optional[dict] = None
    label: Optional[str] = None

    @classmethod
    def from_dict(cls, d: dict) -> "Cell":
        unknown = set(d) - {"correlation", "predictors", "effects", "stratification", "label"}
        if unknown:
            raise ValueError(f"unknown cell keys {sorted(unknown)}")
        if "correlation" not in d:
            raise ValueError("cell needs a 'correlation' entry")
        pred = d.get("predictors", {"type": "gaussian"})
        if isinstance(pred, str):
            pred = {"type": pred}
        cell = cls(dict(d["correlation"]), dict(pred), dict(d.get("effects", {"type": "gaussian"})),
                   None if d.get("stratification") is None else dict(d["stratification"]), d.get("label"))
        cell.correlation_spec()
        cell.distribution()
        cell.coeff_law(0.2, 10)
        return cell

    def to_dict(self) -> dict:
        d = {"correlation": self.correlation, "predictors": self.predictors, "effects": self.effects}
        if self.stratification is not None:
            d["stratification"] = self.stratification
        if self.label is not None:
            d["label"] = self.label
        return d

    def correlation_spec(self) -> gen.CorrelationSpec:
        c = self.correlation
        kind = c.get("type")
        if kind == "identity":
            return gen.Identity()
        if kind == "ar1":
            return gen.Ar1(float(c["rho"]))
        if kind == "equicorr":
            return gen.EquiCorr(float(c["rho"]))
        if kind == "mixed_ar1":
            return gen.MixedAr1(float(c["rho_first"]), float(c["rho_second"]))
        raise ValueError(f"unknown correlation type {kind!r}")

    def distribution(self):
        kind = self.predictors.get("type")
        if kind == "gaussian":
            return gen.Gaussian()
        if kind == "binomial":
            return gen.Binomial(float(self.predictors.get("p", 0.5)))
        raise ValueError(f"unknown predictor type {kind!r}")

    def coeff_law(self, h2: float, m: int) -> gen.CoeffLaw:
        e = self.effects
        kind = e.get("type")
        if kind == "gaussian":
            v = gen.GaussianEffects()
        elif kind == "t":
            v = gen.StudentT(float(e["nu"]))
        elif kind == "mixture":
            p = float(e["p0"]) / m if "p0" in e else float(e["p"])
            v = gen.Mixture(float(e["theta"]), p)
        else:
            raise ValueError(f"unknown effect type {kind!r}")
        return gen.CoeffLaw(v, h2, m)

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        c = self.correlation
        kind = c["type"]
        if kind == "identity":
            parts = ["identity"]
        elif kind == "mixed_ar1":
            parts = [f"mixed_ar1({_fmt(c['rho_first'])}/{_fmt(c['rho_second'])})"]
        else:
            parts = [f"{kind}({_fmt(c['rho'])})"]
        if self.predictors.get("type") == "binomial":
            parts.insert(0, "binomial")
        e = self.effects
        if e["type"] == "t":
            parts.append(f"t({_fmt(e['nu'])})")
        elif e["type"] == "mixture":
            key = "p0" if "p0" in e else "p"
            parts.append(f"mixture({_fmt(e['theta'])};{key}={_fmt(e[key])})")
        if self.stratification is not None:
            parts.append(f"var_f={_fmt(self.stratification['var_f'])}")
        return "/".join(parts)


# ---------------------------------------------------------------------------
# Config
# ---------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    scenario: str
    n_grid: Tuple[int, ...]
    cells: Tuple[Cell, ...]
    estimators: Tuple[str, ...]
    m_rule: Union[str, int] = TWICE_N
    h2: float = 0.2
    replicates: int = 1000
    seed: int = 0
    threads: Optional[int] = None

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        self.n_grid = tuple(int(n) for n in self.n_grid)
        self.cells = tuple(c if isinstance(c, Cell) else Cell.from_dict(c) for c in self.cells)
        self.estimators = tuple(self.estimators)
        if not self.n_grid or min(self.n_grid) < 2:
            raise ValueError("n_grid must be nonempty with every n >= 2")
        if not self.cells:
            raise ValueError("at least one cell is required")
        if not self.estimators:
            raise ValueError("at least one estimator is required")
        for label in self.estimators:
            est.EstimatorSpec.from_label(label)
        if self.replicates < 2:
            raise ValueError("replicates must be at least 2")
        if not 0.0 <= self.h2 <= 1.0:
            raise ValueError("h2 must lie in [0, 1]")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.m_rule != TWICE_N and (not isinstance(self.m_rule, int) or self.m_rule < 1):
            raise ValueError(f"m_rule must be {TWICE_N!r} or a positive integer")
        names = [c.name for c in self.cells]
        if len(set(names)) != len(names):
            raise ValueError(f"cell labels must be distinct: {names}")

    def m_for(self, n: int) -> int:
        return 2 * n if self.m_rule == TWICE_N else int(self.m_rule)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "n_grid": list(self.n_grid),
            "m_rule": self.m_rule if self.m_rule == TWICE_N else {"fixed": self.m_rule},
            "h2": self.h2,
            "estimators": list(self.estimators),
            "replicates": self.replicates,
            "seed": self.seed,
            "cells": [c.to_dict() for c in self.cells],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        unknown = set(d) - {"scenario", "n_grid", "m_rule", "h2", "estimators", "replicates",
                            "seed", "cells", "threads", "profile"}
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        scenario = d.pop("scenario", None)
        if scenario is None:
            raise ValueError("config needs a 'scenario'")
        profile = d.pop("profile", "desk")
        m_rule = d.get("m_rule", TWICE_N)
        if isinstance(m_rule, dict):
            if set(m_rule) != {"fixed"}:
                raise ValueError(f"bad m_rule {m_rule!r}")
            m_rule = int(m_rule["fixed"])
        if m_rule is not None:
            d["m_rule"] = m_rule
        if scenario == CUSTOM:
            for key in ("n_grid", "cells", "estimators"):
                if key not in d:
                    raise ValueError(f"Custom scenario needs {key!r}")
            return cls(scenario=CUSTOM, **d)
        return scenario_config(scenario, profile, **d)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


_BASIC = ("gwash", "gwash-std", "ldsc", "ldsc-std")


def _scenario_defaults(scenario: str) -> dict:
    if scenario == WEAK_VS_STRONG:
        cells = [{"correlation": {"type": "ar1", "rho": 0.3}},
                 {"correlation": {"type": "equicorr", "rho": 0.2}}]
        return {"cells": cells, "estimators": _BASIC}
    if scenario == NON_GAUSS_BETA:
        cells = [{"correlation": {"type": "ar1", "rho": 0.3}, "effects": {"type": "t", "nu": nu}}
                 for nu in (2, 2.3, 2.5, 2.8, 3, 5)]
        return {"cells": cells, "estimators": _BASIC}
    if scenario == BINOMIAL_PREDICTORS:
        cells = [{"correlation": {"type": "ar1", "rho": 0.3}, "predictors": {"type": "binomial", "p": 0.5}},
                 {"correlation": {"type": "equicorr", "rho": 0.2}, "predictors": {"type": "binomial", "p": 0.5}}]
        return {"cells": cells, "estimators": _BASIC}
    if scenario == WEIGHTING:
        cells = [{"correlation": {"type": "mixed_ar1", "rho_first": 0.2, "rho_second": 0.9}}]
        return {"cells": cells, "estimators": ("gwash", "gwash-w", "ldsc", "ldsc-w",
                                               "gwash-std", "gwash-w-std", "ldsc-std", "ldsc-w-std")}
    if scenario == POP_STRAT:
        cells = [{"correlation": {"type": "ar1", "rho": 0.3},
                  "stratification": {"var_f": v, "sigma_xi": 0.3}} for v in (0.2, 0.3, 0.5)]
        return {"cells": cells, "estimators": ("gwash", "ldsc", "ldsc-free")}
    raise ValueError(f"no defaults for scenario {scenario!r}")


PROFILES = {
    "desk": {"n_grid": (250, 500), "replicates": 300},
    "full": {"n_grid": (200, 400, 600, 800, 1000), "replicates": 1000},
}


def scenario_config(scenario: str, profile: str = "desk", **overrides) -> ExperimentConfig:
    """Preset config for a named scenario; the ``full`` profile runs n up to
    1000 with 1000 replicates, the ``desk`` profile n <= 500 with 300."""
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}")
    kw = dict(PROFILES[profile])
    kw.update(_scenario_defaults(scenario))
    if scenario == POP_STRAT:
        kw["n_grid"] = (500,) if profile == "full" else (400,)
    kw.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(scenario=scenario, **kw)


# ---------------------------------------------------------------------------
# Streams and per-cell state
# ---------------------------------------------------------------------------

def replicate_streams(seed: int, cell: int, n_index: int, rep: int):
    """(data, panel) seed sequences for one replicate; disjoint by construction."""
    base = (cell, n_index, rep)
    return (np.random.SeedSequence(seed, spawn_key=base + (_DATA,)),
            np.random.SeedSequence(seed, spawn_key=base + (_PANEL,)))


def cell_stream(seed: int, cell: int, n_index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(cell, n_index, _CELL))


@dataclass
class _Setup:
    law: gen.PredictorLaw
    coeff: gen.CoeffLaw
    n: int
    m: int
    info: dict


def _cell_setup(config: ExperimentConfig, ci: int, ni: int) -> _Setup:
    cell = config.cells[ci]
    n = config.n_grid[ni]
    m = config.m_for(n)
    spec = cell.correlation_spec()
    coeff = cell.coeff_law(config.h2, m)
    info = {"scenario": cell.name, "n": n, "m": m, "bke": dg.bke_statistic(coeff)}
    if cell.stratification is not None:
        s = cell.stratification
        rng = np.random.default_rng(cell_stream(config.seed, ci, ni))
        f = math.sqrt(float(s["var_f"])) * rng.standard_normal(m)
        sigma_xi = float(s["sigma_xi"])
        spec = gen.Stratified(spec, f, sigma_xi)
        info["c_f"] = dg.stratification_constant(f)
        info["theoretical_bias"] = dg.popstrat_theoretical_bias(f, sigma_xi)
    return _Setup(gen.PredictorLaw(cell.distribution(), spec), coeff, n, m, info)


def _run_replicate(config: ExperimentConfig, setup: _Setup, specs, ci: int, ni: int, rep: int):
    data_ss, panel_ss = replicate_streams(config.seed, ci, ni, rep)
    rng_data = np.random.default_rng(data_ss)
    rng_panel = np.random.default_rng(panel_ss)
    data = gen.simulate_dataset(setup.law, setup.coeff, setup.n, rng_data)
    panel = gen.gen_predictors(setup.law, setup.n, setup.m, rng_panel)
    cache = {}
    out = []
    for spec in specs:
        std = spec.standardized_inputs
        try:
            if std not in cache:
                cache[std] = est.summaries_from_data(data.x, data.y, panel, standardized=std)
            stats, ld = cache[std]
            val = est.estimate(spec, stats, ld).h2_hat
        except (ArithmeticError, ValueError):
            val = math.nan
        out.append(val if math.isfinite(val) else math.nan)
    return out


def worker_count(config: Optional[ExperimentConfig] = None) -> int:
    """Threads from the config, else HERIT_THREADS, else 1."""
    if config is not None and config.threads:
        return max(1, int(config.threads))
    env = os.environ.get("HERIT_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"HERIT_THREADS must be an integer, got {env!r}") from None
    return 1


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Row:
    scenario: str
    estimator: str
    n: int
    m: int
    rep: int
    h2_hat: float


@dataclass(frozen=True)
class Aggregate:
    scenario: str
    estimator: str
    n: int
    m: int
    mean: float
    bias: float
    se: float
    mc_se: float
    n_ok: int


@dataclass
class ResultTable:
    rows: List[Row]
    h2: float
    cell_info: List[dict] = field(default_factory=list)

    def values(self, scenario: str, estimator: str, n: int) -> np.ndarray:
        return np.array([r.h2_hat for r in self.rows
                         if r.scenario == scenario and r.estimator == estimator and r.n == n])

    def rows_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(ROW_FIELDS)
        for r in self.rows:
            w.writerow([r.scenario, r.estimator, r.n, r.m, r.rep, repr(float(r.h2_hat))])
        return buf.getvalue()

    def write(self, out_dir) -> Tuple[Path, Path]:
        """Write ``rows.csv`` and ``aggregates.csv`` into ``out_dir``."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        rows_path, agg_path = out / "rows.csv", out / "aggregates.csv"
        rows_path.write_text(self.rows_csv(), encoding="utf-8", newline="")
        agg_path.write_text(aggregates_csv(summarize(self)), encoding="utf-8", newline="")
        return rows_path, agg_path


def summarize(table: ResultTable) -> List[Aggregate]:
    """Per (scenario, estimator, n, m) mean, bias, SE (ddof=1) and MC-SE of the mean.

    Missing replicates are excluded and reflected in ``n_ok``.
    """
    if not table.rows:
        raise ValueError("empty result table")
    groups: Dict[tuple, list] = {}
    for r in table.rows:
        groups.setdefault((r.scenario, r.estimator, r.n, r.m), []).append(r.h2_hat)
    out = []
    for key, vals in groups.items():
        v = np.asarray(vals, dtype=float)
        v = v[np.isfinite(v)]
        if v.size < 2:
            raise ValueError(f"cell {key} has fewer than two usable replicates")
        mean = float(np.mean(v))
        se = float(np.std(v, ddof=1))
        out.append(Aggregate(*key, mean, mean - table.h2, se, se / math.sqrt(v.size), int(v.size)))
    return out


def aggregates_csv(aggs: Sequence[Aggregate]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(AGG_FIELDS)
    for a in aggs:
        w.writerow([a.scenario, a.estimator, a.n, a.m, repr(a.mean), repr(a.bias),
                    repr(a.se), repr(a.mc_se), a.n_ok])
    return buf.getvalue()


def read_rows_csv(path, h2: float) -> ResultTable:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != ROW_FIELDS:
            raise sm.FormatError(path, 1, f"expected header {','.join(ROW_FIELDS)}")
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            try:
                s, e, n, m, rep, h = rec
                rows.append(Row(s, e, int(n), int(m), int(rep), float(h)))
            except ValueError as exc:
                raise sm.FormatError(path, lineno, str(exc)) from None
    return ResultTable(rows, h2)


def read_aggregates_csv(path) -> List[Aggregate]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != AGG_FIELDS:
            raise sm.FormatError(path, 1, f"expected header {','.join(AGG_FIELDS)}")
        out = []
        for lineno, rec in enumerate(reader, start=2):
            try:
                s, e, n, m, mean, bias, se, mc_se, n_ok = rec
                out.append(Aggregate(s, e, int(n), int(m), float(mean), float(bias),
                                     float(se), float(mc_se), int(n_ok)))
            except ValueError as exc:
                raise sm.FormatError(path, lineno, str(exc)) from None
    if not out:
        raise sm.FormatError(path, 2, "no data rows")
    return out


# ---------------------------------------------------------------------------
# Runner
# ---------------------------------------------------------------------------

def run_experiment(config: ExperimentConfig, threads: Optional[int] = None) -> ResultTable:
    """Run every (cell, n, replicate) and score it with every estimator.

    Estimator failures become NaN rows; a cell with more than 1% of its
    replicates missing for some estimator raises ExperimentError.
    """
    specs = [est.EstimatorSpec.from_label(lbl) for lbl in config.estimators]
    setups = {(ci, ni): _cell_setup(config, ci, ni)
              for ci in range(len(config.cells)) for ni in range(len(config.n_grid))}
    tasks = [(ci, ni, rep) for (ci, ni) in setups for rep in range(config.replicates)]
    workers = threads if threads is not None else worker_count(config)

    def job(t):
        ci, ni, rep = t
        return _run_replicate(config, setups[(ci, ni)], specs, ci, ni, rep)

    if workers <= 1:
        results = [job(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, tasks))

    rows = []
    missing: Dict[tuple, int] = {}
    for (ci, ni, rep), vals in zip(tasks, results):
        s = setups[(ci, ni)]
        for label, v in zip(config.estimators, vals):
            rows.append(Row(s.info["scenario"], label, s.n, s.m, rep, v))
            if math.isnan(v):
                missing[(ci, ni, label)] = missing.get((ci, ni, label), 0) + 1

    for (ci, ni, label), count in sorted(missing.items()):
        if count > MAX_MISSING_FRACTION * config.replicates:
            s = setups[(ci, ni)]
            raise ExperimentError(
                f"{s.info['scenario']} n={s.n} {label}: {count}/{config.replicates} replicates failed")
    return ResultTable(rows, config.h2, [setups[k].info for k in sorted(setups)])
