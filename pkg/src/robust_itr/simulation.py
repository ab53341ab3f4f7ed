"""Synthetic scenarios and the Monte Carlo replication harness.

Families ``model_I`` and ``model_II`` use three correlated normal covariates
and a linear contrast ``beta0 = (0, 1, -1, 1)``; ``model_I`` has a nonlinear
baseline that the linear working model misspecifies. The ``interaction``
family uses two uniform covariates, an error scale that grows with treatment
``1 + A d0 X1^2`` and a quadratic contrast map.

Every replicate draws from its own stream keyed on ``(seed, n, rep)``, so
cells are reproducible one replicate at a time and independent of the
number of worker threads.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .data import Dataset, FeatureMap, ModelSpec
from .errors import ScenarioError, SolverError
from .learners import fit_rr
from .losses import LossSpec
from .policy import ERROR_LAWS, TruthModel, delta_metrics, pcd
from .solver import SolverConfig

log = logging.getLogger(__name__)

FAMILIES = ("model_I", "model_II", "interaction")
SIGMA_KINDS = ("homogeneous", "heterogeneous_x", "treatment_interacted")
PROPENSITIES = ("constant_half", "expit_diff")

BETA0 = (0.0, 1.0, -1.0, 1.0)
THETA0 = (0.5, 2.0, -1.0)
CORR_BASE = 0.5

EXPLOSION_THRESHOLD = 1e4

METHODS = {
    "LS": LossSpec.squared(),
    "P(0.5)": LossSpec.pinball(0.5),
    "P(0.25)": LossSpec.pinball(0.25),
    "Huber": LossSpec.huber("auto"),
}
DEFAULT_METHODS = tuple(METHODS)


@dataclass(frozen=True)
class Scenario:
    family: str
    error_law: str
    sigma_kind: str = "homogeneous"
    propensity: str = "constant_half"
    n: int = 400
    replications: int = 200
    validation_size: int = 10000
    seed: int = 0
    d0: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ScenarioError(f"unknown family {self.family!r}")
        if self.error_law not in ERROR_LAWS:
            raise ScenarioError(f"unknown error law {self.error_law!r}")
        if self.sigma_kind not in SIGMA_KINDS:
            raise ScenarioError(f"unknown sigma kind {self.sigma_kind!r}")
        if self.propensity not in PROPENSITIES:
            raise ScenarioError(f"unknown propensity law {self.propensity!r}")
        if (self.family == "interaction") != (self.sigma_kind == "treatment_interacted"):
            raise ScenarioError(
                "the interaction family requires treatment-interacted sigma and vice versa"
            )
        if self.sigma_kind != "treatment_interacted" and self.d0 != 0:
            raise ScenarioError("d0 is only used with treatment-interacted sigma")
        if self.n < 2 or self.replications < 1 or self.validation_size < 1:
            raise ScenarioError("n, replications and validation_size must be positive")

    @property
    def p(self) -> int:
        return 2 if self.family == "interaction" else 3

    @property
    def label(self) -> str:
        parts = [self.family, self.error_law, self.sigma_kind, self.propensity, f"n{self.n}"]
        if self.family == "interaction":
            parts.insert(3, f"d{self.d0:g}")
        return "/".join(parts)

    def truth(self) -> TruthModel:
        return TruthModel(
            baseline=self.family,
            beta0=np.array(THETA0 if self.family == "interaction" else BETA0),
            error_law=self.error_law,
            sigma=self.sigma_kind,
            d0=self.d0,
            propensity=self.propensity,
        )

    def model_spec(self) -> ModelSpec:
        contrast = FeatureMap.quadratic(2) if self.family == "interaction" else FeatureMap.linear(3)
        return ModelSpec(FeatureMap.linear(self.p), contrast, 2)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        try:
            return cls(**d)
        except TypeError as exc:
            raise ScenarioError(str(exc)) from None


def _rng(scenario: Scenario, rep: int, stream: int) -> np.random.Generator:
    ss = np.random.SeedSequence(scenario.seed, spawn_key=(scenario.n, rep, stream))
    return np.random.default_rng(ss)


def correlation_cholesky(p: int) -> np.ndarray:
    idx = np.arange(p)
    return np.linalg.cholesky(CORR_BASE ** np.abs(idx[:, None] - idx[None, :]))


def draw_covariates(scenario: Scenario, m: int, rng: np.random.Generator) -> np.ndarray:
    if scenario.family == "interaction":
        return rng.uniform(-1.0, 1.0, size=(m, 2))
    return rng.standard_normal((m, 3)) @ correlation_cholesky(3).T


def draw_errors(law: str, m: int, rng: np.random.Generator) -> np.ndarray:
    if law == "normal":
        return rng.standard_normal(m)
    if law == "log_normal":
        return np.exp(rng.standard_normal(m))
    if law == "cauchy":
        return rng.standard_cauchy(m)
    if law == "gamma_centered":
        return rng.gamma(1.0, 1.0, m) - 1.0
    raise ScenarioError(f"unknown error law {law!r}")


def generate(scenario: Scenario, rep: int) -> tuple[Dataset, TruthModel]:
    """Training data for replicate ``rep`` and the truth it was drawn from."""
    truth = scenario.truth()
    rng = _rng(scenario, rep, 0)
    x = draw_covariates(scenario, scenario.n, rng)
    pi = truth.propensity_of(x)
    a = (rng.uniform(size=scenario.n) < pi).astype(int)
    eps = draw_errors(scenario.error_law, scenario.n, rng)
    y = truth.phi0(x) + (a - pi) * truth.contrast(x) + truth.sigma_of(x, a) * eps
    return Dataset(y, x, a, pi), truth


def validation_covariates(scenario: Scenario, rep: int) -> np.ndarray:
    return draw_covariates(scenario, scenario.validation_size, _rng(scenario, rep, 1))


@dataclass
class CellResult:
    scenario: str
    method: str
    n: int
    replications: int
    failures: int = 0
    mse_mean: float | None = None
    mse_se: float | None = None
    mse_suppressed: bool = False
    pcd_mean: float | None = None
    pcd_se: float | None = None
    delta_mu: float | None = None
    delta_mu_se: float | None = None
    delta_05: float | None = None
    delta_05_se: float | None = None
    delta_025: float | None = None
    delta_025_se: float | None = None
    extra: dict = field(default_factory=dict)

    def records(self) -> list[dict]:
        """Flat ``{scenario, method, n, metric, value, mc_se}`` rows."""
        out = []
        for metric in ("mse", "pcd", "delta_mu", "delta_05", "delta_025"):
            key = "mse_mean" if metric == "mse" else ("pcd_mean" if metric == "pcd" else metric)
            se_key = f"{metric}_se"
            value = getattr(self, key)
            if value is None and not (metric == "mse" and self.mse_suppressed):
                continue
            out.append(
                {
                    "scenario": self.scenario,
                    "method": self.method,
                    "n": self.n,
                    "metric": metric,
                    "value": value,
                    "mc_se": getattr(self, se_key),
                }
            )
        return out


def _mean_se(v):
    v = np.asarray(v, float)
    if v.size == 0:
        return None, None
    se = float(np.std(v, ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return float(np.mean(v)), se


def running_mean_exceeds(values, threshold: float = EXPLOSION_THRESHOLD) -> bool:
    v = np.asarray(values, float)
    if v.size == 0:
        return False
    run = np.cumsum(v) / np.arange(1, v.size + 1)
    return bool(np.any(~np.isfinite(run)) or np.any(run > threshold))


def _replicate(scenario: Scenario, rep: int, methods, cfg):
    data, truth = generate(scenario, rep)
    vx = validation_covariates(scenario, rep)
    spec = scenario.model_spec()
    study_one = scenario.family != "interaction"
    out = {}
    for name in methods:
        try:
            model = fit_rr(data, spec, METHODS[name], cfg)
        except SolverError as exc:
            log.warning("%s rep %d %s failed: %s", scenario.label, rep, name, exc)
            out[name] = None
            continue
        rule = model.rule()
        rec = delta_metrics(rule, truth, vx, taus=(0.5, 0.25))
        if study_one:
            rec["mse"] = float(np.sum((model.beta[0] - truth.beta0) ** 2))
            rec["pcd"] = pcd(rule, truth, vx)
        out[name] = rec
    return out


def run_cell(
    scenario: Scenario,
    methods=DEFAULT_METHODS,
    cfg: SolverConfig | None = None,
    jobs: int = 1,
) -> dict[str, CellResult]:
    """Fit every method on every replicate and aggregate the metrics."""
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ScenarioError(f"unknown methods {unknown}; choose from {list(METHODS)}")
    reps = range(scenario.replications)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            per_rep = list(ex.map(lambda r: _replicate(scenario, r, methods, cfg), reps))
    else:
        per_rep = [_replicate(scenario, r, methods, cfg) for r in reps]

    results = {}
    for name in methods:
        recs = [r[name] for r in per_rep if r[name] is not None]
        cell = CellResult(
            scenario=scenario.label,
            method=name,
            n=scenario.n,
            replications=len(recs),
            failures=len(per_rep) - len(recs),
        )
        if recs and "mse" in recs[0]:
            mse = [r["mse"] for r in recs]
            cell.mse_suppressed = running_mean_exceeds(mse)
            cell.extra["mse_raw_mean"] = float(np.mean(mse))
            if not cell.mse_suppressed:
                cell.mse_mean, cell.mse_se = _mean_se(mse)
            cell.pcd_mean, cell.pcd_se = _mean_se([r["pcd"] for r in recs])
        if recs and "delta_mu" in recs[0]:
            cell.delta_mu, cell.delta_mu_se = _mean_se([r["delta_mu"] for r in recs])
        cell.delta_05, cell.delta_05_se = _mean_se([r["delta_0.5"] for r in recs])
        cell.delta_025, cell.delta_025_se = _mean_se([r["delta_0.25"] for r in recs])
        results[name] = cell
    return results


# ---------------------------------------------------------------------------
# table reproduction

SIZES = (100, 200, 400, 800)

TABLES = {
    "table1": dict(family="model_I", propensity="constant_half"),
    "table2": dict(family="model_II", propensity="constant_half"),
    "table3": dict(family="interaction", propensity="constant_half"),
    "table6": dict(family="model_I", propensity="expit_diff"),
    "table7": dict(family="model_II", propensity="expit_diff"),
    "table8": dict(family="interaction", propensity="expit_diff"),
}


@dataclass(frozen=True)
class TableConfig:
    """Which tables to build and at what scale."""

    tables: tuple[str, ...] = ("table1", "table2", "table3")
    sizes: tuple[int, ...] = SIZES
    replications: int = 200
    validation_size: int = 10000
    seed: int = 0
    methods: tuple[str, ...] = DEFAULT_METHODS

    def __post_init__(self):
        bad = [t for t in self.tables if t not in TABLES]
        if bad:
            raise ScenarioError(f"unknown tables {bad}; choose from {list(TABLES)}")
        if any(m not in METHODS for m in self.methods):
            raise ScenarioError(f"unknown methods in {self.methods}")
        object.__setattr__(self, "tables", tuple(self.tables))
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        object.__setattr__(self, "methods", tuple(self.methods))

    @classmethod
    def from_dict(cls, d: dict) -> "TableConfig":
        try:
            return cls(**d)
        except TypeError as exc:
            raise ScenarioError(str(exc)) from None


def table_scenarios(table: str, cfg: TableConfig) -> list[Scenario]:
    base = TABLES[table]
    common = dict(
        propensity=base["propensity"],
        replications=cfg.replications,
        validation_size=cfg.validation_size,
        seed=cfg.seed,
    )
    out = []
    if base["family"] == "interaction":
        for law in ("normal", "gamma_centered"):
            for d0 in (5.0, 10.0, 15.0):
                for n in cfg.sizes:
                    out.append(
                        Scenario("interaction", law, "treatment_interacted", n=n, d0=d0, **common)
                    )
        return out
    for sigma in ("homogeneous", "heterogeneous_x"):
        for law in ("normal", "log_normal", "cauchy"):
            for n in cfg.sizes:
                out.append(Scenario(base["family"], law, sigma, n=n, **common))
    return out


CSV_FIELDS = (
    "table", "family", "error_law", "sigma_kind", "d0", "propensity", "n", "method",
    "metric", "mean", "mc_se",
)


def reproduce_tables(cfg: TableConfig, out_dir, jobs: int = 1, solver: SolverConfig | None = None) -> list[Path]:
    """Write one CSV (long format) and one text table per requested table."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for table in cfg.tables:
        rows = []
        cells = []
        for sc in table_scenarios(table, cfg):
            res = run_cell(sc, cfg.methods, solver, jobs=jobs)
            cells.append((sc, res))
            for name, cell in res.items():
                for rec in cell.records():
                    rows.append(
                        {
                            "table": table,
                            "family": sc.family,
                            "error_law": sc.error_law,
                            "sigma_kind": sc.sigma_kind,
                            "d0": sc.d0,
                            "propensity": sc.propensity,
                            "n": sc.n,
                            "method": name,
                            "metric": rec["metric"],
                            "mean": "" if rec["value"] is None else rec["value"],
                            "mc_se": "" if rec["mc_se"] is None else rec["mc_se"],
                        }
                    )
        path = out_dir / f"{table}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
            w.writeheader()
            w.writerows(rows)
        txt = out_dir / f"{table}.txt"
        txt.write_text(format_table(table, cells, cfg.methods) + "\n", encoding="utf-8")
        written += [path, txt]
    return written


def _fmt(v, scale=1.0, digits=2):
    return "" if v is None else f"{v * scale:.{digits}f}"


def format_table(table: str, cells, methods) -> str:
    """Human-readable layout; study-one tables show delta_0.5 multiplied by 10."""
    lines = []
    if TABLES[table]["family"] == "interaction":
        head = f"{'error':<15}{'d0':>4}{'n':>6}" + "".join(
            f"  {m + ' dmu':>12}{'d0.5':>7}{'d0.25':>7}" for m in methods
        )
        lines.append(head)
        for sc, res in cells:
            row = f"{sc.error_law:<15}{sc.d0:>4g}{sc.n:>6}"
            for m in methods:
                c = res[m]
                row += f"  {_fmt(c.delta_mu):>12}{_fmt(c.delta_05):>7}{_fmt(c.delta_025):>7}"
            lines.append(row)
        return "\n".join(lines)
    lines.append("(d0.5 column multiplied by 10; blank mse = running mean above threshold)")
    head = f"{'sigma':<17}{'error':<12}{'n':>6}" + "".join(
        f"  {m + ' mse':>12}{'PCD':>7}{'d0.5x10':>8}" for m in methods
    )
    lines.append(head)
    for sc, res in cells:
        row = f"{sc.sigma_kind:<17}{sc.error_law:<12}{sc.n:>6}"
        for m in methods:
            c = res[m]
            row += f"  {_fmt(c.mse_mean):>12}{_fmt(c.pcd_mean, digits=1):>7}{_fmt(c.delta_05, 10.0):>8}"
        lines.append(row)
    return "\n".join(lines)


def scenario_from_json(path) -> Scenario:
    return Scenario.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def with_overrides(scenario: Scenario, **kw) -> Scenario:
    return replace(scenario, **kw)
