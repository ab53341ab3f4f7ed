"""Command-line interface: ``robust-itr {fit,bootstrap,evaluate,simulate,recommend}``.

Exit codes: 0 success, 2 usage or schema error, 3 solver failure,
4 degenerate estimator.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import re
import sys
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .data import FeatureMap, ModelSpec, load_csv
from .errors import EstimatorError, ScenarioError, SchemaError, SolverError
from .inference import bootstrap
from .learners import FittedModel, fit_rr
from .losses import LossSpec
from .simulation import Scenario, TableConfig, reproduce_tables, run_cell
from .value import aipwe, format_table, ipwe, write_csv

log = logging.getLogger("robust_itr")

EXIT_OK, EXIT_USAGE, EXIT_SOLVER, EXIT_ESTIMATOR = 0, 2, 3, 4
SEED_ENV = "ROBUST_ITR_SEED"

_FEATURE_RE = re.compile(r"^\s*(linear|quad)\s*\(\s*([^()]*)\s*\)\s*$")


class UsageError(SchemaError):
    pass


# ---------------------------------------------------------------------------
# argument helpers


def parse_feature_spec(text: str) -> tuple[str, list[str]]:
    """``"linear(x1,x2)"`` -> ``("linear", ["x1", "x2"])``; empty list is allowed."""
    m = _FEATURE_RE.match(text)
    if not m:
        raise UsageError(f"bad feature spec {text!r}; use linear(a,b,...) or quad(a,b,...)")
    names = [s.strip() for s in m.group(2).split(",") if s.strip()]
    if len(set(names)) != len(names):
        raise UsageError(f"duplicate covariates in {text!r}")
    return m.group(1), names


def build_map(kind: str, names: list[str], covariates: list[str]) -> FeatureMap:
    idx = [covariates.index(n) for n in names]
    p = len(covariates)
    return FeatureMap.linear(p, idx) if kind == "linear" else FeatureMap.quadratic(p, idx)


def parse_propensity(text: str | None):
    """Returns ``(column, constant)``; exactly one is not None."""
    if text is None:
        return None, 0.5
    kind, _, arg = text.partition(":")
    if kind == "column" and arg:
        return arg, None
    if kind == "const":
        try:
            p = float(arg)
        except ValueError:
            raise UsageError(f"bad propensity constant {arg!r}") from None
        if not 0 < p < 1:
            raise UsageError("propensity constant must lie in (0, 1)")
        return None, p
    raise UsageError(f"bad propensity spec {text!r}; use column:NAME or const:P")


def _split(s: str | None) -> list[str]:
    return [c.strip() for c in s.split(",") if c.strip()] if s else []


def resolve_seed(seed: int | None) -> int:
    if seed is not None:
        return seed
    env = os.environ.get(SEED_ENV)
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None


def _header(path) -> list[str]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            return next(csv.reader(fh), [])
    except FileNotFoundError:
        raise SchemaError(f"no such file: {path}") from None


# ---------------------------------------------------------------------------
# run manifest


def _file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    inputs: dict = field(default_factory=dict)
    seed: int | None = None
    version: str = __version__
    started: str = ""
    finished: str = ""
    outputs: list[str] = field(default_factory=list)

    @property
    def config_hash(self) -> str:
        blob = json.dumps(
            {"command": self.command, "config": self.config, "inputs": self.inputs, "seed": self.seed},
            sort_keys=True,
        )
        return hashlib.sha256(blob.encode()).hexdigest()

    def write(self, path) -> None:
        d = {
            "command": self.command,
            "config": self.config,
            "config_hash": self.config_hash,
            "inputs": self.inputs,
            "seed": self.seed,
            "version": self.version,
            "started": self.started,
            "finished": self.finished,
            "outputs": self.outputs,
        }
        Path(path).write_text(json.dumps(d, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _start(args, command: str, inputs=(), seed=None) -> RunManifest:
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "verbose")}
    digests = {str(p): _file_digest(p) for p in inputs if p is not None and Path(p).is_file()}
    return RunManifest(command, config, digests, seed, started=_now())


def _finish(man: RunManifest, outputs, manifest_path) -> None:
    man.outputs = [str(p) for p in outputs]
    man.finished = _now()
    man.outputs.append(str(manifest_path))
    man.write(manifest_path)


def _manifest_path(args, primary) -> Path:
    return Path(args.manifest) if getattr(args, "manifest", None) else Path(f"{primary}.manifest.json")


# ---------------------------------------------------------------------------
# data loading


def _load_for_fit(args):
    header = _header(args.data)
    if args.propensity is None and "prop1" in header:
        args.propensity = "column:prop1"
    pcol, pconst = parse_propensity(args.propensity)
    contrast = parse_feature_spec(args.contrast) if args.contrast else None
    baseline = parse_feature_spec(args.baseline) if args.baseline else None
    covariates = _split(args.covariates)
    if not covariates:
        named = [n for spec in (contrast, baseline) if spec for n in spec[1]]
        covariates = list(dict.fromkeys(named))
    if not covariates and not (contrast or baseline):
        skip = {args.outcome, args.treatment, pcol}
        covariates = [c for c in header if c not in skip]
    for spec in (contrast, baseline):
        if spec:
            unknown = [n for n in spec[1] if n not in covariates]
            if unknown:
                raise UsageError(f"feature spec refers to unknown covariates {unknown}")
    contrast = contrast or ("linear", covariates)
    baseline = baseline or ("linear", covariates)
    data = load_csv(args.data, args.outcome, args.treatment, covariates, propensity=pcol, fill=pconst)
    spec = ModelSpec(
        build_map(*baseline, covariates), build_map(*contrast, covariates), data.n_treatments
    )
    schema = {
        "outcome": args.outcome,
        "treatment": args.treatment,
        "covariates": covariates,
        "propensity": args.propensity or "const:0.5",
        "loss_tag": args.loss,
    }
    return data, spec, schema


def _load_with_schema(model: FittedModel, path):
    schema = model.data_schema or {}
    if "covariates" not in schema:
        raise SchemaError("model file lacks the data schema needed to read new data")
    pcol, pconst = parse_propensity(schema.get("propensity"))
    return load_csv(path, schema["outcome"], schema["treatment"], schema["covariates"], propensity=pcol, fill=pconst)


def _load_model(path) -> FittedModel:
    try:
        return FittedModel.load(path)
    except FileNotFoundError:
        raise SchemaError(f"no such model file: {path}") from None
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise SchemaError(f"malformed model file {path}: {exc}") from None


# ---------------------------------------------------------------------------
# commands


def coefficient_table(model: FittedModel) -> str:
    lines = [f"{'coefficient':<28}{'estimate':>12}", "-" * 40]
    for name, v in zip(model.coefficient_names(), model.theta):
        lines.append(f"{name:<28}{v:>12.4f}")
    d = model.diagnostics
    lines.append(f"loss {model.loss.tag()}; converged={d.converged}; objective={d.final_objective:.6g}")
    return "\n".join(lines)


def cmd_fit(args) -> int:
    loss = LossSpec.parse(args.loss)
    man = _start(args, "fit", [args.data])
    data, spec, schema = _load_for_fit(args)
    model = fit_rr(data, spec, loss)
    model = replace(model, data_schema=schema)
    out = Path(args.out)
    model.save(out)
    table = coefficient_table(model)
    print(table)
    outputs = [out]
    if args.report:
        Path(args.report).write_text(table + "\n", encoding="utf-8")
        outputs.append(Path(args.report))
    _finish(man, outputs, _manifest_path(args, out))
    return EXIT_OK


def cmd_bootstrap(args) -> int:
    seed = resolve_seed(args.seed)
    man = _start(args, "bootstrap", [args.model, args.data], seed)
    model = _load_model(args.model)
    data = _load_with_schema(model, args.data)
    tag = (model.data_schema or {}).get("loss_tag")
    loss = LossSpec.parse(tag) if tag else model.loss
    refit = fit_rr(data, model.spec, loss)
    res = bootstrap(data, model.spec, loss, B=args.B, seed=seed, scheme=args.scheme, jobs=args.jobs, fitted=refit)
    print(res.format_table())
    out = Path(args.out)
    res.write_csv(out)
    _finish(man, [out], _manifest_path(args, out))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    man = _start(args, "evaluate", [args.model, args.data])
    model = _load_model(args.model)
    data = _load_with_schema(model, args.data)
    rule = model.rule()
    label = args.label or model.loss.tag()
    est = []
    if args.estimator in ("ipwe", "both"):
        est.append(ipwe(data, rule, label))
    if args.estimator in ("aipwe", "both"):
        est.append(aipwe(data, model, rule, label))
    print(format_table(est))
    out = Path(args.out)
    write_csv(est, out)
    _finish(man, [out], _manifest_path(args, out))
    return EXIT_OK


def cmd_recommend(args) -> int:
    man = _start(args, "recommend", [args.model, args.data])
    model = _load_model(args.model)
    schema = model.data_schema or {}
    covariates = schema.get("covariates") or [f"x{j + 1}" for j in range(model.spec.p)]
    header = _header(args.data)
    missing = [c for c in covariates if c not in header]
    if missing:
        raise SchemaError(f"covariate file lacks column(s) {missing}; model needs {covariates}")
    rows = []
    with open(args.data, newline="", encoding="utf-8") as fh:
        for line, row in enumerate(csv.DictReader(fh), start=2):
            try:
                rows.append([float(row[c]) for c in covariates])
            except (TypeError, ValueError):
                raise SchemaError(f"non-numeric covariate at line {line}") from None
    x = np.array(rows, dtype=float).reshape(len(rows), len(covariates))
    if not np.all(np.isfinite(x)):
        raise SchemaError("non-finite covariate values")
    rule = model.rule()
    c = rule.contrasts(x)
    g = rule.decide_many(x)
    out = Path(args.out)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if c.shape[1] == 1:
            w.writerow(["row", "contrast", "treatment"])
            for i in range(x.shape[0]):
                w.writerow([i, repr(float(c[i, 0])), int(g[i])])
        else:
            w.writerow(["row", *[f"contrast{k}" for k in range(1, c.shape[1] + 1)], "treatment"])
            for i in range(x.shape[0]):
                w.writerow([i, *[repr(float(v)) for v in c[i]], int(g[i])])
    print(f"wrote {x.shape[0]} recommendations to {out}")
    _finish(man, [out], _manifest_path(args, out))
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        config = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise UsageError(f"no such config file: {args.config}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config is not valid JSON: {exc}") from None
    seed = resolve_seed(args.seed) if args.seed is not None or os.environ.get(SEED_ENV) else config.get("seed", 0)
    man = _start(args, "simulate", [args.config], seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if "scenario" in config:
        scenario = Scenario.from_dict({**config["scenario"], "seed": seed})
        methods = tuple(config.get("methods", ("LS", "P(0.5)", "P(0.25)", "Huber")))
        cells = run_cell(scenario, methods, jobs=args.jobs)
        path = out_dir / "cell.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=("scenario", "method", "n", "metric", "value", "mc_se"))
            w.writeheader()
            for cell in cells.values():
                w.writerows(cell.records())
        outputs = [path]
    else:
        cfg = TableConfig.from_dict({**config, "seed": seed})
        outputs = reproduce_tables(cfg, out_dir, jobs=args.jobs)
    for p in outputs:
        print(p)
    _finish(man, outputs, Path(args.manifest) if args.manifest else out_dir / "manifest.json")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="robust-itr", description="Robust regression for treatment rules.")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="estimate contrast and baseline coefficients")
    f.add_argument("--data", required=True)
    f.add_argument("--outcome", default="y")
    f.add_argument("--treatment", default="a")
    f.add_argument("--covariates", help="comma-separated covariate columns")
    f.add_argument("--loss", default="squared", help="squared | pinball:TAU | huber:auto | huber:A | eps:E")
    f.add_argument("--contrast", help='e.g. "linear(x1,x2)" or "quad(x1,x2)"')
    f.add_argument("--baseline", help='e.g. "linear(x1,x2,x3)"')
    f.add_argument(
        "--propensity", help="column:NAME or const:P (default column:prop1 if present, else const:0.5)"
    )
    f.add_argument("--out", default="model.json")
    f.add_argument("--report", help="also write the coefficient table here")
    f.add_argument("--manifest")
    f.set_defaults(func=cmd_fit)

    b = sub.add_parser("bootstrap", help="bootstrap SEs and p-values")
    b.add_argument("--model", required=True)
    b.add_argument("--data", required=True)
    b.add_argument("--B", type=int, default=1000)
    b.add_argument("--seed", type=int)
    b.add_argument("--scheme", choices=("pairs", "residual"), default="pairs")
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--out", default="bootstrap.csv")
    b.add_argument("--manifest")
    b.set_defaults(func=cmd_bootstrap)

    e = sub.add_parser("evaluate", help="IPWE / AIPWE value of the fitted rule")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--estimator", choices=("ipwe", "aipwe", "both"), default="both")
    e.add_argument("--label", help="method label for the output rows")
    e.add_argument("--out", default="values.csv")
    e.add_argument("--manifest")
    e.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("simulate", help="run simulation tables or a single scenario")
    s.add_argument("--config", required=True)
    s.add_argument("--out", default="sim_out")
    s.add_argument("--seed", type=int)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--manifest")
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("recommend", help="per-row treatment recommendations")
    r.add_argument("--model", required=True)
    r.add_argument("--data", required=True)
    r.add_argument("--out", default="recommendations.csv")
    r.add_argument("--manifest")
    r.set_defaults(func=cmd_recommend)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (SchemaError, ScenarioError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except EstimatorError as exc:
        print(f"estimator error: {exc}", file=sys.stderr)
        return EXIT_ESTIMATOR


if __name__ == "__main__":
    sys.exit(main())
