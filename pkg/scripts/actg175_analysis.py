"""Two-arm ACTG175 analysis: contrast coefficients, bootstrap SEs and rule values.

The dataset is not bundled. Supply a CSV with the column layout of the
``ACTG175`` table from the R package ``speff2trial`` (``arms`` coded
0 = ZDV, 1 = ZDV+ddI, 2 = ZDV+zalcitabine, 3 = ddI; outcome ``cd420``).

    python scripts/actg175_analysis.py ACTG175.csv --B 1000 --out results/
"""

from __future__ import annotations

import argparse
import csv
import tempfile
from pathlib import Path

import numpy as np

from robust_itr.data import FeatureMap, ModelSpec, load_csv
from robust_itr.inference import bootstrap
from robust_itr.learners import fit_rr
from robust_itr.losses import LossSpec
from robust_itr.value import aipwe, format_table, ipwe, write_csv

COVARIATES = (
    "age", "wtkg", "karnof", "cd40", "cd80", "hemo", "homo", "drugs", "race", "gender", "str2", "symptom",
)
CONTRAST = ("age", "homo", "race")
TREATED_ARM, CONTROL_ARM = "1", "2"

METHODS = {
    "Least Square": LossSpec.squared(),
    "Pinball(0.5)": LossSpec.pinball(0.5),
    "Pinball(0.25)": LossSpec.pinball(0.25),
    "Huber": LossSpec.huber("auto"),
}


def load_actg175(path, outcome="cd420", arm="arms"):
    """Rows from the ZDV+ddI (A=1) and ZDV+zalcitabine (A=0) arms, propensity 0.5."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = [r for r in reader if r[arm].strip() in (TREATED_ARM, CONTROL_ARM)]
    with tempfile.NamedTemporaryFile("w", suffix=".csv", delete=False, newline="", encoding="utf-8") as tmp:
        w = csv.writer(tmp)
        w.writerow([outcome, "a", *COVARIATES])
        for r in rows:
            w.writerow([r[outcome], 1 if r[arm].strip() == TREATED_ARM else 0, *(r[c] for c in COVARIATES)])
    try:
        return load_csv(tmp.name, outcome, "a", COVARIATES, fill=0.5)
    finally:
        Path(tmp.name).unlink()


def model_spec() -> ModelSpec:
    p = len(COVARIATES)
    contrast = FeatureMap.linear(p, [COVARIATES.index(c) for c in CONTRAST])
    return ModelSpec(FeatureMap.linear(p), contrast)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("csv")
    ap.add_argument("--B", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default="actg175_results")
    args = ap.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    data = load_actg175(args.csv)
    spec = model_spec()
    print(f"n = {data.n} subjects in the two arms")
    values = []
    for label, loss in METHODS.items():
        model = fit_rr(data, spec, loss)
        boot = bootstrap(data, spec, loss, B=args.B, seed=args.seed, jobs=args.jobs, fitted=model)
        print(f"\n{label}\n{boot.format_table()}")
        boot.write_csv(out / f"coef_{loss.tag().replace(':', '_')}.csv")
        rule = model.rule()
        values += [ipwe(data, rule, label), aipwe(data, model, rule, label)]
    values.sort(key=lambda e: e.estimator != "ipwe")
    print("\n" + format_table(values))
    write_csv(values, out / "values.csv")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
