"""Observed-data estimates of a rule's mean value.

Nuisance coefficients are treated as fixed, so standard errors are the
empirical standard deviation of per-row influence terms over ``sqrt(n)``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .data import Dataset
from .errors import EstimatorError, SchemaError
from .learners import FittedModel
from .policy import TreatmentRule

Z_95 = 1.96


@dataclass(frozen=True)
class ValueEstimate:
    value: float
    se: float
    ci_low: float
    ci_high: float
    estimator: str = ""
    method: str = ""

    @classmethod
    def from_influence(cls, value: float, infl: np.ndarray, estimator: str, method: str = ""):
        se = float(np.std(infl, ddof=1) / np.sqrt(infl.size)) if infl.size > 1 else 0.0
        return cls(float(value), se, value - Z_95 * se, value + Z_95 * se, estimator, method)

    def to_row(self) -> dict:
        return {
            "method": self.method,
            "estimator": self.estimator,
            "value": self.value,
            "se": self.se,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
        }


def _weights(data: Dataset, rule: TreatmentRule):
    if rule.contrast_map.p != data.p:
        raise SchemaError(f"rule expects {rule.contrast_map.p} covariates, data has {data.p}")
    if rule.n_treatments != data.n_treatments:
        raise SchemaError("rule and data disagree on the number of treatments")
    g = rule.decide_many(data.x)
    return g, (data.a == g) / data.received_propensity()


def ipwe(data: Dataset, rule: TreatmentRule, method: str = "") -> ValueEstimate:
    """Ratio-form inverse-probability-weighted value estimate."""
    _, w = _weights(data, rule)
    wbar = float(np.mean(w))
    if wbar == 0.0:
        raise EstimatorError("no sample received the treatment recommended by the rule")
    value = float(np.sum(w * data.y) / np.sum(w))
    infl = w * (data.y - value) / wbar
    return ValueEstimate.from_influence(value, infl, "ipwe", method)


def aipwe(data: Dataset, model: FittedModel, rule: TreatmentRule, method: str = "") -> ValueEstimate:
    """Augmented IPW value estimate using ``model`` as the outcome regression."""
    if model.spec.p != data.p:
        raise SchemaError(f"model expects {model.spec.p} covariates, data has {data.p}")
    g, w = _weights(data, rule)
    fit_g = model.predict_outcome(data.x, g, data.prop)
    fit_a = model.predict_outcome(data.x, data.a, data.prop)
    terms = fit_g + w * (data.y - fit_a)
    return ValueEstimate.from_influence(float(np.mean(terms)), terms, "aipwe", method)


FIELDS = ("method", "estimator", "value", "se", "ci_low", "ci_high")


def write_csv(estimates, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=FIELDS)
        w.writeheader()
        for e in estimates:
            w.writerow(e.to_row())


def write_json(estimates, path) -> None:
    Path(path).write_text(json.dumps([asdict(e) for e in estimates], indent=2) + "\n", encoding="utf-8")


def format_table(estimates) -> str:
    lines = [f"{'method':<14}{'estimator':<10}{'value':>12}{'SE':>10}   95% CI"]
    for e in estimates:
        lines.append(
            f"{e.method:<14}{e.estimator.upper():<10}{e.value:>12.2f}{e.se:>10.2f}   "
            f"({e.ci_low:.2f}, {e.ci_high:.2f})"
        )
    return "\n".join(lines)
