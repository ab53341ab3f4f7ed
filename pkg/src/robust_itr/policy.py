"""Treatment rules and their quality under a known data-generating truth."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .data import FeatureMap, evaluate_features
from .errors import SchemaError, UndefinedValueError

ERROR_LAWS = ("normal", "log_normal", "cauchy", "gamma_centered")
SIGMA_KINDS = ("homogeneous", "heterogeneous_x", "treatment_interacted")
PROPENSITY_LAWS = ("constant_half", "expit_diff")
BASELINES = ("model_I", "model_II", "interaction")

MODEL_II_GAMMA = (0.5, 4.0, 1.0, -3.0)


@dataclass(frozen=True, eq=False)
class TreatmentRule:
    """``x -> argmax(0, C_1(x), ..., C_{K-1}(x))``; binary: ``I{C(x) > 0}``."""

    contrast_map: FeatureMap
    beta: np.ndarray

    def __post_init__(self):
        beta = np.atleast_2d(np.asarray(self.beta, float))
        if beta.shape[1] != self.contrast_map.dim:
            raise SchemaError(
                f"beta has {beta.shape[1]} coefficients, contrast map has {self.contrast_map.dim}"
            )
        object.__setattr__(self, "beta", beta)

    @property
    def n_treatments(self) -> int:
        return self.beta.shape[0] + 1

    def contrasts(self, x) -> np.ndarray:
        return self.contrast_map.evaluate(np.asarray(x, float)) @ self.beta.T

    def decide_many(self, x) -> np.ndarray:
        c = self.contrasts(x)
        if c.shape[1] == 1:
            return (c[:, 0] > 0).astype(int)
        scores = np.hstack([np.zeros((c.shape[0], 1)), c])
        return np.argmax(scores, axis=1)

    def scaled(self, c: float) -> "TreatmentRule":
        return TreatmentRule(self.contrast_map, c * self.beta)


def decide(rule: TreatmentRule, x_row) -> int:
    z = evaluate_features(rule.contrast_map, x_row)
    c = rule.beta @ z
    if c.shape[0] == 1:
        return int(c[0] > 0)
    return int(np.argmax(np.concatenate([[0.0], c])))


# ---------------------------------------------------------------------------
# error laws


def error_mean(law: str) -> float:
    if law == "normal" or law == "gamma_centered":
        return 0.0
    if law == "log_normal":
        return float(np.exp(0.5))
    if law == "cauchy":
        raise UndefinedValueError("the Cauchy law has no mean")
    raise ValueError(f"unknown error law {law!r}")


def error_quantile(law: str, tau: float) -> float:
    if not 0 < tau < 1:
        raise ValueError("tau must lie in (0, 1)")
    if law == "normal":
        return float(stats.norm.ppf(tau))
    if law == "log_normal":
        return float(np.exp(stats.norm.ppf(tau)))
    if law == "cauchy":
        return float(np.tan(np.pi * (tau - 0.5)))
    if law == "gamma_centered":
        return float(-np.log1p(-tau) - 1.0)
    raise ValueError(f"unknown error law {law!r}")


@dataclass(frozen=True, eq=False)
class TruthModel:
    """Known generative model ``Y = phi0(X) + (A - pi(X)) C0(X) + sigma(X, A) eps``.

    ``baseline`` names the closed-form ``phi0``; ``beta0`` are the coefficients
    of the mean contrast over ``(1, X')``.
    """

    baseline: str
    beta0: np.ndarray
    error_law: str
    sigma: str = "homogeneous"
    d0: float = 0.0
    propensity: str = "constant_half"

    def __post_init__(self):
        if self.baseline not in BASELINES:
            raise ValueError(f"unknown baseline {self.baseline!r}")
        if self.error_law not in ERROR_LAWS:
            raise ValueError(f"unknown error law {self.error_law!r}")
        if self.sigma not in SIGMA_KINDS:
            raise ValueError(f"unknown sigma kind {self.sigma!r}")
        if self.propensity not in PROPENSITY_LAWS:
            raise ValueError(f"unknown propensity law {self.propensity!r}")
        object.__setattr__(self, "beta0", np.asarray(self.beta0, float))
        if self.beta0.shape != (self.p + 1,):
            raise ValueError(f"beta0 must have length {self.p + 1}")

    @property
    def p(self) -> int:
        return 2 if self.baseline == "interaction" else 3

    @property
    def contrast_map(self) -> FeatureMap:
        return FeatureMap.linear(self.p)

    def _check(self, x):
        x = np.asarray(x, float)
        if x.ndim != 2 or x.shape[1] != self.p:
            raise SchemaError(f"truth expects {self.p} covariates, got shape {x.shape}")
        return x

    def phi0(self, x) -> np.ndarray:
        x = self._check(x)
        if self.baseline == "model_I":
            return 1.0 + (x[:, 0] - x[:, 1]) * (x[:, 0] + x[:, 2])
        if self.baseline == "model_II":
            return MODEL_II_GAMMA[0] + x @ np.asarray(MODEL_II_GAMMA[1:])
        return 1.0 + 0.5 * np.sin(np.pi * (x[:, 0] - x[:, 1])) + 0.25 * (1.0 + x[:, 0] + 2.0 * x[:, 1]) ** 2

    def contrast(self, x) -> np.ndarray:
        x = self._check(x)
        return self.beta0[0] + x @ self.beta0[1:]

    def propensity_of(self, x) -> np.ndarray:
        x = self._check(x)
        if self.propensity == "constant_half":
            return np.full(x.shape[0], 0.5)
        return 1.0 / (1.0 + np.exp(-(x[:, 0] - x[:, 1])))

    def sigma_of(self, x, a) -> np.ndarray:
        x = self._check(x)
        a = np.broadcast_to(np.asarray(a, float), (x.shape[0],))
        if self.sigma == "homogeneous":
            return np.ones(x.shape[0])
        if self.sigma == "heterogeneous_x":
            return 0.5 + (x[:, 0] - x[:, 1]) ** 2
        return 1.0 + a * self.d0 * x[:, 0] ** 2

    def _location(self, x, a):
        return self.phi0(x) + (np.asarray(a, float) - self.propensity_of(x)) * self.contrast(x)

    def q_mean(self, x, a) -> np.ndarray:
        """``E(Y | X = x, A = a)``; raises for laws without a mean."""
        return self._location(x, a) + self.sigma_of(x, a) * error_mean(self.error_law)

    def q_quantile(self, x, a, tau: float) -> np.ndarray:
        """Conditional ``tau``-quantile of ``Y`` given ``X = x, A = a``."""
        return self._location(x, a) + self.sigma_of(x, a) * error_quantile(self.error_law, tau)

    def _sigma_depends_on_treatment(self) -> bool:
        return self.sigma == "treatment_interacted" and self.d0 != 0

    def optimal_decisions(self, x, tau: float | None = None) -> np.ndarray:
        """Pointwise optimal treatment for the mean (``tau=None``) or the ``tau``-quantile."""
        x = self._check(x)
        if tau is None and not self._sigma_depends_on_treatment():
            # the error term cancels from Q(x, 1) - Q(x, 0)
            return (self.contrast(x) > 0).astype(int)
        q = self.q_mean if tau is None else (lambda xx, a: self.q_quantile(xx, a, tau))
        return (q(x, 1) > q(x, 0)).astype(int)

    def optimal_rule(self, tau: float | None = None) -> TreatmentRule:
        """Optimal rule over the quadratic map when it exists in closed form.

        With treatment-interacted scale ``1 + A d0 X1^2`` the contrast of the
        ``tau``-quantile is ``beta0'(1, X) + d0 F^{-1}(tau) X1^2``.
        """
        shift = 0.0
        if self._sigma_depends_on_treatment():
            level = error_mean(self.error_law) if tau is None else error_quantile(self.error_law, tau)
            shift = self.d0 * level
        if self.baseline == "interaction":
            fmap = FeatureMap.quadratic(2)
            return TreatmentRule(fmap, np.concatenate([self.beta0, [shift, 0.0, 0.0]]))
        if shift:
            raise ValueError("treatment-interacted scale is only defined for the interaction family")
        return TreatmentRule(self.contrast_map, self.beta0)


# ---------------------------------------------------------------------------
# metrics


def _binary(rule: TreatmentRule):
    if rule.n_treatments != 2:
        raise ValueError("truth-based metrics are defined for two treatments")


def pcd(rule: TreatmentRule, truth: TruthModel, validation_x) -> float:
    """Percentage of validation points where the rule matches the mean-optimal decision."""
    x = np.asarray(validation_x, float)
    if x.shape[0] < 1:
        raise ValueError("validation set is empty")
    _binary(rule)
    agree = rule.decide_many(x) == truth.optimal_decisions(x)
    return 100.0 * float(np.mean(agree))


def value_mean(rule: TreatmentRule, truth: TruthModel, validation_x) -> float:
    x = np.asarray(validation_x, float)
    _binary(rule)
    return float(np.mean(truth.q_mean(x, rule.decide_many(x))))


def value_quantile(rule: TreatmentRule, truth: TruthModel, validation_x, tau: float) -> float:
    x = np.asarray(validation_x, float)
    _binary(rule)
    return float(np.mean(truth.q_quantile(x, rule.decide_many(x), tau)))


def delta_metrics(rule: TreatmentRule, truth: TruthModel, validation_x, taus=(0.5, 0.25)) -> dict:
    """Value loss of ``rule`` against the optimum of each criterion.

    Keys: ``delta_mu`` (omitted when the error law has no mean) and
    ``delta_<tau>`` for each requested quantile level.
    """
    x = np.asarray(validation_x, float)
    _binary(rule)
    g = rule.decide_many(x)
    out = {}
    try:
        q0, q1 = truth.q_mean(x, 0), truth.q_mean(x, 1)
        out["delta_mu"] = float(np.mean(np.maximum(q0, q1) - np.where(g == 1, q1, q0)))
    except UndefinedValueError:
        pass
    for tau in taus:
        q0, q1 = truth.q_quantile(x, 0, tau), truth.q_quantile(x, 1, tau)
        out[f"delta_{tau:g}"] = float(np.mean(np.maximum(q0, q1) - np.where(g == 1, q1, q0)))
    return out
