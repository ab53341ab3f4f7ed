"""Estimation of contrast and baseline coefficients.

``fit_rr`` minimises a robust loss over the centered-treatment model
``Y ~ phi(X; gamma) + sum_k (I(A=k) - pi_k(X)) C_k(X; beta_k)``; with squared
loss it is least-squares A-learning. ``fit_q_learning`` fits the
uncentered working model ``h(X; gamma) + sum_k I(A=k) C_k(X; beta_k)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset, ModelSpec, design_for, evaluate_features, treatment_coding
from .errors import SchemaError
from .losses import LossSpec
from .policy import TreatmentRule
from .solver import FitDiagnostics, SolverConfig, default_epsilon, minimize

METHODS = ("rr", "q_learning")


@dataclass(frozen=True, eq=False)
class FittedModel:
    spec: ModelSpec
    loss: LossSpec
    beta: np.ndarray  # (K-1, contrast dim)
    gamma: np.ndarray
    diagnostics: FitDiagnostics
    residuals: np.ndarray
    method: str = "rr"
    covariate_names: tuple[str, ...] | None = None
    data_schema: dict | None = field(default=None)

    def __post_init__(self):
        beta = np.asarray(self.beta, float).reshape(self.spec.n_treatments - 1, self.spec.contrast_map.dim)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "gamma", np.asarray(self.gamma, float).reshape(self.spec.baseline_map.dim))
        object.__setattr__(self, "residuals", np.asarray(self.residuals, float).reshape(-1))
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")

    @property
    def theta(self) -> np.ndarray:
        return np.concatenate([self.beta.ravel(), self.gamma])

    def contrast(self, x) -> np.ndarray:
        """``C_k(x; beta_k)`` for every row, shape ``(n, K-1)``."""
        return self.spec.contrast_map.evaluate(np.asarray(x, float)) @ self.beta.T

    def baseline(self, x) -> np.ndarray:
        return self.spec.baseline_map.evaluate(np.asarray(x, float)) @ self.gamma

    def predict_outcome(self, x, a, prop) -> np.ndarray:
        """Fitted regression of ``Y`` given covariates and treatment ``a``."""
        x = np.asarray(x, float)
        a = np.broadcast_to(np.asarray(a), (x.shape[0],))
        c = self.contrast(x)
        if self.method == "q_learning":
            coding = (a[:, None] == np.arange(1, self.spec.n_treatments)[None, :]).astype(float)
        else:
            coding = treatment_coding(a, prop, self.spec.n_treatments)
        return self.baseline(x) + np.sum(coding * c, axis=1)

    def rule(self) -> TreatmentRule:
        return TreatmentRule(self.spec.contrast_map, self.beta)

    def coefficient_names(self) -> list[str]:
        names = self.spec.contrast_map.term_names(self.covariate_names)
        K = self.spec.n_treatments
        if K == 2:
            out = [f"beta[{t}]" for t in names]
        else:
            out = [f"beta{k}[{t}]" for k in range(1, K) for t in names]
        return out + [f"gamma[{t}]" for t in self.spec.baseline_map.term_names(self.covariate_names)]

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "spec": self.spec.to_dict(),
            "loss": self.loss.to_json(),
            "beta": self.beta.tolist(),
            "gamma": self.gamma.tolist(),
            "diagnostics": self.diagnostics.to_dict(),
            "residuals": self.residuals.tolist(),
            "covariate_names": list(self.covariate_names) if self.covariate_names else None,
            "data_schema": self.data_schema,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FittedModel":
        names = d.get("covariate_names")
        return cls(
            spec=ModelSpec.from_dict(d["spec"]),
            loss=LossSpec.from_json(d["loss"]),
            beta=np.array(d["beta"], float),
            gamma=np.array(d["gamma"], float),
            diagnostics=FitDiagnostics.from_dict(d["diagnostics"]),
            residuals=np.array(d["residuals"], float),
            method=d.get("method", "rr"),
            covariate_names=tuple(names) if names else None,
            data_schema=d.get("data_schema"),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "FittedModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _check_compatible(data: Dataset, spec: ModelSpec):
    if spec.n_treatments != data.n_treatments:
        raise SchemaError(
            f"model has {spec.n_treatments} treatments but data has {data.n_treatments}"
        )
    if data.prop.shape[1] != spec.n_treatments - 1:
        raise SchemaError("need one propensity column per non-reference treatment")
    if spec.p != data.p:
        raise SchemaError(f"model expects {spec.p} covariates, data has {data.p}")


def _resolve_loss(loss: LossSpec, y, diag: FitDiagnostics) -> LossSpec:
    if loss.kind == "huber" and loss.is_auto:
        # zero residual scale falls back to squared loss inside the solver
        return LossSpec.huber(diag.huber_alpha) if diag.huber_alpha is not None else LossSpec.squared()
    if loss.kind == "eps_insensitive" and loss.is_auto:
        return LossSpec.eps_insensitive(default_epsilon(y))
    return loss


def fit_rr(
    data: Dataset, spec: ModelSpec, loss: LossSpec, cfg: SolverConfig | None = None, init=None
) -> FittedModel:
    """Robust-regression estimate of the treatment contrast."""
    _check_compatible(data, spec)
    X = design_for(spec, data)
    theta, diag = minimize(X, data.y, loss, cfg, init=init)
    nc = spec.n_contrast
    return FittedModel(
        spec=spec,
        loss=_resolve_loss(loss, data.y, diag),
        beta=theta[:nc],
        gamma=theta[nc:],
        diagnostics=diag,
        residuals=data.y - X @ theta,
        method="rr",
        covariate_names=data.covariate_names,
    )


def fit_lsa(data: Dataset, spec: ModelSpec, cfg: SolverConfig | None = None) -> FittedModel:
    """Least-squares A-learning (squared-loss ``fit_rr``)."""
    return fit_rr(data, spec, LossSpec.squared(), cfg)


def fit_q_learning(data: Dataset, spec: ModelSpec, cfg: SolverConfig | None = None) -> FittedModel:
    """Least-squares fit of ``h(X; gamma) + sum_k I(A=k) C_k(X; beta_k)``."""
    _check_compatible(data, spec)
    zc = spec.contrast_map.evaluate(data.x)
    zb = spec.baseline_map.evaluate(data.x)
    ind = (data.a[:, None] == np.arange(1, spec.n_treatments)[None, :]).astype(float)
    X = np.hstack([ind[:, [k]] * zc for k in range(spec.n_treatments - 1)] + [zb])
    theta, diag = minimize(X, data.y, LossSpec.squared(), cfg)
    nc = spec.n_contrast
    return FittedModel(
        spec=spec,
        loss=LossSpec.squared(),
        beta=theta[:nc],
        gamma=theta[nc:],
        diagnostics=diag,
        residuals=data.y - X @ theta,
        method="q_learning",
        covariate_names=data.covariate_names,
    )


def predict_contrast(model: FittedModel, x_row):
    """``C(x; beta_hat)``; a vector with one entry per non-reference arm when K > 2."""
    z = evaluate_features(model.spec.contrast_map, x_row)
    c = model.beta @ z
    return float(c[0]) if c.shape[0] == 1 else c
