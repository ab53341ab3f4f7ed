"""Datasets, declarative feature maps and the centered-treatment design.

Treatments are coded ``0, ..., K-1``. Treatment 0 is the reference arm: the
design carries one block of contrast features per non-reference arm, each
multiplied by ``I(A = k) - pi_k(X)``, followed by the baseline features.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import SchemaError

Term = tuple[tuple[int, int], ...]

FEATURE_KINDS = ("linear_with_intercept", "quadratic_interaction", "custom_polynomial")


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class FeatureMap:
    """Ordered list of monomials in the covariates.

    Each term is a tuple of ``(variable_index, exponent)`` pairs; the empty
    tuple is the intercept and is always first.
    """

    kind: str
    p: int
    terms: tuple[Term, ...]

    def __post_init__(self):
        if self.kind not in FEATURE_KINDS:
            raise SchemaError(f"unknown feature map kind {self.kind!r}")
        if self.p < 0:
            raise SchemaError("covariate dimension must be non-negative")
        terms = tuple(tuple((int(j), int(e)) for j, e in t) for t in self.terms)
        if not terms or terms[0] != ():
            raise SchemaError("first feature term must be the intercept")
        if len(set(terms)) != len(terms):
            raise SchemaError("duplicate feature terms")
        for t in terms:
            for j, e in t:
                if not 0 <= j < self.p:
                    raise SchemaError(f"term variable index {j} outside 0..{self.p - 1}")
                if e < 1:
                    raise SchemaError("exponents must be positive integers")
        object.__setattr__(self, "terms", terms)

    @classmethod
    def linear(cls, p: int, variables: Sequence[int] | None = None) -> "FeatureMap":
        variables = range(p) if variables is None else variables
        return cls("linear_with_intercept", p, ((),) + tuple(((j, 1),) for j in variables))

    @classmethod
    def quadratic(cls, p: int, variables: Sequence[int] | None = None) -> "FeatureMap":
        """Intercept, linear terms, squares, then pairwise products."""
        v = list(range(p) if variables is None else variables)
        terms: list[Term] = [()]
        terms += [((j, 1),) for j in v]
        terms += [((j, 2),) for j in v]
        terms += [((i, 1), (j, 1)) for i, j in itertools.combinations(v, 2)]
        return cls("quadratic_interaction", p, tuple(terms))

    @classmethod
    def custom(cls, p: int, terms: Iterable[Term]) -> "FeatureMap":
        return cls("custom_polynomial", p, tuple(terms))

    @property
    def dim(self) -> int:
        return len(self.terms)

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """Feature matrix for the rows of ``x`` (shape ``(n, p)``)."""
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.p:
            raise SchemaError(f"expected covariates with {self.p} columns, got shape {x.shape}")
        out = np.ones((x.shape[0], self.dim))
        for k, term in enumerate(self.terms):
            for j, e in term:
                out[:, k] *= x[:, j] if e == 1 else x[:, j] ** e
        return out

    def term_names(self, covariate_names: Sequence[str] | None = None) -> list[str]:
        names = covariate_names or [f"x{j + 1}" for j in range(self.p)]
        out = []
        for term in self.terms:
            if not term:
                out.append("intercept")
                continue
            out.append("*".join(names[j] if e == 1 else f"{names[j]}^{e}" for j, e in term))
        return out

    def to_dict(self) -> dict:
        return {"kind": self.kind, "p": self.p, "terms": [[list(f) for f in t] for t in self.terms]}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureMap":
        return cls(d["kind"], int(d["p"]), tuple(tuple(tuple(f) for f in t) for t in d["terms"]))


def evaluate_features(fmap: FeatureMap, x_row) -> np.ndarray:
    x_row = np.atleast_1d(np.asarray(x_row, dtype=float))
    if x_row.ndim != 1 or x_row.shape[0] != fmap.p:
        raise SchemaError(f"expected {fmap.p} covariates, got {x_row.shape[0]}")
    return fmap.evaluate(x_row.reshape(1, -1))[0]


@dataclass(frozen=True)
class ModelSpec:
    baseline_map: FeatureMap
    contrast_map: FeatureMap
    n_treatments: int = 2

    def __post_init__(self):
        if self.n_treatments < 2:
            raise SchemaError("need at least two treatments")
        if self.baseline_map.p != self.contrast_map.p:
            raise SchemaError("baseline and contrast maps disagree on covariate dimension")

    @property
    def p(self) -> int:
        return self.contrast_map.p

    @property
    def n_contrast(self) -> int:
        return (self.n_treatments - 1) * self.contrast_map.dim

    @property
    def n_params(self) -> int:
        return self.n_contrast + self.baseline_map.dim

    @classmethod
    def linear(cls, p: int, n_treatments: int = 2) -> "ModelSpec":
        return cls(FeatureMap.linear(p), FeatureMap.linear(p), n_treatments)

    def to_dict(self) -> dict:
        return {
            "baseline_map": self.baseline_map.to_dict(),
            "contrast_map": self.contrast_map.to_dict(),
            "n_treatments": self.n_treatments,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(
            FeatureMap.from_dict(d["baseline_map"]),
            FeatureMap.from_dict(d["contrast_map"]),
            int(d["n_treatments"]),
        )


@dataclass(frozen=True, eq=False)
class Dataset:
    """Observed ``(Y, X, A)`` with known propensities.

    ``prop[:, k-1]`` holds ``P(A = k | X)`` for ``k = 1, ..., K-1``.
    """

    y: np.ndarray
    x: np.ndarray
    a: np.ndarray
    prop: np.ndarray
    n_treatments: int = 2
    covariate_names: tuple[str, ...] | None = field(default=None)

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(-1)
        x = np.asarray(self.x, dtype=float)
        n = y.shape[0]
        if x.size == 0:
            x = np.zeros((n, 0))
        elif x.ndim == 1:
            x = x.reshape(n, -1)
        a_raw = np.asarray(self.a)
        if a_raw.size and not np.all(np.equal(np.mod(a_raw, 1), 0)):
            raise SchemaError("treatments must be integer coded")
        a = a_raw.astype(int).reshape(-1)
        prop = np.asarray(self.prop, dtype=float)
        if prop.ndim == 1:
            prop = prop.reshape(-1, 1)
        K = int(self.n_treatments)
        if n < 1:
            raise SchemaError("dataset must have at least one row")
        if K < 2:
            raise SchemaError("need at least two treatments")
        if x.shape[0] != n or a.shape[0] != n or prop.shape[0] != n:
            raise SchemaError("y, x, a and prop must have the same number of rows")
        if prop.shape[1] != K - 1:
            raise SchemaError(f"expected {K - 1} propensity columns, got {prop.shape[1]}")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x)) and np.all(np.isfinite(prop))):
            raise SchemaError("non-finite entries in y, x or prop")
        if np.any(a < 0) or np.any(a >= K):
            raise SchemaError(f"treatment labels must lie in 0..{K - 1}")
        if np.any(prop <= 0) or np.any(prop >= 1):
            raise SchemaError("propensities must lie strictly inside (0, 1)")
        if K > 2 and np.any(prop.sum(axis=1) >= 1):
            raise SchemaError("propensities of non-reference arms must sum to less than 1")
        names = self.covariate_names
        if names is not None:
            names = tuple(str(s) for s in names)
            if len(names) != x.shape[1]:
                raise SchemaError("covariate_names length does not match x")
        object.__setattr__(self, "y", _readonly(y))
        object.__setattr__(self, "x", _readonly(x))
        object.__setattr__(self, "a", _readonly(a))
        object.__setattr__(self, "prop", _readonly(prop))
        object.__setattr__(self, "n_treatments", K)
        object.__setattr__(self, "covariate_names", names)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def arm_probabilities(self) -> np.ndarray:
        """``(n, K)`` matrix of ``P(A = k | X_i)`` including the reference arm."""
        return np.column_stack([1.0 - self.prop.sum(axis=1), self.prop])

    def received_propensity(self) -> np.ndarray:
        """``p(A_i | X_i)`` for the treatment actually received."""
        return self.arm_probabilities()[np.arange(self.n), self.a]

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(
            self.y[idx], self.x[idx], self.a[idx], self.prop[idx], self.n_treatments, self.covariate_names
        )

    def with_outcome(self, y) -> "Dataset":
        return Dataset(y, self.x, self.a, self.prop, self.n_treatments, self.covariate_names)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.n_treatments == other.n_treatments
            and self.covariate_names == other.covariate_names
            and all(
                a.shape == b.shape and np.array_equal(a, b)
                for a, b in (
                    (self.y, other.y),
                    (self.x, other.x),
                    (self.a, other.a),
                    (self.prop, other.prop),
                )
            )
        )

    __hash__ = None


def treatment_coding(a: np.ndarray, prop: np.ndarray, n_treatments: int) -> np.ndarray:
    """``I(A = k) - pi_k(X)`` for ``k = 1..K-1`` as an ``(n, K-1)`` matrix."""
    a = np.asarray(a).reshape(-1)
    prop = np.asarray(prop, dtype=float).reshape(a.shape[0], -1)
    if prop.shape[1] != n_treatments - 1:
        raise SchemaError(f"expected {n_treatments - 1} propensity columns, got {prop.shape[1]}")
    arms = np.arange(1, n_treatments)
    return (a[:, None] == arms[None, :]).astype(float) - prop


def design_matrix(spec: ModelSpec, x, a, prop) -> np.ndarray:
    """Rows ``((I(A=k) - pi_k) C_k-features for k >= 1, baseline features)``."""
    x = np.asarray(x, dtype=float)
    zc = spec.contrast_map.evaluate(x)
    zb = spec.baseline_map.evaluate(x)
    coding = treatment_coding(a, prop, spec.n_treatments)
    blocks = [coding[:, [k]] * zc for k in range(spec.n_treatments - 1)]
    return np.hstack(blocks + [zb])


def design_row(spec: ModelSpec, x_row, a: int, prop_row) -> np.ndarray:
    x_row = np.atleast_1d(np.asarray(x_row, dtype=float))
    if x_row.shape[0] != spec.p:
        raise SchemaError(f"expected {spec.p} covariates, got {x_row.shape[0]}")
    if not 0 <= int(a) < spec.n_treatments:
        raise SchemaError(f"treatment {a} outside 0..{spec.n_treatments - 1}")
    prop_row = np.atleast_1d(np.asarray(prop_row, dtype=float))
    if np.any(prop_row <= 0) or np.any(prop_row >= 1):
        raise SchemaError("propensities must lie strictly inside (0, 1)")
    return design_matrix(spec, x_row.reshape(1, -1), np.array([int(a)]), prop_row.reshape(1, -1))[0]


def design_for(spec: ModelSpec, data: Dataset) -> np.ndarray:
    if spec.n_treatments != data.n_treatments:
        raise SchemaError("model and data disagree on the number of treatments")
    if spec.p != data.p:
        raise SchemaError(f"model expects {spec.p} covariates, data has {data.p}")
    return design_matrix(spec, data.x, data.a, data.prop)


# ---------------------------------------------------------------------------
# CSV input / output


def _parse_float(value: str, column: str, line: int) -> float:
    if value is None or value.strip() == "":
        raise SchemaError(f"missing value in column {column!r} at line {line}")
    try:
        out = float(value)
    except ValueError:
        raise SchemaError(f"non-numeric value {value!r} in column {column!r} at line {line}") from None
    if not np.isfinite(out):
        raise SchemaError(f"non-finite value in column {column!r} at line {line}")
    return out


def load_csv(
    path,
    outcome: str,
    treatment: str,
    covariates: Sequence[str],
    propensity: Sequence[str] | str | None = None,
    fill: float | Sequence[float] | None = None,
    treatment_levels: Sequence[str] | None = None,
    n_treatments: int | None = None,
) -> Dataset:
    """Read a dataset from a headered, comma-separated UTF-8 file.

    Parameters
    ----------
    outcome, treatment, covariates : column names.
    propensity : column name(s) holding ``P(A = k | X)`` for ``k = 1..K-1``.
        When omitted every row gets the constant ``fill`` (default ``1/K``).
    treatment_levels : labels in the order that maps them to ``0..K-1``.
        Without it, labels must already be the integers ``0..K-1``.
    n_treatments : K; inferred from ``treatment_levels`` or the propensity
        columns, default 2.
    """
    if isinstance(propensity, str):
        propensity = [propensity]
    covariates = list(covariates)
    if treatment_levels is not None:
        levels = [str(t) for t in treatment_levels]
        if len(set(levels)) != len(levels):
            raise SchemaError("duplicate treatment levels")
        K = len(levels)
        if n_treatments is not None and n_treatments != K:
            raise SchemaError("n_treatments disagrees with treatment_levels")
    else:
        levels = None
        K = n_treatments or (len(propensity) + 1 if propensity else 2)
    if propensity is not None and len(propensity) != K - 1:
        raise SchemaError(f"expected {K - 1} propensity columns, got {len(propensity)}")

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        needed = [outcome, treatment, *covariates, *(propensity or [])]
        missing = [c for c in needed if c not in header]
        if missing:
            raise SchemaError(f"missing column(s): {', '.join(missing)}")
        ys, xs, as_, ps = [], [], [], []
        for line, row in enumerate(reader, start=2):
            ys.append(_parse_float(row[outcome], outcome, line))
            xs.append([_parse_float(row[c], c, line) for c in covariates])
            label = (row[treatment] or "").strip()
            if levels is not None:
                if label not in levels:
                    raise SchemaError(f"unknown treatment label {label!r} at line {line}")
                as_.append(levels.index(label))
            else:
                try:
                    code = float(label)
                except ValueError:
                    raise SchemaError(f"unknown treatment label {label!r} at line {line}") from None
                if code != int(code) or not 0 <= int(code) < K:
                    raise SchemaError(f"treatment label {label!r} outside 0..{K - 1} at line {line}")
                as_.append(int(code))
            if propensity:
                ps.append([_parse_float(row[c], c, line) for c in propensity])
    n = len(ys)
    if n == 0:
        raise SchemaError("no data rows")
    if propensity:
        prop = np.array(ps)
    else:
        fill_arr = np.full(K - 1, 1.0 / K) if fill is None else np.broadcast_to(np.asarray(fill, float), (K - 1,))
        prop = np.tile(fill_arr, (n, 1))
    return Dataset(
        np.array(ys),
        np.array(xs, dtype=float).reshape(n, len(covariates)),
        np.array(as_),
        prop,
        K,
        tuple(covariates),
    )


def default_columns(data: Dataset) -> dict:
    names = list(data.covariate_names or [f"x{j + 1}" for j in range(data.p)])
    return {
        "outcome": "y",
        "treatment": "a",
        "covariates": names,
        "propensity": [f"prop{k}" for k in range(1, data.n_treatments)],
    }


def save_csv(data: Dataset, path) -> dict:
    """Write ``data`` with columns ``y, a, <covariates>, prop1..``; returns the schema used."""
    cols = default_columns(data)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([cols["outcome"], cols["treatment"], *cols["covariates"], *cols["propensity"]])
        for i in range(data.n):
            w.writerow(
                [repr(float(data.y[i])), int(data.a[i])]
                + [repr(float(v)) for v in data.x[i]]
                + [repr(float(v)) for v in data.prop[i]]
            )
    return cols
