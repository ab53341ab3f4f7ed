"""Standard errors for the contrast coefficients.

``bootstrap`` refits on resampled data. ``asymptotic_covariance_pinball``
gives the sandwich covariance of the pinball-loss contrast estimate for
binary treatments, together with the distribution-free upper bound on its
middle matrix.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .data import Dataset, ModelSpec, design_for
from .errors import EstimatorError, SchemaError, SolverError
from .learners import FittedModel, fit_rr
from .losses import LossSpec
from .solver import SolverConfig

log = logging.getLogger(__name__)

MAX_RETRIES = 10
SCHEMES = ("pairs", "residual")


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


def normal_p_values(est, se) -> np.ndarray:
    """Two-sided normal-approximation p-values; zero SE gives 0 (or 1 for a zero estimate)."""
    est = np.asarray(est, float)
    se = np.asarray(se, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.abs(est) / se
    z = np.where(se > 0, z, np.where(est == 0, 0.0, np.inf))
    return 2.0 * stats.norm.sf(z)


@dataclass(frozen=True, eq=False)
class BootstrapResult:
    B: int
    estimate: np.ndarray
    se: np.ndarray
    p_values: np.ndarray
    replicates: np.ndarray  # (B, n_contrast)
    scheme: str = "pairs"
    names: tuple[str, ...] = ()
    retries: int = 0

    def rows(self) -> list[dict]:
        names = self.names or tuple(f"beta[{j}]" for j in range(self.estimate.size))
        return [
            {"coefficient": nm, "estimate": float(e), "se": float(s), "p_value": float(p)}
            for nm, e, s, p in zip(names, self.estimate, self.se, self.p_values)
        ]

    def format_table(self) -> str:
        lines = [f"{'coefficient':<24}{'Est.':>10}{'SE':>10}{'PV':>8}", "-" * 52]
        for r in self.rows():
            lines.append(f"{r['coefficient']:<24}{r['estimate']:>10.3f}{r['se']:>10.3f}{r['p_value']:>8.3f}")
        lines.append(f"({self.scheme} bootstrap, B = {self.B})")
        return "\n".join(lines)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=("coefficient", "estimate", "se", "p_value"))
            w.writeheader()
            w.writerows(self.rows())


def _replicate(b, data, spec, loss, cfg, seed, scheme, fitted, design):
    n = data.n
    last = None
    for attempt in range(MAX_RETRIES + 1):
        rng = _rng(seed, b, attempt)
        idx = rng.integers(0, n, size=n)
        if scheme == "pairs":
            sample = data.take(idx)
        else:
            sample = data.with_outcome(design @ fitted.theta + fitted.residuals[idx])
        try:
            return fit_rr(sample, spec, loss, cfg).beta.ravel(), attempt
        except SolverError as exc:
            last = exc
            log.debug("bootstrap replicate %d attempt %d failed: %s", b, attempt, exc)
    raise SolverError(f"bootstrap replicate {b} failed {MAX_RETRIES + 1} times: {last}")


def bootstrap(
    data: Dataset,
    spec: ModelSpec,
    loss: LossSpec,
    cfg: SolverConfig | None = None,
    B: int = 1000,
    seed: int = 0,
    scheme: str = "pairs",
    jobs: int = 1,
    fitted: FittedModel | None = None,
) -> BootstrapResult:
    """Bootstrap standard errors and normal p-values for the contrast coefficients.

    ``scheme="pairs"`` resamples whole rows; ``scheme="residual"`` keeps the
    design fixed and adds resampled residuals to the fitted values. Replicate
    ``b`` draws from a stream keyed on ``(seed, b, attempt)``, so results do
    not depend on ``jobs``.
    """
    if B < 2:
        raise ValueError("B must be at least 2")
    if scheme not in SCHEMES:
        raise ValueError(f"unknown bootstrap scheme {scheme!r}")
    fitted = fitted if fitted is not None else fit_rr(data, spec, loss, cfg)
    design = design_for(spec, data) if scheme == "residual" else None
    # resolved loss keeps an automatic Huber threshold per replicate
    args = (data, spec, loss, cfg, seed, scheme, fitted, design)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            out = list(ex.map(lambda b: _replicate(b, *args), range(B)))
    else:
        out = [_replicate(b, *args) for b in range(B)]
    reps = np.array([o[0] for o in out])
    est = fitted.beta.ravel()
    se = reps.std(axis=0, ddof=1)
    names = tuple(fitted.coefficient_names()[: est.size])
    return BootstrapResult(
        B=B,
        estimate=est,
        se=se,
        p_values=normal_p_values(est, se),
        replicates=reps,
        scheme=scheme,
        names=names,
        retries=int(sum(o[1] for o in out)),
    )


@dataclass(frozen=True, eq=False)
class AsymptoticCovariance:
    J11: np.ndarray
    Sigma11: np.ndarray
    covariance: np.ndarray
    bound: np.ndarray
    tau: float
    n: int
    density_at_zero: float
    bandwidth: float

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    def bound_gap_min_eigenvalue(self) -> float:
        gap = self.bound - self.Sigma11
        return float(np.linalg.eigvalsh(0.5 * (gap + gap.T)).min())


def silverman_bandwidth(r) -> float:
    r = np.asarray(r, float)
    iqr = np.subtract(*np.percentile(r, [75, 25]))
    spread = min(np.std(r, ddof=1), iqr / 1.34) if iqr > 0 else np.std(r, ddof=1)
    return float(0.9 * spread * r.size ** (-0.2))


def kernel_density_at_zero(r, bandwidth: float) -> float:
    r = np.asarray(r, float)
    return float(np.mean(stats.norm.pdf(r / bandwidth)) / bandwidth)


def asymptotic_covariance_pinball(
    data: Dataset, model: FittedModel, tau: float, bandwidth: float | None = None
) -> AsymptoticCovariance:
    """Plug-in sandwich covariance ``J11^{-1} Sigma11 J11^{-1} / n`` of the contrast.

    ``J11`` uses a Gaussian-kernel density of the residuals at zero
    (Silverman bandwidth unless given); ``Sigma11`` uses scores
    ``tau - I{r < 0}``. Both are weighted by ``pi (1 - pi) Z Z'`` where ``Z``
    is the contrast feature vector.
    """
    if not 0 < tau < 1:
        raise ValueError("tau must lie in (0, 1)")
    if data.n_treatments != 2 or model.spec.n_treatments != 2:
        raise SchemaError("the pinball sandwich covariance is defined for two treatments")
    if model.spec.p != data.p:
        raise SchemaError(f"model expects {model.spec.p} covariates, data has {data.p}")
    theta = model.theta
    r = data.y - design_for(model.spec, data) @ theta
    h = silverman_bandwidth(r) if bandwidth is None else float(bandwidth)
    if not h > 0:
        raise EstimatorError("residual bandwidth is zero; cannot estimate the density at zero")
    f0 = kernel_density_at_zero(r, h)
    z = model.spec.contrast_map.evaluate(data.x)
    pi = data.prop[:, 0]
    wz = z * (pi * (1.0 - pi))[:, None]
    G = wz.T @ z / data.n
    J = f0 * G
    psi = tau - (r < 0)
    S = (wz * (psi**2)[:, None]).T @ z / data.n
    cond = np.linalg.cond(J)
    if not np.isfinite(cond) or cond > 1e12:
        raise EstimatorError(f"J11 is singular (condition number {cond:.3g})")
    Jinv = np.linalg.inv(J)
    cov = Jinv @ S @ Jinv / data.n
    return AsymptoticCovariance(
        J11=J,
        Sigma11=S,
        covariance=0.5 * (cov + cov.T),
        bound=(tau**2 + abs(1.0 - 2.0 * tau)) * G,
        tau=float(tau),
        n=data.n,
        density_at_zero=f0,
        bandwidth=h,
    )


def wald_intervals(estimate, se, level: float = 0.95):
    q = stats.norm.ppf(0.5 + level / 2)
    estimate = np.asarray(estimate, float)
    return estimate - q * np.asarray(se), estimate + q * np.asarray(se)
