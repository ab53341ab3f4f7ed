"""Minimisation of ``(1/n) sum_i M(y_i - d_i' theta)`` for any supported loss.

Squared loss is solved through the normal equations. Huber loss is
continuously differentiable and is minimised directly with damped Newton
steps. Pinball and epsilon-insensitive losses are minimised along a
decreasing sequence of smoothing widths (each stage warm-started from the
previous one); the widths in ``SolverConfig.kappa_schedule`` are multiplied
by a robust scale of the initial least-squares residuals so that the whole
procedure is equivariant to rescaling ``y``.

Each Newton step uses the smoothed second derivative. Where that Hessian
is singular (fewer residuals inside smoothing patches than parameters) the
objective is locally linear along its null space; the solver then moves
along the projected negative gradient with an exact line search, which
stops where the next residual enters a patch, much like a simplex pivot.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .errors import DivergenceError, SingularDesignError
from .losses import HUBER_K, LossSpec, loss_value, mad, smoothed_loss

log = logging.getLogger(__name__)

MAD_TO_SD = 0.6745


@dataclass(frozen=True)
class SolverConfig:
    param_tol: float = 1e-8
    max_outer: int = 50
    max_inner: int = 200
    kappa_schedule: tuple[float, ...] = (1.0, 1e-1, 1e-2, 1e-4, 1e-6)
    ridge_floor: float = 1e-10
    armijo: float = 1e-4

    def __post_init__(self):
        if self.param_tol <= 0 or self.ridge_floor <= 0 or not 0 < self.armijo < 1:
            raise ValueError("tolerances must be positive")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValueError("iteration limits must be positive")
        ks = tuple(float(k) for k in self.kappa_schedule)
        if not ks or any(k <= 0 for k in ks) or any(b >= a for a, b in zip(ks, ks[1:])):
            raise ValueError("kappa_schedule must be positive and strictly decreasing")
        object.__setattr__(self, "kappa_schedule", ks)

    def to_dict(self) -> dict:
        return {
            "param_tol": self.param_tol,
            "max_outer": self.max_outer,
            "max_inner": self.max_inner,
            "kappa_schedule": list(self.kappa_schedule),
            "ridge_floor": self.ridge_floor,
            "armijo": self.armijo,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SolverConfig":
        d = dict(d)
        if "kappa_schedule" in d:
            d["kappa_schedule"] = tuple(d["kappa_schedule"])
        return cls(**d)


@dataclass(frozen=True)
class FitDiagnostics:
    converged: bool
    outer_rounds: int
    final_objective: float
    final_grad_norm: float
    inner_iterations: int = 0
    kappa_final: float | None = None
    huber_alpha: float | None = None
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "converged": self.converged,
            "outer_rounds": self.outer_rounds,
            "final_objective": self.final_objective,
            "final_grad_norm": self.final_grad_norm,
            "inner_iterations": self.inner_iterations,
            "kappa_final": self.kappa_final,
            "huber_alpha": self.huber_alpha,
            "message": self.message,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitDiagnostics":
        return cls(**d)


def objective(design, y, loss: LossSpec, theta) -> float:
    """Exact empirical objective ``(1/n) sum M(y - X theta)``."""
    r = np.asarray(y, float) - np.asarray(design, float) @ np.asarray(theta, float)
    return float(np.mean(loss_value(loss, r)))


def _check_inputs(design, y):
    X = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError(f"design shape {X.shape} incompatible with {y.shape[0]} responses")
    if X.shape[1] == 0:
        raise ValueError("design has no columns")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise DivergenceError("non-finite design or response")
    return X, y


def _check_rank(X: np.ndarray, cfg: SolverConfig):
    s = np.linalg.svd(X, compute_uv=False)
    if s.size < X.shape[1] or s[-1] ** 2 <= cfg.ridge_floor * s[0] ** 2:
        smin = s[-1] if s.size == X.shape[1] else 0.0
        raise SingularDesignError(
            f"design is rank deficient (condition number {s[0] / max(smin, 1e-300):.3g})"
        )


def least_squares(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Normal-equation solution via an orthogonal factorisation."""
    theta, *_ = np.linalg.lstsq(X, y, rcond=None)
    return theta


def residual_scale(r) -> float:
    """Normalised median absolute deviation; falls back to mean absolute value."""
    r = np.asarray(r, float)
    s = mad(r) / MAD_TO_SD
    if s > 0:
        return s
    return float(np.mean(np.abs(r - np.median(r))))


def _split_direction(H: np.ndarray, grad: np.ndarray, rel_tol: float):
    """Search direction from the smoothed-loss Hessian ``H``.

    On the range of ``H`` this is the Newton step. Along the null space of
    ``H`` (no residual inside a smoothing patch moves) the objective is
    locally linear; if the gradient has a component there, the projected
    steepest-descent direction is returned instead, flagged for an exact
    line search that stops where the next residual enters a patch.
    """
    lam, V = np.linalg.eigh(H)
    top = lam[-1] if lam.size else 0.0
    rng_mask = lam > rel_tol * top if top > 0 else np.zeros(lam.shape, bool)
    gv = V.T @ grad
    g_null = gv[~rng_mask]
    if g_null.size and np.linalg.norm(g_null) > 1e-9 * np.linalg.norm(grad):
        return -(V[:, ~rng_mask] @ g_null), True
    return -(V[:, rng_mask] @ (gv[rng_mask] / lam[rng_mask])), False


def _exact_line_search(r, s, loss: LossSpec, kappa: float) -> float:
    """Minimiser over ``t >= 0`` of ``mean(M_kappa(r - t s))``.

    The derivative in ``t`` is continuous and non-decreasing, so the root is
    bracketed by doubling and then located with Brent's method.
    """

    def dphi(t):
        return -float(np.mean(smoothed_loss(loss, r - t * s, kappa)[1] * s))

    lo, hi = 0.0, 1.0
    for _ in range(200):
        if dphi(hi) >= 0:
            break
        lo, hi = hi, hi * 2.0
    else:
        raise DivergenceError("objective unbounded below along search direction")
    if dphi(hi) == 0:
        return hi
    return optimize.brentq(dphi, lo, hi, xtol=1e-15 * hi, rtol=4 * np.finfo(float).eps)


def _newton_stage(X, y, loss: LossSpec, kappa: float, theta: np.ndarray, cfg: SolverConfig):
    """Damped Newton on the smoothed objective at width ``kappa``.

    Returns ``(theta, smoothed_objective, grad_norm, converged, iterations)``.
    """
    n = X.shape[0]

    def evaluate(th):
        r = y - X @ th
        v, d1, d2 = smoothed_loss(loss, r, kappa)
        return float(np.mean(v)), r, d1, d2

    f, r, d1, d2 = evaluate(theta)
    if not np.isfinite(f):
        raise DivergenceError("non-finite objective at starting point")
    grad = -(X.T @ d1) / n
    converged = False
    it = 0
    for it in range(1, cfg.max_inner + 1):
        if not np.any(grad):
            converged = True
            break
        step, exact_search = _split_direction((X.T * d2) @ X / n, grad, cfg.ridge_floor)
        slope = float(grad @ step)
        if not slope < 0:
            converged = True
            break
        if exact_search:
            t = _exact_line_search(r, X @ step, loss, kappa)
            th_new = theta + t * step
            f_new, r_new, d1_new, d2_new = evaluate(th_new)
            accepted = np.isfinite(f_new) and f_new <= f
        else:
            t, accepted = 1.0, False
            while t >= 1e-10:
                th_new = theta + t * step
                f_new, r_new, d1_new, d2_new = evaluate(th_new)
                if np.isfinite(f_new) and f_new <= f + cfg.armijo * t * slope:
                    accepted = True
                    break
                t *= 0.5
        tol = cfg.param_tol * (1.0 + float(np.max(np.abs(theta))))
        if not accepted:
            # no decrease representable in floating point along a descent
            # direction: optimal up to rounding
            converged = bool(np.max(np.abs(step)) <= 1e6 * tol)
            break
        change = float(np.max(np.abs(th_new - theta)))
        theta, f, r, d1, d2 = th_new, f_new, r_new, d1_new, d2_new
        grad = -(X.T @ d1) / n
        if change <= tol and not exact_search:
            converged = True
            break
    if not np.isfinite(f):
        raise DivergenceError("non-finite objective")
    return theta, f, float(np.linalg.norm(grad)), converged, it


def minimize(design, y, loss: LossSpec, cfg: SolverConfig | None = None, init=None):
    """Minimise the empirical loss over ``theta``.

    Returns ``(theta_hat, FitDiagnostics)``. Raises ``SingularDesignError``
    for rank-deficient designs and ``DivergenceError`` when the objective
    becomes non-finite.
    """
    cfg = cfg or SolverConfig()
    X, y = _check_inputs(design, y)
    _check_rank(X, cfg)
    if loss.kind == "eps_insensitive" and loss.is_auto:
        loss = LossSpec.eps_insensitive(default_epsilon(y))
    if loss.kind == "squared":
        theta = least_squares(X, y)
        r = y - X @ theta
        grad = -(X.T @ r) / len(y)
        return theta, FitDiagnostics(
            True, 0, float(np.mean(0.5 * r * r)), float(np.linalg.norm(grad)), message="normal equations"
        )
    if loss.kind == "huber" and loss.is_auto:
        return _minimize_huber_auto(X, y, cfg, init)

    theta = least_squares(X, y) if init is None else np.asarray(init, float).copy()
    if theta.shape != (X.shape[1],):
        raise ValueError(f"init must have length {X.shape[1]}")
    r0 = y - X @ theta
    if loss.kind == "huber":
        theta, f, gnorm, ok, iters = _newton_stage(X, y, loss, 1.0, theta, cfg)
        return theta, FitDiagnostics(ok, 1, objective(X, y, loss, theta), gnorm, iters)

    scale = residual_scale(r0)
    if scale <= ZERO_SCALE * float(np.max(np.abs(y))):
        # every residual is zero: the loss attains its minimum at every row
        return theta, FitDiagnostics(True, 0, objective(X, y, loss, theta), 0.0, message="exact fit")
    total = 0
    ok = True
    gnorm = np.nan
    kappa = None
    rounds = 0
    for kappa_rel in cfg.kappa_schedule[: cfg.max_outer]:
        kappa = kappa_rel * scale
        theta, f, gnorm, ok, iters = _newton_stage(X, y, loss, kappa, theta, cfg)
        total += iters
        rounds += 1
    if not ok:
        log.warning("solver hit max_inner=%d at the final smoothing stage", cfg.max_inner)
    return theta, FitDiagnostics(ok, rounds, objective(X, y, loss, theta), gnorm, total, kappa_final=kappa)


def default_epsilon(y) -> float:
    """Epsilon-insensitive width ``0.1 * MAD(y)`` (artifact default, not tuned)."""
    e = 0.1 * mad(y)
    return e if e > 0 else 0.1 * float(np.std(y)) or 1e-3


ZERO_SCALE = 1e-12


def huber_alpha_from_residuals(r, reference: float = 0.0) -> float | None:
    """``1.345 * MAD(r) / 0.6745``; ``None`` when the scale is zero.

    Scales at or below ``1e-12 * reference`` count as zero, so that an
    exact fit polluted by rounding still takes the degenerate path.
    """
    s = mad(r) / MAD_TO_SD
    return HUBER_K * s if s > ZERO_SCALE * reference and s > 0 else None


def _minimize_huber_auto(X, y, cfg: SolverConfig, init):
    theta = least_squares(X, y) if init is None else np.asarray(init, float).copy()
    ref = float(np.max(np.abs(y)))
    alpha = None
    total = 0
    ok = False
    gnorm = np.nan
    rounds = 0
    for rounds in range(1, cfg.max_outer + 1):
        new_alpha = huber_alpha_from_residuals(y - X @ theta, ref)
        if new_alpha is None:
            if alpha is None:
                log.warning("residual scale is zero; falling back to squared loss")
                theta = least_squares(X, y)
                r = y - X @ theta
                return theta, FitDiagnostics(
                    True, rounds, float(np.mean(0.5 * r * r)), float(np.linalg.norm(X.T @ r) / len(y)),
                    message="zero residual scale: squared-loss fallback",
                )
            break
        prev = theta
        theta, f, gnorm, ok_inner, iters = _newton_stage(X, y, LossSpec.huber(new_alpha), 1.0, theta, cfg)
        total += iters
        alpha_change = abs(new_alpha - alpha) if alpha is not None else np.inf
        alpha = new_alpha
        tol = cfg.param_tol * (1.0 + float(np.max(np.abs(theta))))
        if ok_inner and alpha_change <= cfg.param_tol * alpha and np.max(np.abs(theta - prev)) <= tol:
            ok = True
            break
    loss = LossSpec.huber(alpha)
    return theta, FitDiagnostics(
        ok, rounds, objective(X, y, loss, theta), gnorm, total, huber_alpha=alpha
    )


def resolve_huber_alpha(design, y, cfg: SolverConfig | None = None) -> float:
    """Jointly iterate Huber fits and the MAD scale; return the converged threshold."""
    theta, diag = minimize(design, y, LossSpec.huber("auto"), cfg)
    if diag.huber_alpha is None:
        raise ValueError("residual scale is zero; no Huber threshold exists")
    return diag.huber_alpha
