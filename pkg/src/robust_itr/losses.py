"""Regression losses: squared, pinball, Huber and epsilon-insensitive.

All functions are vectorised over the residual argument. The squared loss
is ``0.5 r**2`` so its derivative is ``r``; multiply by 2 to compare with a
plain residual sum of squares.

Smoothing replaces each kink of a piecewise-linear loss by the quadratic
that is tangent to both linear pieces at distance ``w`` on either side of
the kink. Outside those patches the surrogate equals the exact loss, and the
largest gap (at the kink itself) is ``w * jump / 4`` where ``jump <= 1`` is
the change in slope.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LOSS_KINDS = ("squared", "pinball", "huber", "eps_insensitive")

# Huber tuning constant used for automatic scale-based thresholds.
HUBER_K = 1.345


@dataclass(frozen=True)
class LossSpec:
    """Tagged loss choice.

    ``param`` is tau for pinball, alpha for Huber (or ``"auto"``), epsilon
    for the epsilon-insensitive loss (or ``"auto"``) and ``None`` for
    squared loss.
    """

    kind: str
    param: float | str | None = None

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}")
        p = self.param
        if self.kind == "squared":
            if p is not None:
                raise ValueError("squared loss takes no parameter")
            return
        if p == "auto":
            if self.kind == "pinball":
                raise ValueError("pinball loss needs an explicit tau")
            return
        if p is None or isinstance(p, (str, bool)):
            raise ValueError(f"{self.kind} loss needs a numeric parameter")
        p = float(p)
        if not np.isfinite(p):
            raise ValueError("loss parameter must be finite")
        if self.kind == "pinball" and not 0.0 < p < 1.0:
            raise ValueError("tau must lie in (0, 1)")
        if self.kind in ("huber", "eps_insensitive") and p <= 0:
            raise ValueError(f"{self.kind} parameter must be positive")
        object.__setattr__(self, "param", p)

    @property
    def is_auto(self) -> bool:
        return self.param == "auto"

    @classmethod
    def squared(cls) -> "LossSpec":
        return cls("squared")

    @classmethod
    def pinball(cls, tau: float) -> "LossSpec":
        return cls("pinball", tau)

    @classmethod
    def huber(cls, alpha: float | str = "auto") -> "LossSpec":
        return cls("huber", alpha)

    @classmethod
    def eps_insensitive(cls, eps: float | str) -> "LossSpec":
        return cls("eps_insensitive", eps)

    @classmethod
    def parse(cls, tag: str) -> "LossSpec":
        """Parse ``squared``, ``pinball:TAU``, ``huber:auto``, ``huber:A`` or ``eps:E``."""
        name, _, arg = tag.strip().partition(":")
        name = {"eps": "eps_insensitive", "ls": "squared"}.get(name, name)
        if name == "squared":
            if arg:
                raise ValueError("squared loss takes no parameter")
            return cls.squared()
        if name not in LOSS_KINDS:
            raise ValueError(f"unknown loss tag {tag!r}")
        if not arg:
            raise ValueError(f"loss {name} needs a parameter, e.g. {name}:0.5")
        if arg == "auto":
            return cls(name, "auto")
        try:
            val = float(arg)
        except ValueError:
            raise ValueError(f"bad loss parameter {arg!r}") from None
        return cls(name, val)

    def tag(self) -> str:
        if self.kind == "squared":
            return "squared"
        short = "eps" if self.kind == "eps_insensitive" else self.kind
        return f"{short}:{self.param:g}" if not self.is_auto else f"{short}:auto"

    def to_json(self) -> dict:
        return {"kind": self.kind, "param": self.param}

    @classmethod
    def from_json(cls, d: dict) -> "LossSpec":
        return cls(d["kind"], d.get("param"))


def _require_resolved(spec: LossSpec):
    if spec.is_auto:
        raise ValueError(f"{spec.kind} parameter 'auto' must be resolved before evaluating the loss")


def pinball(r, tau: float):
    r = np.asarray(r, dtype=float)
    return np.where(r >= 0, tau * r, (tau - 1.0) * r)


def loss_value(spec: LossSpec, r):
    """Exact loss ``M(r)``."""
    _require_resolved(spec)
    r = np.asarray(r, dtype=float)
    k, p = spec.kind, spec.param
    if k == "squared":
        return 0.5 * r * r
    if k == "pinball":
        return pinball(r, p)
    if k == "huber":
        ar = np.abs(r)
        return np.where(ar < p, 0.5 * r * r, p * ar - 0.5 * p * p)
    return np.maximum(0.0, np.abs(r) - p)


def loss_subgradient(spec: LossSpec, r):
    """A subgradient of ``M`` at ``r``; pinball uses ``tau - 0.5`` at the kink."""
    _require_resolved(spec)
    r = np.asarray(r, dtype=float)
    k, p = spec.kind, spec.param
    if k == "squared":
        return r.copy()
    if k == "pinball":
        return np.where(r > 0, p, np.where(r < 0, p - 1.0, p - 0.5))
    if k == "huber":
        return np.clip(r, -p, p)
    return np.where(np.abs(r) > p, np.sign(r), 0.0)


def _patch(u, w, s_left, s_right):
    """Quadratic patch on ``|u| < w`` around a kink at ``u = 0``.

    Returns value offset, first and second derivative relative to the
    linear piece through the origin; caller adds the kink's base value.
    """
    b = 0.5 * (s_left + s_right)
    c = (s_right - s_left) / (4.0 * w)
    a = (s_right - s_left) * w / 4.0
    return a + b * u + c * u * u, b + 2.0 * c * u, np.full_like(u, 2.0 * c)


def smoothed_loss(spec: LossSpec, r, kappa: float):
    """Smooth convex surrogate of the loss with patch half-width ``kappa``.

    Returns ``(value, first_derivative, second_derivative)`` arrays. Squared
    and Huber losses are returned exactly (Huber is already continuously
    differentiable).
    """
    _require_resolved(spec)
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    r = np.asarray(r, dtype=float)
    k, p = spec.kind, spec.param
    if k == "squared":
        return 0.5 * r * r, r.copy(), np.ones_like(r)
    if k == "huber":
        inside = np.abs(r) < p
        return loss_value(spec, r), np.clip(r, -p, p), inside.astype(float)

    val = loss_value(spec, r).copy()
    d1 = loss_subgradient(spec, r).copy()
    d2 = np.zeros_like(r)
    if k == "pinball":
        w = kappa
        m = np.abs(r) < w
        v, g, h = _patch(r[m], w, p - 1.0, p)
        val[m], d1[m], d2[m] = v, g, h
        return val, d1, d2
    # eps-insensitive: kinks at -eps (slopes -1 | 0) and +eps (0 | 1)
    w = min(kappa, p)
    for centre, sl, sr in ((-p, -1.0, 0.0), (p, 0.0, 1.0)):
        u = r - centre
        m = np.abs(u) < w
        v, g, h = _patch(u[m], w, sl, sr)
        # linear piece through the kink: value 0 at u = 0
        val[m], d1[m], d2[m] = v, g, h
    return val, d1, d2


def pinball_shift_decomposition(tau, x, y):
    """Case-wise expansion of ``rho_tau(x - y) - rho_tau(x)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xpos = x >= 0
    xneg = ~xpos
    return (
        -tau * y * xpos
        + (1.0 - tau) * y * xneg
        + (y - x) * (xpos & (y > x))
        + (x - y) * (xneg & (y < x))
    )


def mad(x) -> float:
    """Median absolute deviation about the median (unnormalised)."""
    x = np.asarray(x, dtype=float)
    return float(np.median(np.abs(x - np.median(x))))
