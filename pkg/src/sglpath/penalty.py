"""Sparse group lasso penalty: soft thresholding, the groupwise proximal
update, subgradient norms and the penalized objective."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg

__all__ = [
    "PenaltyParams",
    "soft_threshold",
    "group_prox_update",
    "group_subgrad_norm",
    "penalty_value",
    "objective",
]


@dataclass(frozen=True)
class PenaltyParams:
    """Penalty level and weights.

    Parameters
    ----------
    alpha : float
        Weight of the l1 part, in [0, 1].
    lam : float
        Overall penalty level, >= 0.
    group_weights : array, shape (G,)
        Group multipliers (square roots of the group weights), all > 0.
    feature_weights : array, shape (p,)
        Per-feature l1 multipliers, >= 0.
    lower_bounds, upper_bounds : array, shape (p,), optional
        Box constraints; must satisfy lower <= 0 <= upper. Default unbounded.
    """

    alpha: float
    lam: float
    group_weights: np.ndarray
    feature_weights: np.ndarray
    lower_bounds: np.ndarray | None = None
    upper_bounds: np.ndarray | None = None

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not self.lam >= 0.0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        gw = np.asarray(self.group_weights, dtype=float)
        fw = np.asarray(self.feature_weights, dtype=float)
        if np.any(gw <= 0) or not np.all(np.isfinite(gw)):
            raise ValueError("group weights must be finite and > 0")
        if np.any(fw < 0) or not np.all(np.isfinite(fw)):
            raise ValueError("feature weights must be finite and >= 0")
        p = fw.shape[0]
        lo = (np.full(p, -np.inf) if self.lower_bounds is None
              else np.asarray(self.lower_bounds, dtype=float))
        hi = (np.full(p, np.inf) if self.upper_bounds is None
              else np.asarray(self.upper_bounds, dtype=float))
        if lo.shape != (p,) or hi.shape != (p,):
            raise ValueError("bounds must have one entry per feature")
        if np.any(lo > 0) or np.any(hi < 0):
            raise ValueError("bounds must satisfy lower <= 0 <= upper")
        object.__setattr__(self, "group_weights", gw)
        object.__setattr__(self, "feature_weights", fw)
        object.__setattr__(self, "lower_bounds", lo)
        object.__setattr__(self, "upper_bounds", hi)

    def with_lambda(self, lam):
        return PenaltyParams(self.alpha, lam, self.group_weights,
                             self.feature_weights, self.lower_bounds,
                             self.upper_bounds)


def soft_threshold(v, b):
    """Coordinatewise ``sign(v) * max(|v| - b, 0)``."""
    v = np.asarray(v, dtype=float)
    b = np.broadcast_to(np.asarray(b, dtype=float), v.shape) \
        if np.ndim(b) == 0 else np.asarray(b, dtype=float)
    if v.shape != b.shape:
        raise ValueError(f"length mismatch: {v.shape} vs {b.shape}")
    if np.any(b < 0):
        raise ValueError("thresholds must be non-negative")
    return np.sign(v) * np.maximum(np.abs(v) - b, 0.0)


def group_prox_update(beta0, grad, t, params: PenaltyParams, g, cols=None):
    """One majorization-minimization update of a single group.

    Computes ``z = S(beta0 - t*grad, t*alpha*lam*omega_g)`` and shrinks it by
    ``(1 - t*(1-alpha)*lam*sqrt(w_g)/||z||)_+``. ``cols`` is the group's
    ``(start, stop)`` column range, used to look up feature weights and
    bounds; if omitted, those arrays in ``params`` are taken to be already
    restricted to the group.

    When a box constraint binds, the result is the exact minimizer of the
    majorized objective over the box rather than a clipped copy of the
    unconstrained update; without binding constraints the two coincide.
    """
    beta0 = np.asarray(beta0, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if not t > 0:
        raise ValueError("step size must be positive")
    if not (np.all(np.isfinite(beta0)) and np.all(np.isfinite(grad))):
        raise ValueError("non-finite input to group_prox_update")
    if cols is None and params.feature_weights.shape != beta0.shape:
        raise ValueError("pass cols when params cover the full feature set")
    c0, c1 = (0, beta0.shape[0]) if cols is None else cols
    if c1 - c0 != beta0.shape[0] or grad.shape != beta0.shape:
        raise ValueError("group dimension mismatch")
    omega = params.feature_weights[c0:c1]
    lo = params.lower_bounds[c0:c1]
    hi = params.upper_bounds[c0:c1]
    a, lam = params.alpha, params.lam
    z = soft_threshold(beta0 - t * grad, t * a * lam * omega)
    tau = t * (1.0 - a) * lam * params.group_weights[g]
    nz = np.linalg.norm(z)
    if nz == 0.0:
        return np.zeros_like(z)
    out = max(1.0 - tau / nz, 0.0) * z
    if np.all((out >= lo) & (out <= hi)):
        return out
    return _shrink_in_box(z, tau, lo, hi)


def _shrink_in_box(s, tau, lo, hi):
    # minimizer has the form clip(gamma * s); find gamma by bisection on
    # ||clip(gamma s)|| (1 - gamma) = tau * gamma
    eff = np.where((s > 0) & (hi <= 0), 0.0, s)
    eff = np.where((s < 0) & (lo >= 0), 0.0, eff)
    if np.linalg.norm(eff) <= tau:
        return np.zeros_like(s)
    a, b = 0.0, 1.0
    while True:
        g = 0.5 * (a + b)
        if g <= a or g >= b:
            break
        r = np.linalg.norm(np.clip(g * s, lo, hi))
        if r * (1.0 - g) - tau * g > 0:
            a = g
        else:
            b = g
    return np.clip(a * s, lo, hi)


def group_subgrad_norm(grad_g, alpha, thresh_scale, omega_g):
    """``||S(grad_g, thresh_scale*alpha*omega_g)||_2``.

    Compared against ``(1-alpha)*lambda*sqrt(w_g)`` this is the optimality
    test for a group sitting at zero.
    """
    if thresh_scale < 0:
        raise ValueError("thresh_scale must be >= 0")
    grad_g = np.asarray(grad_g, dtype=float)
    if not np.all(np.isfinite(grad_g)):
        raise ValueError("non-finite gradient")
    thr = thresh_scale * alpha * np.asarray(omega_g, dtype=float)
    return float(np.linalg.norm(soft_threshold(grad_g, thr)))


def penalty_value(beta, params: PenaltyParams, groups) -> float:
    beta = np.asarray(beta, dtype=float)
    a, lam = params.alpha, params.lam
    grp = sum(params.group_weights[g] * np.linalg.norm(beta[c0:c1])
              for g, (c0, c1) in enumerate(groups.ranges))
    l1 = np.sum(params.feature_weights * np.abs(beta))
    return (1.0 - a) * lam * grp + a * lam * l1


def objective(X, y, beta, intercept, params: PenaltyParams, groups,
              family="gaussian") -> float:
    """Penalized objective.

    Gaussian: ``||y - X beta - b0||^2 / (2n)`` plus penalty. Binomial:
    mean logistic loss with labels recoded to +-1 (``y`` may hold any two
    levels; the larger is the positive class) plus penalty.
    """
    X = linalg.as_design(X)
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    if X.n_rows != n or np.shape(beta) != (X.n_cols,):
        raise ValueError("dimension mismatch")
    eta = linalg.matvec(X, beta) + intercept
    family = str(getattr(family, "value", family))
    if family == "gaussian":
        loss = np.sum((y - eta) ** 2) / (2.0 * n)
    elif family == "binomial":
        yt = to_pm1(y)
        loss = np.mean(np.logaddexp(0.0, -yt * eta))
    else:
        raise ValueError(f"unknown family {family!r}")
    return float(loss + penalty_value(beta, params, groups))


def to_pm1(y, levels=None):
    """Recode a two-level response to -1/+1.

    With ``levels`` given, ``levels[1]`` is the positive class. Otherwise
    responses in {0, 1} or {-1, 1} map by sign, and any other pair maps its
    larger value to +1.
    """
    y = np.asarray(y, dtype=float)
    if levels is None:
        seen = np.unique(y)
        if set(seen) <= {0.0, 1.0} or set(seen) <= {-1.0, 1.0}:
            return np.where(y > 0, 1.0, -1.0)
        if seen.size != 2:
            raise ValueError("binomial response needs exactly two levels")
        levels = seen
    lo, hi = levels
    if not np.all((y == lo) | (y == hi)):
        raise ValueError("response contains values outside the two levels")
    return np.where(y == hi, 1.0, -1.0)
