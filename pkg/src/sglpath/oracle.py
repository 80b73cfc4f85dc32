"""Slow reference solvers used to check the path solver.

Nothing here touches the blockwise descent, the screening rules or the
compiled kernels: the reference solver is plain proximal gradient on the
full coefficient vector, with dense numpy linear algebra.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .penalty import PenaltyParams, group_prox_update, penalty_value, to_pm1

__all__ = ["OracleConfig", "ReferenceResult", "prox_full",
           "solve_reference", "finite_diff_gradient", "loss_function"]


@dataclass(frozen=True)
class OracleConfig:
    """``accelerate`` switches from plain proximal gradient to its monotone
    accelerated variant; both use the fixed step 1/L and the same stopping
    test (a plain proximal-gradient step gains less than ``tol``)."""

    max_iter: int = 200_000
    tol: float = 1e-10
    accelerate: bool = True

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")


@dataclass
class ReferenceResult:
    beta: np.ndarray
    intercept: float
    objective: float
    iterations: int
    converged: bool
    trace: np.ndarray


def prox_full(beta, grad, step, params: PenaltyParams, groups):
    """Proximal step applied to every group with a common step size."""
    beta = np.asarray(beta, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if np.all(np.isinf(params.lower_bounds)) \
            and np.all(np.isinf(params.upper_bounds)):
        return _prox_unbounded(beta - step * grad, step, params, groups)
    out = np.empty_like(beta)
    for g, (c0, c1) in enumerate(groups.ranges):
        out[c0:c1] = group_prox_update(beta[c0:c1], grad[c0:c1], step, params,
                                       g, (c0, c1))
    return out


def _prox_unbounded(v, step, params, groups):
    # all groups at once: soft threshold, then shrink each group norm
    a, lam = params.alpha, params.lam
    thr = step * a * lam * params.feature_weights
    z = np.sign(v) * np.maximum(np.abs(v) - thr, 0.0)
    norms = np.sqrt(np.add.reduceat(z * z, groups.starts))
    tau = step * (1.0 - a) * lam * params.group_weights
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(norms > 0, np.maximum(1.0 - tau / norms, 0.0), 0.0)
    return z * np.repeat(scale, groups.sizes)


def _top_eigenvalue(M, iters=5000):
    # plain power iteration on a small dense PSD matrix
    v = np.ones(M.shape[0]) / np.sqrt(M.shape[0])
    mu = 0.0
    for _ in range(iters):
        w = M @ v
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        v = w / nw
        mu_new = v @ M @ v
        if abs(mu_new - mu) <= 1e-12 * mu_new:
            mu = mu_new
            break
        mu = mu_new
    # the Rayleigh quotient never exceeds the top eigenvalue; pad it
    return mu * (1 + 1e-6)


def loss_function(X, y, family="gaussian"):
    """Return ``f(beta, b0)``, the unpenalized loss as a plain function."""
    A = X.to_dense() if hasattr(X, "to_dense") else np.asarray(X, float)
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    if family == "gaussian":
        return lambda b, b0=0.0: float(np.sum((y - A @ b - b0) ** 2) / (2 * n))
    yt = to_pm1(y)
    return lambda b, b0=0.0: float(np.mean(np.logaddexp(0.0,
                                                        -yt * (A @ b + b0))))


def solve_reference(X, y, groups, params: PenaltyParams, family="gaussian",
                    config: OracleConfig | None = None, intercept=True,
                    beta0=None, b00=None) -> ReferenceResult:
    """Minimize the penalized objective by proximal gradient.

    The intercept is an unpenalized coordinate. The step is 1/L with L the
    top eigenvalue of the Hessian bound of the loss in (beta, b0). Stops when
    the objective decreases by less than ``tol * max(1, |objective|)``.
    """
    config = config or OracleConfig()
    A = linalg.as_design(X).to_dense()
    y = np.asarray(y, dtype=float)
    n, p = A.shape
    yt = to_pm1(y) if family == "binomial" else y
    Z = np.hstack([A, np.ones((n, 1))]) if intercept else A
    L = _top_eigenvalue(Z.T @ Z / n)
    if family == "binomial":
        L *= 0.25
    step = 1.0 / L if L > 0 else 1.0
    beta = np.zeros(p) if beta0 is None else np.array(beta0, dtype=float)
    b0 = 0.0 if b00 is None else float(b00)

    def grads(b, c):
        eta = A @ b + c
        if family == "gaussian":
            w = -(y - eta) / n
        else:
            w = -yt / (1.0 + np.exp(yt * eta)) / n
        return A.T @ w, float(np.sum(w))

    def obj(b, c):
        eta = A @ b + c
        if family == "gaussian":
            loss = np.sum((y - eta) ** 2) / (2 * n)
        else:
            loss = np.mean(np.logaddexp(0.0, -yt * eta))
        return float(loss + penalty_value(b, params, groups))

    def pg_step(b, c):
        gb, g0 = grads(b, c)
        return prox_full(b, gb, step, params, groups), \
            (c - step * g0 if intercept else c)

    f = obj(beta, b0)
    trace = [f]
    converged = False
    it = 0
    # accelerated state: extrapolation point and momentum
    yb, yc, mom = beta.copy(), b0, 1.0
    for it in range(1, config.max_iter + 1):
        if config.accelerate:
            zb, zc = pg_step(yb, yc)
            fz = obj(zb, zc)
            if fz <= f:
                mom_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * mom * mom))
                yb = zb + ((mom - 1.0) / mom_new) * (zb - beta)
                yc = zc + ((mom - 1.0) / mom_new) * (zc - b0)
                beta, b0, f_acc, mom = zb, zc, fz, mom_new
            else:
                # rejected step: restart the momentum from the iterate
                yb, yc, f_acc, mom = beta.copy(), b0, f, 1.0
            f = f_acc
            trace.append(f)
            if it % 10:
                continue
        # stopping test: one plain proximal-gradient step from the iterate
        nb, nc = pg_step(beta, b0)
        f_new = obj(nb, nc)
        gain = f - f_new
        done = gain < config.tol * max(1.0, abs(f))
        if f_new <= f and (done or not config.accelerate):
            beta, b0, f = nb, nc, f_new
        if not config.accelerate:
            trace.append(f)
        if done:
            converged = True
            break
    return ReferenceResult(beta, b0, f, it, converged, np.array(trace))


def finite_diff_gradient(fun, beta, h=1e-6):
    """Central differences of ``fun`` at ``beta``."""
    if not h > 0:
        raise ValueError("h must be positive")
    beta = np.asarray(beta, dtype=float)
    out = np.empty_like(beta)
    for j in range(beta.size):
        e = np.zeros_like(beta)
        e[j] = h
        out[j] = (fun(beta + e) - fun(beta - e)) / (2 * h)
    return out
