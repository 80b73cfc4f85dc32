"""Degrees of freedom and information criteria along a Gaussian path."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from . import linalg
from .model import SolutionPath, predict

__all__ = ["RiskEstimates", "exact_df", "approx_df", "estimate_risk",
           "information_criteria"]

DEFAULT_MAX_ACTIVE = 5000
RANK_TOL = 1e-10


@dataclass(frozen=True)
class RiskEstimates:
    """Per-lambda degrees of freedom and criteria.

    ``exact`` marks the lambdas whose df came from the trace formula; the
    rest used the nonzero count.
    """

    lambdas: np.ndarray
    df: np.ndarray
    mse: np.ndarray
    aic: np.ndarray
    bic: np.ndarray
    gcv: np.ndarray
    exact: np.ndarray

    def minima(self):
        """Grid lambda minimizing each criterion (first index on ties)."""
        out = {}
        for name in ("aic", "bic", "gcv"):
            v = getattr(self, name)
            ok = np.isfinite(v) | (v == -np.inf)
            out[name] = (float(self.lambdas[np.flatnonzero(ok)[
                np.argmin(v[ok])]]) if np.any(ok) else None)
        return out


def approx_df(beta) -> float:
    """Number of nonzero coefficients."""
    beta = beta.toarray().ravel() if hasattr(beta, "toarray") \
        else np.asarray(beta)
    return float(np.count_nonzero(beta))


def _group_penalty_blocks(beta_a, gid_a, lam, alpha, gw, free):
    # block diagonal K scaled by the group part of the penalty,
    # restricted to the free (off-bound) active coordinates
    m = beta_a.size
    Kmat = np.zeros((m, m))
    for g in np.unique(gid_a):
        idx = np.flatnonzero(gid_a == g)
        b = beta_a[idx]
        nb = np.linalg.norm(b)
        Kg = (np.eye(idx.size) - np.outer(b, b) / nb ** 2) / nb
        Kmat[np.ix_(idx, idx)] = (1.0 - alpha) * lam * gw[g] * Kg
    return Kmat[np.ix_(free, free)]


def _full_column_rank(A):
    if A.shape[1] > A.shape[0]:
        return False
    R = sla.qr(A, mode="r", pivoting=True)[0]
    tol = RANK_TOL * np.linalg.norm(A)
    return bool(np.all(np.abs(np.diag(R)) > tol))


def exact_df(X, beta, lam, alpha, groups, intercept=True, lower=None,
             upper=None, max_active=DEFAULT_MAX_ACTIVE):
    """Trace of the local hat matrix of a Gaussian sparse group lasso fit.

    On the active coordinates the fitted values move with ``y`` through

        df = tr(X_A (X_A' X_A + n K)^-1 X_A'),

    where ``K`` is block diagonal with blocks
    ``(1-alpha) lam sqrt(w_g) (I - b b'/||b||^2) / ||b||`` over the nonzero
    coordinates ``b`` of each group. The factor ``n`` comes from the
    ``1/(2n)`` scaling of the squared-error loss. With an intercept the
    active columns are centered and the intercept itself is not counted.
    Coordinates held at a nonzero bound do not move with ``y`` and are left
    out.

    Returns ``(df, exact)``; ``exact`` is False when the active design is
    rank deficient or larger than ``max_active`` and the nonzero count was
    used instead.
    """
    Xd = linalg.as_design(X)
    beta = beta.toarray().ravel() if hasattr(beta, "toarray") \
        else np.asarray(beta, dtype=float)
    n = Xd.n_rows
    act = np.flatnonzero(beta)
    if act.size == 0:
        return 0.0, True
    if act.size > max_active:
        warnings.warn(f"{act.size} active coefficients exceed the cap of "
                      f"{max_active}; using the nonzero count", stacklevel=2)
        return approx_df(beta), False
    b = beta[act]
    free = np.ones(act.size, dtype=bool)
    if lower is not None:
        free &= ~((b <= np.asarray(lower)[act]) & (b < 0))
    if upper is not None:
        free &= ~((b >= np.asarray(upper)[act]) & (b > 0))
    if not np.any(free):
        return 0.0, True
    cols = act[free]
    XA = _dense_columns(Xd, cols)
    if intercept:
        XA = XA - XA.mean(axis=0)
    if not _full_column_rank(XA):
        warnings.warn("active design is rank deficient; using the nonzero "
                      "count", stacklevel=2)
        return approx_df(beta), False
    gid = groups.group_index[act]
    Kmat = _group_penalty_blocks(b, gid, lam, alpha, groups.group_weights,
                                 free)
    gram = XA.T @ XA
    M = gram + n * Kmat
    return float(np.trace(sla.solve(M, gram, assume_a="sym"))), True


def _dense_columns(Xd, cols):
    out = np.empty((Xd.n_rows, cols.size))
    e = np.zeros(Xd.n_cols)
    for k, j in enumerate(cols):
        e[j] = 1.0
        out[:, k] = linalg.matvec(Xd, e)
        e[j] = 0.0
    return out


def information_criteria(mse, df, n):
    """AIC, BIC and GCV from the mean squared error and df.

    ``log(mse) + c df / n`` with ``c = 2`` (AIC) or ``log n`` (BIC), and
    ``mse / (1 - df/n)^2``; GCV is ``inf`` once ``df >= n``.
    """
    mse = np.asarray(mse, dtype=float)
    df = np.asarray(df, dtype=float)
    with np.errstate(divide="ignore"):
        lm = np.log(mse)
    aic = lm + 2.0 * df / n
    bic = lm + np.log(n) * df / n
    with np.errstate(divide="ignore", invalid="ignore"):
        gcv = np.where(df < n, mse / (1.0 - df / n) ** 2, np.inf)
    return aic, bic, gcv


def estimate_risk(path: SolutionPath, X, y, use_approx=False, lower=None,
                  upper=None, intercept=None,
                  max_active=DEFAULT_MAX_ACTIVE) -> RiskEstimates:
    """AIC, BIC and GCV along a Gaussian path.

    ``intercept`` defaults to whether the path carries any nonzero
    intercept. Pass the bounds used for the fit so coordinates held at a
    bound are excluded from the exact df.
    """
    if path.family != "gaussian":
        raise ValueError("risk estimates are available for gaussian fits only")
    Xd = linalg.as_design(X)
    y = np.asarray(y, dtype=float).ravel()
    n = y.size
    if Xd.n_rows != n or Xd.n_cols != path.groups.n_features:
        raise ValueError("design does not match the response or the fit")
    if intercept is None:
        intercept = bool(np.any(path.intercepts != 0))
    fitted = predict(path, Xd)
    mse = np.mean((y[:, None] - fitted) ** 2, axis=0)

    # exact df lives on the penalized (possibly standardized) scale
    Xs, to_pen = Xd, None
    if path.column_scale is not None and not use_approx:
        to_pen = 1.0 / path.column_scale
        Xs = linalg.scale_columns(Xd, path.column_scale)
    M = path.n_lambda
    df = np.empty(M)
    exact = np.zeros(M, dtype=bool)
    for m in range(M):
        col = path.column(m)
        if use_approx:
            df[m] = approx_df(col)
            continue
        lo, hi = lower, upper
        if to_pen is not None:
            col = col * to_pen
            lo = None if lower is None else np.asarray(lower) * to_pen
            hi = None if upper is None else np.asarray(upper) * to_pen
        df[m], exact[m] = exact_df(Xs, col, path.lambdas[m], path.alpha,
                                   path.groups, intercept, lo, hi, max_active)
    aic, bic, gcv = information_criteria(mse, df, n)
    return RiskEstimates(path.lambdas.copy(), df, mse, aic, bic, gcv, exact)
