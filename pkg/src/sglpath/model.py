"""Fitted regularization paths: coefficient lookup, prediction, summaries."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import sparse

from . import linalg
from .groups import GroupStructure

__all__ = ["SolutionPath", "CoefResult", "coef_at", "predict", "path_summary"]


@dataclass(frozen=True)
class LambdaDiagnostics:
    """Per-lambda solver bookkeeping."""

    lam: float
    converged: bool
    sweeps: int
    visits: int
    kkt_loops: int
    strong_size: int
    active_size: int
    violations: int
    max_change: float
    max_objective_increase: float = 0.0

    def to_dict(self):
        return dict(self.__dict__)


@dataclass(frozen=True, eq=False)
class SolutionPath:
    """Coefficients along a decreasing lambda grid.

    Attributes
    ----------
    lambdas : ndarray, shape (M,)
    beta : scipy.sparse.csc_matrix, shape (p, M)
    intercepts : ndarray, shape (M,)
    family : str
    groups : GroupStructure
    alpha : float
    diagnostics : list of LambdaDiagnostics
        One entry per attempted lambda; may hold one more entry than
        ``lambdas`` when the path stopped at a failing lambda.
    truncated : bool
    levels : tuple or None
        The two response levels of a binomial fit (second one positive).
    lambda_max : float or None
    column_scale : ndarray or None
        Multipliers applied to the design columns before fitting when the
        fit was standardized; ``beta`` is always on the original scale.
    """

    lambdas: np.ndarray
    beta: sparse.csc_matrix
    intercepts: np.ndarray
    family: str
    groups: GroupStructure
    alpha: float
    diagnostics: list = field(default_factory=list)
    truncated: bool = False
    levels: tuple | None = None
    lambda_max: float | None = None
    column_scale: np.ndarray | None = None

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=float)
        if lam.ndim != 1 or (lam.size > 1 and np.any(np.diff(lam) >= 0)):
            raise ValueError("lambdas must be strictly decreasing")
        if np.any(lam <= 0):
            raise ValueError("lambdas must be positive")
        beta = sparse.csc_matrix(self.beta)
        if beta.shape != (self.groups.n_features, lam.size):
            raise ValueError("coefficient matrix has the wrong shape")
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "intercepts",
                           np.asarray(self.intercepts, dtype=float))

    @property
    def n_lambda(self):
        return self.lambdas.size

    @property
    def nnzero(self):
        return np.diff(self.beta.indptr).astype(np.int64)

    @property
    def active_groups(self):
        gid = self.groups.group_index
        out = np.zeros(self.n_lambda, dtype=np.int64)
        for m in range(self.n_lambda):
            rows = self.beta.indices[self.beta.indptr[m]:self.beta.indptr[m + 1]]
            out[m] = np.unique(gid[rows]).size
        return out

    def column(self, m):
        return self.beta[:, m].toarray().ravel()

    def group_norms(self):
        """Array (G, M) of groupwise l2 norms along the path."""
        dense = self.beta.toarray()
        return np.array([np.linalg.norm(dense[c0:c1], axis=0)
                         for c0, c1 in self.groups.ranges])


class CoefResult(NamedTuple):
    beta: sparse.csc_matrix
    intercept: np.ndarray
    clamped: np.ndarray


def coef_at(path: SolutionPath, s) -> CoefResult:
    """Coefficients at arbitrary penalty levels ``s``.

    Values between grid points are linearly interpolated in lambda; grid
    hits return the stored column unchanged. Values outside the grid are
    clamped to its ends and flagged in ``clamped``.
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if s.size == 0:
        raise ValueError("s must not be empty")
    lam = path.lambdas
    M = lam.size
    clamped = (s > lam[0]) | (s < lam[-1])
    if np.any(clamped):
        warnings.warn("requested lambda outside the fitted range; clamped",
                      stacklevel=2)
    sc = np.clip(s, lam[-1], lam[0])
    # position in the increasing reversed grid
    rev = lam[::-1]
    cols, b0 = [], np.empty(s.size)
    for i, v in enumerate(sc):
        hit = np.flatnonzero(lam == v)
        if hit.size:
            k = hit[0]
            cols.append(path.beta[:, k])
            b0[i] = path.intercepts[k]
            continue
        # lam[k] > v > lam[k + 1]
        k = M - 1 - np.searchsorted(rev, v)
        frac = (lam[k] - v) / (lam[k] - lam[k + 1])
        cols.append((1.0 - frac) * path.beta[:, k] + frac * path.beta[:, k + 1])
        b0[i] = (1.0 - frac) * path.intercepts[k] + frac * path.intercepts[k + 1]
    beta = sparse.hstack(cols, format="csc") if cols else None
    return CoefResult(beta, b0, clamped)


def predict(path: SolutionPath, newX, s=None, kind="link") -> np.ndarray:
    """Predictions for ``newX`` at ``s`` (default: the fitted grid).

    ``kind`` is ``"link"`` (linear predictor), ``"response"`` (mean; the
    sigmoid of the link for binomial fits) or ``"class"`` (0/1 at
    probability 0.5, binomial only). Returns an array (n_new, len(s)).
    """
    X = linalg.as_design(newX)
    if X.n_cols != path.groups.n_features:
        raise ValueError(f"dimension mismatch: new design has {X.n_cols} "
                         f"columns, fit has {path.groups.n_features}")
    if kind not in ("link", "response", "class"):
        raise ValueError(f"unknown prediction type {kind!r}")
    if kind == "class" and path.family != "binomial":
        raise ValueError("class predictions need a binomial fit")
    if s is None:
        beta, b0 = path.beta, path.intercepts
    else:
        beta, b0, _ = coef_at(path, s)
    out = np.empty((X.n_rows, beta.shape[1]))
    dense_cols = beta.toarray()
    for m in range(beta.shape[1]):
        out[:, m] = linalg.matvec(X, dense_cols[:, m]) + b0[m]
    if kind == "link" or path.family == "gaussian":
        return out
    prob = 1.0 / (1.0 + np.exp(-out))
    if kind == "response":
        return prob
    return (prob > 0.5).astype(float)


class PathSummary(NamedTuple):
    rows: list
    quantiles: list


_QUANTILE_LABELS = ("Max.", "3rd Qu.", "Median", "1st Qu.", "Min.")


def path_summary(path: SolutionPath) -> PathSummary:
    """Per-lambda ``(lambda, index, nnzero, active_grps)`` rows plus the five
    quantile rows of the printed summary.

    Indices are 1-based. Quantile rows pick the grid index at the 0, 25, 50,
    75 and 100 percent points of ``1..M`` (rounded half to even).
    """
    nnz = path.nnzero
    act = path.active_groups
    rows = [dict(lambda_=float(path.lambdas[m]), index=m + 1,
                 nnzero=int(nnz[m]), active_grps=int(act[m]))
            for m in range(path.n_lambda)]
    quantiles = []
    if rows:
        pos = np.quantile(np.arange(1, path.n_lambda + 1),
                          [0.0, 0.25, 0.5, 0.75, 1.0])
        for label, q in zip(_QUANTILE_LABELS, pos):
            r = rows[int(round(q)) - 1]
            quantiles.append(dict(r, label=label))
    return PathSummary(rows, quantiles)
