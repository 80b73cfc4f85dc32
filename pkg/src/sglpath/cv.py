"""K-fold cross validation over a frozen lambda grid."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import linalg
from .groups import GroupStructure
from .model import SolutionPath, predict
from .penalty import to_pm1
from .solver import Family, FitConfig, fit_path

__all__ = ["CvResult", "make_folds", "cross_validate", "LOSSES",
           "select_lambdas", "default_jobs"]

log = logging.getLogger(__name__)

LOSSES = {
    "gaussian": ("mse", "mae"),
    "binomial": ("deviance", "misclass"),
}


@dataclass(frozen=True, eq=False)
class CvResult:
    """Cross-validated loss along the lambda grid.

    ``mean`` pools the held-out losses of all observations; ``sd`` is the
    across-fold standard deviation of the per-fold mean losses and
    ``se = sd / sqrt(K)``. Cells whose fold fit did not converge are left
    out (``counts`` holds the number of folds used per lambda).
    """

    lambdas: np.ndarray
    mean: np.ndarray
    sd: np.ndarray
    se: np.ndarray
    counts: np.ndarray
    lambda_min: float
    lambda_1se: float
    index_min: int
    index_1se: int
    loss: str
    folds: np.ndarray
    path: SolutionPath
    dropped: list = field(default_factory=list)

    @property
    def n_folds(self):
        return int(self.folds.max()) + 1


def make_folds(n, k, seed=0):
    """Fold id (0..k-1) per observation; sizes differ by at most one."""
    n, k = int(n), int(k)
    if not 2 <= k <= n:
        raise ValueError(f"need 2 <= nfolds <= n, got nfolds={k}, n={n}")
    rng = np.random.default_rng(seed)
    return rng.permutation(np.arange(n) % k)


def default_jobs():
    env = os.environ.get("SGL_PATH_JOBS")
    if env:
        return max(1, int(env))
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") \
        else (os.cpu_count() or 1)


def _pointwise_loss(kind, y, link, levels):
    # (n_test, M) losses per held-out observation
    if kind == "mse":
        return (y[:, None] - link) ** 2
    if kind == "mae":
        return np.abs(y[:, None] - link)
    yt = to_pm1(y, levels)[:, None]
    if kind == "deviance":
        return 2.0 * np.logaddexp(0.0, -yt * link)
    if kind == "misclass":
        return ((link > 0) != (yt > 0)).astype(float)
    raise ValueError(f"unknown loss {kind!r}")


def select_lambdas(lambdas, mean, se):
    """``(index_min, index_1se)``.

    ``index_min`` minimizes ``mean`` and prefers the smallest lambda on
    ties; ``index_1se`` is the largest lambda with
    ``mean <= mean[index_min] + se[index_min]``.
    """
    ok = np.isfinite(mean)
    if not np.any(ok):
        raise ValueError("no lambda has a finite cross-validated loss")
    best = np.min(mean[ok])
    i_min = int(np.flatnonzero(ok & (mean == best))[-1])
    s = se[i_min] if np.isfinite(se[i_min]) else 0.0
    i_1se = int(np.flatnonzero(ok & (mean <= best + s))[0])
    return i_min, i_1se


def cross_validate(X, y, groups, config: FitConfig | None = None, k=10,
                   loss=None, seed=0, jobs=None, folds=None,
                   **kw) -> CvResult:
    """K-fold cross validation of ``fit_path``.

    The full-data fit fixes the lambda grid; each fold refits on the other
    folds with that grid. ``loss`` defaults to ``mse`` (gaussian) or
    ``deviance`` (binomial). Folds run on up to ``jobs`` threads (default:
    ``SGL_PATH_JOBS`` or the available CPUs); results do not depend on the
    thread count.
    """
    cfg = config or FitConfig()
    if kw:
        cfg = replace(cfg, **kw)
    family = cfg.family.value
    loss = loss or LOSSES[family][0]
    if loss not in LOSSES[family]:
        raise ValueError(f"loss {loss!r} does not apply to the {family} "
                         f"family (use one of {', '.join(LOSSES[family])})")
    Xd = linalg.as_design(X)
    y = np.asarray(y, dtype=float).ravel()
    n = y.size
    if not isinstance(groups, GroupStructure):
        groups = GroupStructure.from_labels(groups)
    folds = make_folds(n, k, seed) if folds is None else np.asarray(folds)
    if folds.shape != (n,):
        raise ValueError("need one fold id per observation")
    K = int(folds.max()) + 1

    full = fit_path(Xd, y, groups, cfg)
    grid = full.lambdas
    if grid.size == 0:
        raise RuntimeError("the full-data fit failed at its first lambda")
    levels = full.levels
    if cfg.family is Family.BINOMIAL:
        for f in range(K):
            train = y[folds != f]
            if np.unique(train).size < 2:
                raise ValueError(f"fold {f}: training data hold a single "
                                 "response class")
    fold_cfg = replace(cfg, lambdas=tuple(grid.tolist()))

    def run(f):
        test = folds == f
        tr = np.flatnonzero(~test)
        te = np.flatnonzero(test)
        pth = fit_path(linalg.take_rows(Xd, tr), y[tr], groups, fold_cfg)
        ok = np.array([d.converged for d in pth.diagnostics[:pth.n_lambda]],
                      dtype=bool)
        ok = np.concatenate([ok, np.zeros(grid.size - ok.size, dtype=bool)])
        out = np.full((te.size, grid.size), np.nan)
        if pth.n_lambda:
            link = predict(pth, linalg.take_rows(Xd, te), kind="link")
            out[:, :pth.n_lambda] = _pointwise_loss(loss, y[te], link,
                                                    levels)
        out[:, ~ok] = np.nan
        return f, te, out, ok

    jobs = default_jobs() if jobs is None else max(1, int(jobs))
    if jobs == 1 or K == 1:
        results = [run(f) for f in range(K)]
    else:
        with ThreadPoolExecutor(max_workers=min(jobs, K)) as ex:
            results = list(ex.map(run, range(K)))

    M = grid.size
    pointwise = np.full((n, M), np.nan)
    fold_means = np.full((K, M), np.nan)
    dropped = []
    for f, te, out, ok in results:
        pointwise[te] = out
        fold_means[f] = out.mean(axis=0)
        for m in np.flatnonzero(~ok):
            dropped.append((int(f), int(m)))
            log.warning("fold %d, lambda %g: no convergence; cell dropped",
                        f, grid[m])
    counts = np.sum(np.isfinite(fold_means), axis=0)
    with np.errstate(invalid="ignore"):
        mean = np.array([np.mean(pointwise[:, m][np.isfinite(
            pointwise[:, m])]) if counts[m] else np.nan for m in range(M)])
        sd = np.array([np.std(fm[np.isfinite(fm)], ddof=1) if c > 1
                       else np.nan for fm, c in zip(fold_means.T, counts)])
        se = sd / np.sqrt(np.maximum(counts, 1))
    i_min, i_1se = select_lambdas(grid, mean, se)
    return CvResult(grid.copy(), mean, sd, se, counts, float(grid[i_min]),
                    float(grid[i_1se]), i_min, i_1se, loss, folds, full,
                    dropped)
