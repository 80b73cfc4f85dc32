"""Regularization-path solver for the sparse group lasso.

Each lambda is solved by blockwise majorization-minimization: groups are
visited in turn and updated by one proximal step whose step size is the
inverse of the largest eigenvalue of that group's Hessian block. Along the
path, a sequential strong rule proposes which groups may become active and
KKT checks over the remaining groups certify the result.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse

from . import _kernels as K
from . import linalg
from .groups import GroupStructure
from .model import LambdaDiagnostics, SolutionPath
from .penalty import PenaltyParams, to_pm1

__all__ = [
    "Family",
    "FitConfig",
    "SolverState",
    "ConvergenceReport",
    "Problem",
    "gradient_group",
    "fit_fixed_lambda",
    "strong_screen",
    "kkt_check",
    "kkt_residual",
    "lambda_max",
    "lambda_sequence",
    "fit_path",
]

log = logging.getLogger(__name__)


class Family(str, enum.Enum):
    GAUSSIAN = "gaussian"
    BINOMIAL = "binomial"


@dataclass(frozen=True)
class FitConfig:
    """Path-fitting options.

    ``max_visits`` caps the number of group-block updates spent on a single
    lambda. Once descent has converged and no inactive group violates the
    KKT conditions, the stationarity residual of the active groups is
    checked against ``kkt_tol * lambda``; if it is larger, descent resumes
    with a tighter ``tol``. ``anderson`` is the history length of the extrapolation tried
    between descent sweeps (0 turns it off). ``screen`` turns the sequential strong rule and the active-set
    restriction on; with it off the strong and active sets both hold every
    group, so each descent sweep visits all groups.
    """

    alpha: float = 0.95
    nlambda: int = 100
    lambda_min_ratio: float | None = None
    lambdas: tuple | None = None
    tol: float = 1e-8
    max_visits: int = 3_000_000
    intercept: bool = True
    standardize: bool = False
    lower_bounds: np.ndarray | None = None
    upper_bounds: np.ndarray | None = None
    family: Family = Family.GAUSSIAN
    screen: bool = True
    kkt_slack: float = 1e-6
    kkt_tol: float = 1e-5
    max_kkt_loops: int = 100
    power_tol: float = 1e-6
    power_max_iter: int = 500
    track_objective: bool = False
    anderson: int = 5

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not self.kkt_tol > 0:
            raise ValueError("kkt_tol must be positive")
        if self.anderson < 0:
            raise ValueError("anderson must be >= 0")
        if self.nlambda < 1:
            raise ValueError("nlambda must be >= 1")
        if self.lambda_min_ratio is not None and \
                not 0 < self.lambda_min_ratio <= 1:
            raise ValueError("lambda_min_ratio must lie in (0, 1]")
        if self.lambdas is not None:
            lam = np.asarray(self.lambdas, dtype=float).ravel()
            if lam.size == 0 or np.any(lam <= 0) or np.any(~np.isfinite(lam)):
                raise ValueError("lambda values must be finite and positive")
            if np.any(np.diff(lam) >= 0):
                raise ValueError("lambda sequence must be strictly decreasing")
            object.__setattr__(self, "lambdas", tuple(lam.tolist()))

    def to_dict(self):
        d = {}
        for k, v in self.__dict__.items():
            if isinstance(v, np.ndarray):
                v = [_json_float(x) for x in v.tolist()]
            elif isinstance(v, Family):
                v = v.value
            elif isinstance(v, tuple):
                v = list(v)
            d[k] = v
        return d


def _json_float(x):
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


@dataclass
class ConvergenceReport:
    converged: bool
    sweeps: int
    visits: int
    max_change: float
    max_objective_increase: float = 0.0


class Problem:
    """Design, response and penalty arrays in the form the kernels use.

    For binomial fits ``y`` holds the +-1 recoded labels.
    """

    def __init__(self, X, y, groups: GroupStructure, family, alpha,
                 lower=None, upper=None, intercept=True):
        self.X = linalg.as_design(X)
        self.family = Family(family)
        self.y = np.ascontiguousarray(y, dtype=np.float64)
        self.n = self.y.shape[0]
        if self.X.n_rows != self.n:
            raise ValueError(f"design has {self.X.n_rows} rows but the "
                             f"response has {self.n} entries")
        if self.X.n_cols != groups.n_features:
            raise ValueError(f"design has {self.X.n_cols} columns but the "
                             f"groups cover {groups.n_features} features")
        self.groups = groups
        self.alpha = float(alpha)
        p = groups.n_features
        self.lo = np.full(p, -np.inf) if lower is None else \
            np.ascontiguousarray(lower, dtype=np.float64)
        self.hi = np.full(p, np.inf) if upper is None else \
            np.ascontiguousarray(upper, dtype=np.float64)
        if self.lo.shape != (p,) or self.hi.shape != (p,):
            raise ValueError("bounds must have one entry per feature")
        if np.any(self.lo > 0) or np.any(self.hi < 0):
            raise ValueError("bounds must satisfy lower <= 0 <= upper")
        self.intercept = bool(intercept)
        self.gstart = np.ascontiguousarray(groups.starts, dtype=np.int64)
        self.gend = np.ascontiguousarray(groups.ends, dtype=np.int64)
        self.gw = np.ascontiguousarray(groups.group_weights)
        self.fw = np.ascontiguousarray(groups.feature_weights)
        self.kcode = K.GAUSSIAN if self.family is Family.GAUSSIAN \
            else K.BINOMIAL
        self.xargs = self.X.kernel_args()

    @property
    def n_groups(self):
        return self.groups.n_groups

    def params(self, lam):
        return PenaltyParams(self.alpha, lam, self.gw, self.fw, self.lo,
                             self.hi)

    def step_sizes(self, tol=1e-6, max_iter=500):
        """Per-group step sizes (inverse Lipschitz constants); 0 marks a
        group whose columns are all zero."""
        scale = 1.0 / self.n
        if self.family is Family.BINOMIAL:
            scale *= 0.25
        steps = np.zeros(self.n_groups)
        self.lipschitz_fallback = []
        for g, (c0, c1) in enumerate(self.groups.ranges):
            est = linalg.group_lipschitz(self.X, (c0, c1), scale, tol,
                                         max_iter, full=True)
            if est.used_frobenius:
                self.lipschitz_fallback.append(g)
            steps[g] = 1.0 / est.value if est.value > 0 else 0.0
        return steps


@dataclass
class SolverState:
    """Mutable iterate for one fit.

    ``work`` is the residual ``y - X beta - b0`` for Gaussian fits and the
    linear predictor ``X beta + b0`` for binomial fits.
    """

    beta: np.ndarray
    b0: np.ndarray
    work: np.ndarray
    steps: np.ndarray
    active: set = field(default_factory=set)
    strong: set = field(default_factory=set)
    grad: np.ndarray | None = None

    @property
    def intercept(self):
        return float(self.b0[0])

    @classmethod
    def initial(cls, prob: Problem, steps):
        """Zero coefficients with the intercept-only fit."""
        n, p = prob.n, prob.groups.n_features
        b0 = 0.0
        if prob.intercept:
            if prob.family is Family.GAUSSIAN:
                b0 = float(np.mean(prob.y))
            else:
                frac = float(np.mean(prob.y > 0))
                if frac in (0.0, 1.0):
                    raise ValueError("binomial response has a single class")
                b0 = math.log(frac / (1.0 - frac))
        if prob.family is Family.GAUSSIAN:
            work = prob.y - b0
        else:
            work = np.full(n, b0)
        return cls(np.zeros(p), np.array([b0]), work, steps,
                   grad=np.zeros(p))

    def copy(self):
        return SolverState(self.beta.copy(), self.b0.copy(), self.work.copy(),
                           self.steps, set(self.active), set(self.strong),
                           None if self.grad is None else self.grad.copy())


def _as_index(groups):
    return np.fromiter(sorted(groups), dtype=np.int64)


def gradient_group(state: SolverState, prob: Problem, g) -> np.ndarray:
    """Loss gradient for group ``g`` at the current iterate.

    Gaussian: ``-(1/n) X_g' r`` with r the full residual. Binomial (labels
    +-1): ``-(1/n) X_g' (y * sigmoid(-y * eta))``.
    """
    out = np.zeros(prob.groups.n_features)
    K.group_grads(*prob.xargs, prob.kcode, prob.y, state.work,
                  np.array([g], dtype=np.int64), prob.gstart, prob.gend, out)
    return out[prob.gstart[g]:prob.gend[g]]


def full_gradient(state: SolverState, prob: Problem) -> np.ndarray:
    out = np.zeros(prob.groups.n_features)
    K.group_grads(*prob.xargs, prob.kcode, prob.y, state.work,
                  np.arange(prob.n_groups, dtype=np.int64), prob.gstart,
                  prob.gend, out)
    return out


def fit_fixed_lambda(state: SolverState, prob: Problem, lam, groups_to_visit,
                     tol=1e-8, max_visits=3_000_000, track=False, anderson=5):
    """Blockwise descent at a fixed lambda over ``groups_to_visit``.

    Updates ``state`` in place. Sweeps stop once the largest coefficient
    change in a sweep is at most ``tol * max(1, max|beta|)``, or when the
    visit budget runs out (reported as not converged). Every ``anderson``
    sweeps an extrapolation of the recent iterates is tried and kept only
    when it lowers the objective; ``anderson=0`` gives plain sweeps.
    """
    visit = _as_index(groups_to_visit)
    if visit.size == 0:
        return ConvergenceReport(True, 0, 0, 0.0)
    sweeps, visits, ok, change, inc = K.cd_sweeps(
        *prob.xargs, prob.kcode, prob.y, state.work, state.beta, state.b0,
        visit, prob.gstart, prob.gend, state.steps, prob.alpha, float(lam),
        prob.gw, prob.fw, prob.lo, prob.hi, prob.intercept, float(tol),
        int(max_visits), bool(track), int(anderson))
    return ConvergenceReport(bool(ok), int(sweeps), int(visits),
                             float(change), float(inc))


def strong_screen(grad, prob: Problem, lam_prev, lam_curr, candidates):
    """Sequential strong rule.

    ``grad`` is the loss gradient at the solution for ``lam_prev``. Returns
    the candidates that fail the discard test

        ||S(grad_g, alpha * omega_g * c)|| <= (1 - alpha) * sqrt(w_g) * c,
        c = 2 * lam_curr - lam_prev

    and so must be screened in.
    """
    cand = _as_index(candidates)
    if cand.size == 0:
        return set()
    c = 2.0 * lam_curr - lam_prev
    # c < 0 leaves nothing to discard but groups with a flat gradient
    flags = K.kkt_violations(grad, cand, prob.gstart, prob.gend, prob.alpha,
                             max(c, 0.0), prob.gw, prob.fw, prob.lo, prob.hi,
                             np.zeros(prob.groups.n_features), 0.0)
    return set(cand[flags].tolist())


def kkt_check(state: SolverState, prob: Problem, lam, groups_to_check,
              slack=1e-6):
    """Zero groups in ``groups_to_check`` that violate the inactivity
    condition at ``lam``.

    Refreshes ``state.grad`` for the checked groups. The test is made at
    ``lam * (1 + slack)`` so floating-point ties do not register.
    """
    idx = _as_index(groups_to_check)
    if idx.size == 0:
        return set()
    K.group_grads(*prob.xargs, prob.kcode, prob.y, state.work, idx,
                  prob.gstart, prob.gend, state.grad)
    flags = K.kkt_violations(state.grad, idx, prob.gstart, prob.gend,
                             prob.alpha, float(lam), prob.gw, prob.fw,
                             prob.lo, prob.hi, state.beta, float(slack))
    return set(idx[flags].tolist())


def kkt_residual(beta, grad, prob: Problem, lam, groups_subset=None):
    """Largest violation of the optimality conditions, in units of ``lam``.

    Zero groups: excess of ``||S(grad_g, alpha*lam*omega_g)||`` over
    ``(1-alpha)*lam*sqrt(w_g)``. Nonzero groups: for nonzero interior
    coordinates the stationarity residual
    ``grad_j + (1-alpha)*lam*sqrt(w_g)*beta_j/||beta_g|| + alpha*lam*omega_j*sign(beta_j)``;
    for zero coordinates the excess of ``|grad_j|`` over
    ``alpha*lam*omega_j``. Coordinates held at a bound only count in the
    feasible direction. ``groups_subset`` restricts the check to those
    groups (``grad`` need only be current there).
    """
    G = prob.n_groups
    if groups_subset is None:
        cols = slice(None)
        gid = prob.groups.group_index
    else:
        idx = _as_index(groups_subset)
        if idx.size == 0:
            return 0.0
        cols = np.concatenate([np.arange(prob.gstart[g], prob.gend[g])
                               for g in idx])
        gid = prob.groups.group_index[cols]
    a = prob.alpha
    b = np.asarray(beta)[cols]
    gr = np.asarray(grad)[cols]
    lo, hi, om = prob.lo[cols], prob.hi[cols], prob.fw[cols]
    gpen = (1 - a) * lam * prob.gw
    norms = np.sqrt(np.bincount(gid, b * b, minlength=G))
    nz = b != 0
    # zero coordinates can only move into the box
    eff = np.where((lo >= 0) & (gr > 0), 0.0, gr)
    eff = np.where((hi <= 0) & (eff < 0), 0.0, eff)
    l1 = a * lam * om
    zero_grp = norms[gid] == 0
    st = np.maximum(np.abs(eff) - l1, 0.0)
    st_norm = np.sqrt(np.bincount(gid, np.where(zero_grp, st * st, 0.0),
                                  minlength=G))
    seen = np.zeros(G, dtype=bool)
    seen[gid] = True
    zg = seen & (norms == 0)
    worst = float(np.max(st_norm[zg] - gpen[zg], initial=0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        res = gr + gpen[gid] * b / norms[gid] + l1 * np.sign(b)
    res = np.where(nz & (b <= lo), np.minimum(res, 0.0), res)
    res = np.where(nz & (b >= hi), np.maximum(res, 0.0), res)
    worst = max(worst, float(np.max(np.abs(res[nz]), initial=0.0)))
    inner = ~nz & ~zero_grp
    worst = max(worst, float(np.max(np.abs(eff[inner]) - l1[inner],
                                    initial=0.0)))
    return worst / lam if lam > 0 else worst


def _group_lambda_max(c, alpha, om, gw):
    """Smallest lambda with ||S(c, alpha*lam*om)|| <= (1-alpha)*lam*gw."""
    if not np.any(c):
        return 0.0
    ac = np.abs(c)
    if alpha == 1.0:
        free = om == 0
        if np.any(ac[free] > 0):
            raise ValueError("an unpenalized feature has a nonzero gradient "
                             "at zero; lambda_max is unbounded")
        return float(np.max(ac[~free] / om[~free], initial=0.0))

    def excess(lam):
        st = np.maximum(ac - alpha * lam * om, 0.0)
        return np.sqrt(np.sum(st * st)) - (1 - alpha) * lam * gw

    hi = np.sqrt(np.sum(ac * ac)) / ((1 - alpha) * gw)
    pos = om > 0
    if alpha > 0 and np.all(pos):
        with np.errstate(over="ignore"):
            hi = min(hi, float(np.max(ac / (alpha * om))))
    lo = 0.0
    while hi - lo > 1e-10 * hi:
        mid = 0.5 * (lo + hi)
        if excess(mid) > 0:
            lo = mid
        else:
            hi = mid
    return hi


def _lambda_max_from_grad(grad, prob: Problem):
    a = prob.alpha
    best = 0.0
    for g, (c0, c1) in enumerate(prob.groups.ranges):
        c = grad[c0:c1]
        lo, hi = prob.lo[c0:c1], prob.hi[c0:c1]
        c = np.where((lo >= 0) & (c > 0), 0.0, c)
        c = np.where((hi <= 0) & (c < 0), 0.0, c)
        best = max(best, _group_lambda_max(c, a, prob.fw[c0:c1], prob.gw[g]))
    return best


def lambda_max(X, y, groups: GroupStructure, params: PenaltyParams,
               family="gaussian", intercept=True) -> float:
    """Smallest lambda at which all-zero coefficients are optimal.

    The gradient is taken at zero coefficients with the intercept-only fit.
    ``params`` supplies alpha, the weights and the bounds; its lambda is
    ignored.
    """
    family = Family(family)
    yy = to_pm1(y) if family is Family.BINOMIAL else y
    groups = groups.replace_weights(params.group_weights,
                                    params.feature_weights)
    prob = Problem(X, yy, groups, family, params.alpha, params.lower_bounds,
                   params.upper_bounds, intercept)
    state = SolverState.initial(prob, np.zeros(groups.n_groups))
    return _lambda_max_from_grad(full_gradient(state, prob), prob)


def lambda_sequence(lam_max, nlambda=100, lambda_min_ratio=1e-4,
                    lambdas=None) -> np.ndarray:
    """``nlambda`` log-spaced values from ``lam_max`` down to
    ``lam_max * lambda_min_ratio``; a user sequence is validated and passed
    through."""
    if lambdas is not None:
        lam = np.asarray(lambdas, dtype=float)
        if lam.size == 0 or np.any(lam <= 0) or np.any(np.diff(lam) >= 0):
            raise ValueError("lambda sequence must be positive and strictly "
                             "decreasing")
        return lam
    if not lam_max > 0:
        raise ValueError(f"lambda_max must be positive, got {lam_max}")
    if nlambda == 1:
        return np.array([float(lam_max)])
    return lam_max * np.exp(np.linspace(0.0, math.log(lambda_min_ratio),
                                        nlambda))


def _resolve_config(config, kw):
    if config is None:
        return FitConfig(**kw)
    return replace(config, **kw) if kw else config


def fit_path(X, y, groups, config: FitConfig | None = None,
             **kw) -> SolutionPath:
    """Fit the sparse group lasso along a decreasing lambda grid.

    Parameters
    ----------
    X : array, scipy sparse matrix, DenseMatrix or SparseColumnMatrix
    y : array, shape (n,)
        Response; for binomial fits any two distinct values (the larger is
        the positive class).
    groups : GroupStructure or array of per-feature group labels
    config : FitConfig, optional
        Keyword arguments override fields of ``config``.
    """
    cfg = _resolve_config(config, kw)
    X = linalg.as_design(X)
    if not isinstance(groups, GroupStructure):
        groups = GroupStructure.from_labels(groups)
    y = np.asarray(y, dtype=float).ravel()
    if not np.all(np.isfinite(y)):
        raise ValueError("response contains non-finite values")
    levels = None
    if cfg.family is Family.BINOMIAL:
        levels = tuple(np.unique(y).tolist())
        if len(levels) != 2:
            raise ValueError("binomial response needs exactly two classes, "
                             f"found {len(levels)}")
        y_work = to_pm1(y, levels)
    else:
        y_work = y

    lo, hi = cfg.lower_bounds, cfg.upper_bounds
    scale = np.ones(X.n_cols)
    Xw = X
    if cfg.standardize:
        _, sd = linalg.column_moments(X)
        scale = np.where(sd > 0, 1.0 / np.where(sd > 0, sd, 1.0), 1.0)
        Xw = linalg.scale_columns(X, scale)
        if lo is not None:
            lo = np.asarray(lo, dtype=float) / scale
        if hi is not None:
            hi = np.asarray(hi, dtype=float) / scale

    prob = Problem(Xw, y_work, groups, cfg.family, cfg.alpha, lo, hi,
                   cfg.intercept)
    steps = prob.step_sizes(cfg.power_tol, cfg.power_max_iter)
    state = SolverState.initial(prob, steps)
    state.grad = full_gradient(state, prob)
    lam_max = _lambda_max_from_grad(state.grad, prob)

    if cfg.lambdas is not None:
        lambdas = lambda_sequence(None, lambdas=cfg.lambdas)
    else:
        ratio = cfg.lambda_min_ratio
        if ratio is None:
            ratio = 1e-2 if prob.n < X.n_cols else 1e-4
        # flat gradient: zero is optimal everywhere, any grid will do
        top = lam_max if lam_max > 0 else 1.0
        lambdas = lambda_sequence(top, cfg.nlambda, ratio)

    return _run_path(prob, state, lambdas, lam_max, cfg, scale, levels)


# the stopping test cannot usefully go below rounding level
_TOL_FLOOR = 1e-15


def _run_path(prob, state, lambdas, lam_max, cfg, scale, levels):
    G = prob.n_groups
    all_groups = set(range(G))
    if not cfg.screen:
        state.strong = set(all_groups)
        state.active = set(all_groups)
    lam_prev = max(lam_max, float(lambdas[0]))

    cols, b0s, diags = [], [], []
    truncated = False
    for lam in lambdas:
        lam = float(lam)
        if cfg.screen:
            state.strong |= strong_screen(state.grad, prob, lam_prev, lam,
                                          all_groups - state.strong)
        budget = cfg.max_visits
        tol = cfg.tol
        sweeps = visits = loops = nviol = 0
        change = inc = 0.0
        ok = True
        while True:
            loops += 1
            rep = fit_fixed_lambda(state, prob, lam, state.active, tol,
                                   max(budget, 1), cfg.track_objective,
                                   cfg.anderson)
            sweeps += rep.sweeps
            visits += rep.visits
            budget -= rep.visits
            change = rep.max_change
            inc = max(inc, rep.max_objective_increase)
            if not rep.converged:
                ok = False
                break
            if loops > cfg.max_kkt_loops:
                ok = False
                log.warning("lambda %g: KKT loop cap reached", lam)
                break
            viol = kkt_check(state, prob, lam, state.strong - state.active,
                             cfg.kkt_slack)
            if viol:
                nviol += len(viol)
                state.active |= viol
                continue
            viol = kkt_check(state, prob, lam,
                             all_groups - state.strong - state.active,
                             cfg.kkt_slack)
            if viol:
                nviol += len(viol)
                state.active |= viol
                continue
            if tol > _TOL_FLOOR and state.active:
                K.group_grads(*prob.xargs, prob.kcode, prob.y, state.work,
                              _as_index(state.active), prob.gstart,
                              prob.gend, state.grad)
                if kkt_residual(state.beta, state.grad, prob, lam,
                                state.active) > cfg.kkt_tol:
                    tol = max(tol * 1e-2, _TOL_FLOOR)
                    continue
            break
        state.strong |= state.active
        diags.append(LambdaDiagnostics(
            lam, ok, sweeps, visits, loops, len(state.strong),
            len(state.active), nviol, change, inc))
        if not ok:
            truncated = True
            log.warning("stopping path at lambda %g: no convergence", lam)
            break
        cols.append(sparse.csc_matrix((state.beta * scale)[:, None]))
        b0s.append(state.intercept)
        lam_prev = lam

    p = prob.groups.n_features
    beta = sparse.hstack(cols, format="csc") if cols else \
        sparse.csc_matrix((p, 0))
    beta.eliminate_zeros()
    return SolutionPath(
        lambdas=np.asarray(lambdas[:len(cols)], dtype=float),
        beta=beta, intercepts=np.array(b0s), family=cfg.family.value,
        groups=prob.groups, alpha=cfg.alpha, diagnostics=diags,
        truncated=truncated, levels=levels, lambda_max=lam_max,
        column_scale=scale if cfg.standardize else None)
