"""``sgl-path``: batch fitting, cross validation, risk estimation and
prediction from files.

Exit codes: 0 success, 2 invalid input, 3 non-convergence under
``--strict``.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
import warnings

import numpy as np

from . import __version__
from .cv import LOSSES, cross_validate
from .groups import GroupStructure
from .io import (InputError, file_digest, load_fit, read_bounds, read_design,
                 read_groups, read_json, read_vector, save_fit, write_csv,
                 write_json)
from .model import coef_at, predict
from .risk import estimate_risk
from .solver import FitConfig, fit_path

EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGED = 0, 2, 3


def _add_problem_args(p):
    p.add_argument("--x", required=True, metavar="FILE",
                   help="design: dense CSV with header, or MatrixMarket .mtx")
    p.add_argument("--x-format", choices=("auto", "csv", "mtx"),
                   default="auto")
    p.add_argument("--y", required=True, metavar="FILE",
                   help="response, one value per line")
    p.add_argument("--groups", required=True, metavar="FILE|size:k",
                   help="one group id per feature, or size:k for "
                   "consecutive groups of k features")
    p.add_argument("--group-weights", metavar="FILE")
    p.add_argument("--feature-weights", metavar="FILE")
    p.add_argument("--bounds-file", metavar="FILE",
                   help="CSV with lower,upper per feature")
    p.add_argument("--alpha", type=float, default=0.95)
    p.add_argument("--nlambda", type=int, default=100)
    p.add_argument("--lambda-min-ratio", type=float, default=None)
    p.add_argument("--lambda-file", metavar="FILE",
                   help="decreasing lambda values, one per line")
    p.add_argument("--family", choices=("gaussian", "binomial"),
                   default="gaussian")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-visits", type=int, default=3_000_000)
    p.add_argument("--no-intercept", action="store_true")
    p.add_argument("--standardize", action="store_true")
    p.add_argument("--no-screen", action="store_true",
                   help="disable the strong rule (for checking)")
    p.add_argument("--strict", action="store_true",
                   help="exit 3 if any lambda fails to converge")
    p.add_argument("--record-time", action="store_true",
                   help="add wall-clock timestamps to the manifest "
                   "(outputs are then no longer byte-reproducible)")
    p.add_argument("--out", required=True, metavar="DIR")


def build_parser():
    # argparse exits with 2 on usage errors, matching the input-error code
    ap = argparse.ArgumentParser(prog="sgl-path",
                                 description="Sparse group lasso "
                                 "regularization paths.")
    ap.add_argument("--version", action="version",
                    version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit a regularization path")
    _add_problem_args(f)

    c = sub.add_parser("cv", help="K-fold cross validation")
    _add_problem_args(c)
    c.add_argument("--nfolds", type=int, default=10)
    c.add_argument("--loss", choices=("mse", "mae", "deviance", "misclass"))
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--jobs", type=int, default=None,
                   help="parallel fold fits (default: SGL_PATH_JOBS or the "
                   "available CPUs)")

    r = sub.add_parser("risk", help="df, AIC, BIC and GCV for a gaussian fit")
    r.add_argument("--fit", required=True, metavar="DIR")
    r.add_argument("--x", required=True, metavar="FILE")
    r.add_argument("--x-format", choices=("auto", "csv", "mtx"),
                   default="auto")
    r.add_argument("--y", metavar="FILE",
                   help="response (default: the file recorded in the fit)")
    r.add_argument("--approx-df", action="store_true",
                   help="use the nonzero count as df")
    r.add_argument("--out", metavar="DIR", help="default: the fit directory")

    pr = sub.add_parser("predict", help="predictions for a new design")
    pr.add_argument("--fit", required=True, metavar="DIR")
    pr.add_argument("--x", required=True, metavar="FILE")
    pr.add_argument("--x-format", choices=("auto", "csv", "mtx"),
                    default="auto")
    pr.add_argument("--s", nargs="+", default=None,
                    help="lambda values, or lambda.min / lambda.1se")
    pr.add_argument("--cv", metavar="DIR",
                    help="cv directory for lambda.min / lambda.1se "
                    "(default: the fit directory)")
    pr.add_argument("--type", dest="kind", default="link",
                    choices=("link", "response", "class"))
    pr.add_argument("--out", metavar="DIR", help="default: the fit directory")
    return ap


def _input_record(path):
    return dict(path=os.path.abspath(path), sha256=file_digest(path),
                bytes=os.path.getsize(path))


def _load_problem(a):
    X = read_design(a.x, a.x_format)
    n, p = X.n_rows, X.n_cols
    y, _ = read_vector(a.y, n, "responses")
    labels = read_groups(a.groups, p)
    try:
        groups = GroupStructure.from_labels(labels)
    except ValueError as e:
        raise InputError(a.groups, str(e)) from None
    inputs = dict(x=_input_record(a.x), y=_input_record(a.y))
    if not str(a.groups).startswith("size:"):
        inputs["groups"] = _input_record(a.groups)
    gw = fw = None
    if a.group_weights:
        gw, _ = read_vector(a.group_weights, groups.n_groups, "group weights")
        inputs["group_weights"] = _input_record(a.group_weights)
    if a.feature_weights:
        fw, _ = read_vector(a.feature_weights, p, "feature weights")
        inputs["feature_weights"] = _input_record(a.feature_weights)
    if gw is not None or fw is not None:
        try:
            groups = groups.replace_weights(gw, fw)
        except ValueError as e:
            raise InputError(a.group_weights or a.feature_weights,
                             str(e)) from None
    lo = hi = None
    if a.bounds_file:
        lo, hi = read_bounds(a.bounds_file, p)
        inputs["bounds"] = _input_record(a.bounds_file)
    lambdas = None
    if a.lambda_file:
        lam, _ = read_vector(a.lambda_file, what="lambda values")
        if np.any(lam <= 0) or np.any(np.diff(lam) >= 0):
            raise InputError(a.lambda_file, "lambda values must be positive "
                             "and strictly decreasing")
        lambdas = tuple(lam.tolist())
        inputs["lambdas"] = _input_record(a.lambda_file)
    if a.family == "binomial" and np.unique(y).size != 2:
        raise InputError(a.y, "binomial response needs exactly two classes")
    try:
        cfg = FitConfig(alpha=a.alpha, nlambda=a.nlambda,
                        lambda_min_ratio=a.lambda_min_ratio, lambdas=lambdas,
                        tol=a.tol, max_visits=a.max_visits,
                        intercept=not a.no_intercept,
                        standardize=a.standardize, lower_bounds=lo,
                        upper_bounds=hi, family=a.family,
                        screen=not a.no_screen)
    except ValueError as e:
        raise InputError("<options>", str(e)) from None
    return X, y, groups, cfg, inputs


def _manifest(command, a, inputs, cfg, started=None):
    m = dict(tool="sgl-path", version=__version__, command=command,
             config=cfg.to_dict(), inputs=inputs)
    if started is not None:
        m["started"] = time.strftime("%Y-%m-%dT%H:%M:%S%z",
                                     time.localtime(started))
        m["finished"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    return m


def _finish_fit(a, path, manifest):
    summary = save_fit(a.out, path, manifest["config"], manifest)
    print(summary)
    if path.truncated or not all(d.converged for d in path.diagnostics):
        msg = (f"path stopped after {path.n_lambda} lambda value(s): "
               "no convergence")
        print(f"warning: {msg}", file=sys.stderr)
        if a.strict:
            return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_fit(a):
    started = time.time() if a.record_time else None
    X, y, groups, cfg, inputs = _load_problem(a)
    path = fit_path(X, y, groups, cfg)
    return _finish_fit(a, path, _manifest("fit", a, inputs, cfg, started))


def cmd_cv(a):
    started = time.time() if a.record_time else None
    X, y, groups, cfg, inputs = _load_problem(a)
    loss = a.loss or LOSSES[cfg.family.value][0]
    if loss not in LOSSES[cfg.family.value]:
        raise InputError("--loss", f"{loss} does not apply to the "
                         f"{cfg.family.value} family")
    if not 2 <= a.nfolds <= y.size:
        raise InputError("--nfolds", f"must lie in [2, {y.size}]")
    res = cross_validate(X, y, groups, cfg, k=a.nfolds, loss=loss,
                         seed=a.seed, jobs=a.jobs)
    manifest = _manifest("cv", a, inputs, cfg, started)
    manifest["cv"] = dict(nfolds=a.nfolds, loss=loss, seed=a.seed)
    code = _finish_fit(a, res.path, manifest)
    write_csv(os.path.join(a.out, "cv.csv"),
              ["lambda_index", "lambda", "mean", "se", "sd", "lower",
               "upper", "nfolds_used"],
              [(m + 1, float(res.lambdas[m]), float(res.mean[m]),
                float(res.se[m]), float(res.sd[m]),
                float(res.mean[m] - res.se[m]),
                float(res.mean[m] + res.se[m]), int(res.counts[m]))
               for m in range(res.lambdas.size)])
    write_json(os.path.join(a.out, "selection.json"), dict(
        lambda_min=res.lambda_min, lambda_1se=res.lambda_1se,
        index_min=res.index_min + 1, index_1se=res.index_1se + 1,
        loss=loss, nfolds=a.nfolds, seed=a.seed,
        folds=(res.folds + 1).tolist(),
        dropped=[dict(fold=f + 1, lambda_index=m + 1)
                 for f, m in res.dropped]))
    print(f"lambda.min = {res.lambda_min:.6g}, "
          f"lambda.1se = {res.lambda_1se:.6g}")
    if res.dropped and a.strict:
        return EXIT_NONCONVERGED
    return code


def _check_design(X, path, xfile):
    if X.n_cols != path.groups.n_features:
        raise InputError(xfile, f"design has {X.n_cols} columns, the fit "
                         f"has {path.groups.n_features} features")


def cmd_risk(a):
    path, doc = load_fit(a.fit)
    if path.family != "gaussian":
        raise InputError(a.fit, "risk estimates: gaussian only")
    X = read_design(a.x, a.x_format)
    _check_design(X, path, a.x)
    yfile = a.y or doc["manifest"]["inputs"]["y"]["path"]
    y, _ = read_vector(yfile, X.n_rows, "responses")
    cfg = doc["config"]

    def bounds(key):
        v = cfg.get(key)
        return None if v is None else np.array([float(t) for t in v])

    est = estimate_risk(path, X, y, use_approx=a.approx_df,
                        lower=bounds("lower_bounds"),
                        upper=bounds("upper_bounds"),
                        intercept=bool(cfg.get("intercept", True)))
    out = a.out or a.fit
    os.makedirs(out, exist_ok=True)
    write_csv(os.path.join(out, "risk.csv"),
              ["lambda_index", "lambda", "df", "mse", "aic", "bic", "gcv",
               "exact_df"],
              [(m + 1, float(est.lambdas[m]), float(est.df[m]),
                float(est.mse[m]), float(est.aic[m]), float(est.bic[m]),
                float(est.gcv[m]), int(est.exact[m]))
               for m in range(est.lambdas.size)])
    mins = {}
    for name, lam in est.minima().items():
        idx = None if lam is None else \
            int(np.flatnonzero(est.lambdas == lam)[0]) + 1
        mins[name] = {"lambda": lam, "index": idx}
    write_json(os.path.join(out, "minima.json"), mins)
    return EXIT_OK


def _resolve_s(a, path):
    if a.s is None:
        return None, [f"{v:.17g}" for v in path.lambdas]
    named = {"lambda.min", "lambda.1se"}
    vals, names = [], []
    sel = None
    for tok in a.s:
        if tok in named:
            if sel is None:
                sel = read_json(os.path.join(a.cv or a.fit, "selection.json"))
            v = float(sel["lambda_min" if tok == "lambda.min"
                          else "lambda_1se"])
            names.append(tok)
        else:
            try:
                v = float(tok)
            except ValueError:
                raise InputError("--s", f"not a number: {tok!r}") from None
            if not v > 0:
                raise InputError("--s", "lambda values must be positive")
            names.append(f"{v:.17g}")
        vals.append(v)
    return np.array(vals), names


def cmd_predict(a):
    path, _ = load_fit(a.fit)
    X = read_design(a.x, a.x_format)
    _check_design(X, path, a.x)
    if a.kind == "class" and path.family != "binomial":
        raise InputError("--type", "class predictions need a binomial fit")
    if path.n_lambda == 0:
        raise InputError(a.fit, "the fit holds no solutions")
    s, names = _resolve_s(a, path)
    if s is not None:
        _, _, clamped = coef_at(path, s)
        for name, c in zip(names, clamped):
            if c:
                print(f"warning: s={name} outside the fitted range; "
                      "clamped", file=sys.stderr)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        pred = predict(path, X, s, a.kind)
    out = a.out or a.fit
    os.makedirs(out, exist_ok=True)
    write_csv(os.path.join(out, "predictions.csv"),
              [f"s={nm}" for nm in names],
              [tuple(float(v) for v in row) for row in pred])
    return EXIT_OK


COMMANDS = dict(fit=cmd_fit, cv=cmd_cv, risk=cmd_risk, predict=cmd_predict)


def main(argv=None):
    a = build_parser().parse_args(argv)
    try:
        return COMMANDS[a.command](a)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as e:
        # validation errors raised by the library
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
