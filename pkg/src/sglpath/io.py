"""Reading problem files and writing/reading fit directories."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os

import numpy as np
import scipy.io
from scipy import sparse

from . import linalg
from .groups import GroupStructure
from .model import LambdaDiagnostics, SolutionPath, path_summary

__all__ = ["InputError", "read_design", "read_vector", "read_groups",
           "read_bounds", "file_digest", "fmt", "write_csv", "write_json",
           "read_json", "save_fit", "load_fit", "FIT_FORMAT"]

FIT_FORMAT = "sglpath-fit/1"


class InputError(ValueError):
    """Invalid input file; the message names the file and, when known,
    the line."""

    def __init__(self, path, msg, line=None):
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{where}: {msg}")


def fmt(x):
    """Full-precision text for a float (17 significant digits)."""
    return format(float(x), ".17g")


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _open_text(path):
    try:
        return open(path, newline="")
    except OSError as e:
        raise InputError(path, e.strerror or str(e)) from None


def _parse_float(tok):
    t = tok.strip()
    if t.lower() in ("inf", "+inf", "infinity"):
        return math.inf
    if t.lower() in ("-inf", "-infinity"):
        return -math.inf
    return float(t)


def _read_rows(path, ncol=None, header="auto", parse=_parse_float):
    """Rows of a small CSV file with line numbers in every error.

    ``header="auto"`` skips a first line that does not parse.
    """
    rows = []
    with _open_text(path) as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if not rec or all(not t.strip() for t in rec):
                continue
            try:
                vals = [parse(t) for t in rec]
            except ValueError:
                if lineno == 1 and header in ("auto", True):
                    continue
                raise InputError(path, f"cannot parse {','.join(rec)!r}",
                                 lineno) from None
            if lineno == 1 and header is True:
                continue
            if ncol is not None and len(vals) != ncol:
                raise InputError(path, f"expected {ncol} field(s), found "
                                 f"{len(vals)}", lineno)
            rows.append((lineno, vals))
    if not rows:
        raise InputError(path, "no data rows")
    return rows


def read_design(path, fmt_hint="auto"):
    """Dense CSV with a header line, or MatrixMarket (``.mtx``)."""
    kind = fmt_hint
    if kind == "auto":
        kind = "mtx" if str(path).endswith((".mtx", ".mm")) else "csv"
    if kind == "mtx":
        return _read_mtx(path)
    if kind != "csv":
        raise InputError(path, f"unknown design format {fmt_hint!r}")
    with _open_text(path) as fh:
        header = fh.readline()
    if not header.strip():
        raise InputError(path, "missing header line", 1)
    p = len(next(csv.reader([header])))
    try:
        arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2,
                         dtype=float)
    except ValueError:
        # locate the offending line for the message
        _read_rows(path, ncol=p, header=True)
        raise InputError(path, "malformed CSV") from None
    if arr.shape[0] == 0:
        raise InputError(path, "no data rows")
    if arr.shape[1] != p:
        raise InputError(path, f"header names {p} columns, rows have "
                         f"{arr.shape[1]}", 2)
    if not np.all(np.isfinite(arr)):
        r = int(np.flatnonzero(~np.all(np.isfinite(arr), axis=1))[0])
        raise InputError(path, "non-finite value", r + 2)
    return linalg.DenseMatrix(arr)


def _read_mtx(path):
    try:
        m = scipy.io.mmread(path)
    except (ValueError, IndexError, OSError) as e:
        raise InputError(path, f"bad MatrixMarket file ({e})",
                         _first_bad_mtx_line(path)) from None
    if sparse.issparse(m):
        X = linalg.SparseColumnMatrix.from_scipy(m)
        if not np.all(np.isfinite(X.values)):
            raise InputError(path, "non-finite value")
        return X
    arr = np.asarray(m, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InputError(path, "non-finite value")
    return linalg.DenseMatrix(arr)


def _first_bad_mtx_line(path):
    # best-effort line locator for a file the reader rejected
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError:
        return None
    if not lines or not lines[0].startswith("%%MatrixMarket"):
        return 1
    i = 1
    while i < len(lines) and lines[i].startswith("%"):
        i += 1
    if i >= len(lines):
        return len(lines)
    size = lines[i].split()
    coord = "coordinate" in lines[0]
    if len(size) != (3 if coord else 2):
        return i + 1
    want = 3 if coord else 1
    for k in range(i + 1, len(lines)):
        tok = lines[k].split()
        if not tok:
            continue
        try:
            [float(t) for t in tok]
        except ValueError:
            return k + 1
        if len(tok) < want:
            return k + 1
        if coord:
            r, c = int(float(tok[0])), int(float(tok[1]))
            if not (1 <= r <= int(size[0]) and 1 <= c <= int(size[1])):
                return k + 1
    return None


def read_vector(path, length=None, what="values"):
    """Single-column numeric file, optional header."""
    rows = _read_rows(path, ncol=1)
    v = np.array([r[1][0] for r in rows])
    if length is not None and v.size != length:
        raise InputError(path, f"expected {length} {what}, found {v.size}")
    return v, [r[0] for r in rows]


def read_groups(source, p):
    """Group labels from a file (one per feature) or ``size:k``."""
    if str(source).startswith("size:"):
        try:
            k = int(str(source)[5:])
        except ValueError:
            raise InputError(source, "expected size:<integer>") from None
        if k < 1:
            raise InputError(source, "group size must be >= 1")
        return np.arange(p) // k + 1
    rows = _read_rows(source, ncol=1, header="auto",
                      parse=lambda t: t.strip())
    labels = [r[1][0] for r in rows]
    if len(labels) == p + 1:
        # one extra line: a header
        labels = labels[1:]
    if len(labels) != p:
        raise InputError(source, f"expected {p} group ids (one per feature), "
                         f"found {len(labels)}")
    try:
        return np.array([int(t) for t in labels])
    except ValueError:
        return np.array(labels)


def read_bounds(path, p):
    """Two columns ``lower,upper`` per feature; ``inf`` allowed."""
    rows = _read_rows(path, ncol=2)
    if len(rows) != p:
        raise InputError(path, f"expected {p} rows of bounds, found "
                         f"{len(rows)}")
    lo = np.array([r[1][0] for r in rows])
    hi = np.array([r[1][1] for r in rows])
    for (lineno, _), a, b in zip(rows, lo, hi):
        if a > 0 or b < 0:
            raise InputError(path, "bounds must satisfy lower <= 0 <= upper",
                             lineno)
    return lo, hi


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v
                        for v in r])


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if math.isnan(x):
            return "nan"
        return x
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _from_json_float(x):
    return float(x) if isinstance(x, str) else x


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=1, allow_nan=False)
        fh.write("\n")


def read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as e:
        raise InputError(path, e.strerror or str(e)) from None
    except json.JSONDecodeError as e:
        raise InputError(path, e.msg, e.lineno) from None


def save_fit(out_dir, path: SolutionPath, config: dict, manifest: dict):
    """Write path.json, coefs.csv, summary.csv, summary_quantiles.csv,
    coef_trace.csv and group_norms.csv."""
    os.makedirs(out_dir, exist_ok=True)
    M = path.n_lambda
    doc = dict(
        format=FIT_FORMAT,
        family=path.family,
        alpha=path.alpha,
        lambdas=path.lambdas,
        intercepts=path.intercepts,
        lambda_max=path.lambda_max,
        truncated=path.truncated,
        levels=list(path.levels) if path.levels is not None else None,
        column_scale=path.column_scale,
        n_features=path.groups.n_features,
        groups=path.groups.to_dict(),
        config=config,
        diagnostics=[d.to_dict() for d in path.diagnostics],
        manifest=manifest,
    )
    write_json(os.path.join(out_dir, "path.json"), doc)

    B = path.beta.tocsc()
    rows = []
    for m in range(M):
        for k in range(B.indptr[m], B.indptr[m + 1]):
            rows.append((m + 1, int(B.indices[k]) + 1, float(B.data[k])))
    write_csv(os.path.join(out_dir, "coefs.csv"),
              ["lambda_index", "feature", "value"], rows)

    summ = path_summary(path)
    write_csv(os.path.join(out_dir, "summary.csv"),
              ["lambda", "index", "nnzero", "active_grps"],
              [(r["lambda_"], r["index"], r["nnzero"], r["active_grps"])
               for r in summ.rows])
    write_csv(os.path.join(out_dir, "summary_quantiles.csv"),
              ["stat", "lambda", "index", "nnzero", "active_grps"],
              [(r["label"], r["lambda_"], r["index"], r["nnzero"],
                r["active_grps"]) for r in summ.quantiles])

    # plot data: every coefficient / group that is ever nonzero, at all lambdas
    dense = B.toarray()
    gid = path.groups.group_index
    ever = np.flatnonzero(np.any(dense != 0, axis=1)) if M else []
    write_csv(os.path.join(out_dir, "coef_trace.csv"),
              ["lambda_index", "lambda", "feature", "group", "value"],
              [(m + 1, float(path.lambdas[m]), int(j) + 1,
                path.groups.labels[gid[j]], float(dense[j, m]))
               for j in ever for m in range(M)])
    norms = path.group_norms() if M else np.zeros((path.groups.n_groups, 0))
    gever = np.flatnonzero(np.any(norms != 0, axis=1)) if M else []
    write_csv(os.path.join(out_dir, "group_norms.csv"),
              ["lambda_index", "lambda", "group", "norm"],
              [(m + 1, float(path.lambdas[m]), path.groups.labels[g],
                float(norms[g, m])) for g in gever for m in range(M)])
    return print_summary(summ)


def print_summary(summ):
    lines = ["Summary of Lambda sequence:",
             f"{'':8s}{'lambda':>12s}{'index':>7s}{'nnzero':>8s}"
             f"{'active_grps':>13s}"]
    for r in summ.quantiles:
        lines.append(f"{r['label']:8s}{r['lambda_']:12.5g}{r['index']:7d}"
                     f"{r['nnzero']:8d}{r['active_grps']:13d}")
    return "\n".join(lines)


def load_fit(fit_dir):
    """Rebuild the SolutionPath saved by :func:`save_fit`.

    Returns ``(path, doc)`` with ``doc`` the parsed path.json.
    """
    pj = os.path.join(fit_dir, "path.json")
    doc = read_json(pj)
    if doc.get("format") != FIT_FORMAT:
        raise InputError(pj, "not a fit directory written by this tool")
    groups = GroupStructure.from_dict(doc["groups"])
    lam = np.array([_from_json_float(v) for v in doc["lambdas"]], dtype=float)
    p, M = int(doc["n_features"]), lam.size
    cpath = os.path.join(fit_dir, "coefs.csv")
    rows, cols, vals = [], [], []
    with _open_text(cpath) as fh:
        rd = csv.reader(fh)
        next(rd, None)
        for lineno, rec in enumerate(rd, start=2):
            try:
                m, j, v = int(rec[0]), int(rec[1]), float(rec[2])
            except (ValueError, IndexError):
                raise InputError(cpath, "malformed coefficient triplet",
                                 lineno) from None
            if not (1 <= m <= M and 1 <= j <= p):
                raise InputError(cpath, "index out of range", lineno)
            rows.append(j - 1)
            cols.append(m - 1)
            vals.append(v)
    beta = sparse.csc_matrix((vals, (rows, cols)), shape=(p, M))
    scale = doc.get("column_scale")
    diags = [LambdaDiagnostics(**{k: _from_json_float(v)
                                  for k, v in d.items()})
             for d in doc.get("diagnostics", [])]
    path = SolutionPath(
        lambdas=lam, beta=beta,
        intercepts=np.array([_from_json_float(v) for v in doc["intercepts"]],
                            dtype=float),
        family=doc["family"], groups=groups, alpha=float(doc["alpha"]),
        diagnostics=diags, truncated=bool(doc["truncated"]),
        levels=tuple(doc["levels"]) if doc.get("levels") else None,
        lambda_max=_from_json_float(doc.get("lambda_max")),
        column_scale=None if scale is None else np.array(
            [_from_json_float(v) for v in scale]))
    return path, doc
