"""Compiled inner loops.

Every kernel takes the design matrix as the tuple of arrays
``(is_sparse, dense, indptr, indices, data)``. Dense matrices are stored
column-major and walked row by row, in the same order as the compressed
columns, so a dense matrix and its sparse twin give bit-identical sums.
"""

import numpy as np
from numba import njit

GAUSSIAN = 0
BINOMIAL = 1

_NB = dict(cache=True, nogil=True)


@njit(**_NB)
def col_dot(is_sparse, dense, indptr, indices, data, j, v):
    acc = 0.0
    if is_sparse:
        for k in range(indptr[j], indptr[j + 1]):
            acc += data[k] * v[indices[k]]
    else:
        for i in range(dense.shape[0]):
            acc += dense[i, j] * v[i]
    return acc


@njit(**_NB)
def col_axpy(is_sparse, dense, indptr, indices, data, j, a, v):
    if is_sparse:
        for k in range(indptr[j], indptr[j + 1]):
            v[indices[k]] += a * data[k]
    else:
        for i in range(dense.shape[0]):
            v[i] += a * dense[i, j]


@njit(**_NB)
def sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)


@njit(**_NB)
def log1pexp(x):
    if x > 35.0:
        return x
    if x < -35.0:
        return np.exp(x)
    return np.log1p(np.exp(x))


@njit(**_NB)
def col_dot_logistic(is_sparse, dense, indptr, indices, data, j, yt, eta):
    # sum_i x_ij * y_i * sigmoid(-y_i * eta_i)
    acc = 0.0
    if is_sparse:
        for k in range(indptr[j], indptr[j + 1]):
            i = indices[k]
            acc += data[k] * yt[i] * sigmoid(-yt[i] * eta[i])
    else:
        for i in range(dense.shape[0]):
            acc += dense[i, j] * yt[i] * sigmoid(-yt[i] * eta[i])
    return acc


@njit(**_NB)
def matvec(is_sparse, dense, indptr, indices, data, c0, c1, x, out):
    for j in range(c0, c1):
        xj = x[j - c0]
        if xj != 0.0:
            col_axpy(is_sparse, dense, indptr, indices, data, j, xj, out)


@njit(**_NB)
def rmatvec(is_sparse, dense, indptr, indices, data, c0, c1, y, out):
    for j in range(c0, c1):
        out[j - c0] = col_dot(is_sparse, dense, indptr, indices, data, j, y)


@njit(**_NB)
def gram_power_iteration(is_sparse, dense, indptr, indices, data, c0, c1,
                         scale, tol, max_iter, v0):
    """Largest eigenvalue of scale * G'G for the column block [c0, c1).

    Returns (estimate, converged, frobenius_bound).
    """
    m = c1 - c0
    n = dense.shape[0] if not is_sparse else 0
    if is_sparse:
        n = 0
        for k in range(indptr[c0], indptr[c1]):
            if indices[k] + 1 > n:
                n = indices[k] + 1
    frob = 0.0
    for j in range(c0, c1):
        if is_sparse:
            for k in range(indptr[j], indptr[j + 1]):
                frob += data[k] * data[k]
        else:
            for i in range(dense.shape[0]):
                frob += dense[i, j] * dense[i, j]
    frob *= scale
    if m == 0 or frob == 0.0:
        return 0.0, True, 0.0
    u = np.zeros(max(n, 1))
    v = v0.copy()
    nv = np.sqrt(np.sum(v * v))
    v /= nv
    w = np.empty(m)
    mu = 0.0
    for it in range(max_iter):
        u[:] = 0.0
        matvec(is_sparse, dense, indptr, indices, data, c0, c1, v, u)
        rmatvec(is_sparse, dense, indptr, indices, data, c0, c1, u, w)
        w *= scale
        mu_new = 0.0
        for j in range(m):
            mu_new += v[j] * w[j]
        nw = np.sqrt(np.sum(w * w))
        if nw == 0.0:
            return 0.0, False, frob
        v = w / nw
        if it > 0 and abs(mu_new - mu) <= tol * abs(mu_new):
            return mu_new, True, frob
        mu = mu_new
    return mu, False, frob


@njit(**_NB)
def _group_shrink_box(s, tau, lo, hi):
    """argmin_b 0.5*||b - s||^2 + tau*||b||_2 subject to lo <= b <= hi.

    The box contains zero. Solutions have the form clip(gamma * s) with a
    scalar gamma in [0, 1].
    """
    m = s.shape[0]
    out = np.zeros(m)
    # effective direction at the origin: coordinates pinned at a zero bound
    # cannot leave it in the blocked direction
    eff = 0.0
    for j in range(m):
        sj = s[j]
        if sj > 0.0 and hi[j] <= 0.0:
            sj = 0.0
        elif sj < 0.0 and lo[j] >= 0.0:
            sj = 0.0
        eff += sj * sj
    eff = np.sqrt(eff)
    if eff <= tau or eff == 0.0:
        return out
    ns = np.sqrt(np.sum(s * s))
    gamma = 1.0 - tau / ns
    inside = True
    for j in range(m):
        b = gamma * s[j]
        if b < lo[j] or b > hi[j]:
            inside = False
            break
    if inside:
        for j in range(m):
            out[j] = gamma * s[j]
        return out
    # bisection on h(gamma) = ||clip(gamma s)|| (1 - gamma) / gamma - tau,
    # which is non-increasing on (0, 1]
    a = 0.0
    b = 1.0
    for _ in range(200):
        g = 0.5 * (a + b)
        if g <= a or g >= b:
            break
        nrm = 0.0
        for j in range(m):
            c = min(max(g * s[j], lo[j]), hi[j])
            nrm += c * c
        nrm = np.sqrt(nrm)
        if nrm * (1.0 - g) - tau * g > 0.0:
            a = g
        else:
            b = g
    for j in range(m):
        out[j] = min(max(a * s[j], lo[j]), hi[j])
    return out


@njit(**_NB)
def prox_group(z, t, alpha, lam, gw, fw, lo, hi):
    """Proximal step for one group at step size t."""
    m = z.shape[0]
    s = np.empty(m)
    for j in range(m):
        thr = t * alpha * lam * fw[j]
        a = abs(z[j]) - thr
        if a > 0.0:
            s[j] = a if z[j] > 0.0 else -a
        else:
            s[j] = 0.0
    return _group_shrink_box(s, t * (1.0 - alpha) * lam * gw, lo, hi)


@njit(**_NB)
def effective_grad(gj, lo, hi):
    # gradient component that can move a zero coordinate inside the box
    if lo >= 0.0 and gj > 0.0:
        return 0.0
    if hi <= 0.0 and gj < 0.0:
        return 0.0
    return gj


@njit(**_NB)
def group_grads(is_sparse, dense, indptr, indices, data, family, y, work,
                groups, gstart, gend, out):
    """Loss gradient for the listed groups, written into ``out`` (length p).

    ``work`` is the residual y - X beta - b0 (Gaussian) or the linear
    predictor (binomial).
    """
    n = y.shape[0]
    for gi in range(groups.shape[0]):
        g = groups[gi]
        for j in range(gstart[g], gend[g]):
            if family == GAUSSIAN:
                out[j] = -col_dot(is_sparse, dense, indptr, indices, data,
                                  j, work) / n
            else:
                out[j] = -col_dot_logistic(is_sparse, dense, indptr, indices,
                                           data, j, y, work) / n


@njit(**_NB)
def kkt_violations(grad, groups, gstart, gend, alpha, lam, gw, fw, lo, hi,
                   beta, slack):
    """Flag zero groups whose soft-thresholded gradient exceeds the group
    penalty level. The check is made at lam * (1 + slack)."""
    lam_s = lam * (1.0 + slack)
    flags = np.zeros(groups.shape[0], dtype=np.bool_)
    for gi in range(groups.shape[0]):
        g = groups[gi]
        nz = False
        for j in range(gstart[g], gend[g]):
            if beta[j] != 0.0:
                nz = True
                break
        if nz:
            continue
        acc = 0.0
        for j in range(gstart[g], gend[g]):
            e = effective_grad(grad[j], lo[j], hi[j])
            a = abs(e) - alpha * lam_s * fw[j]
            if a > 0.0:
                acc += a * a
        flags[gi] = np.sqrt(acc) > (1.0 - alpha) * lam_s * gw[g]
    return flags


@njit(**_NB)
def penalty_value(beta, gstart, gend, alpha, lam, gw, fw):
    pen = 0.0
    for g in range(gstart.shape[0]):
        s2 = 0.0
        l1 = 0.0
        for j in range(gstart[g], gend[g]):
            s2 += beta[j] * beta[j]
            l1 += fw[j] * abs(beta[j])
        pen += (1.0 - alpha) * lam * gw[g] * np.sqrt(s2) + alpha * lam * l1
    return pen


@njit(**_NB)
def loss_value(family, y, work):
    n = y.shape[0]
    acc = 0.0
    if family == GAUSSIAN:
        for i in range(n):
            acc += work[i] * work[i]
        return acc / (2.0 * n)
    for i in range(n):
        acc += log1pexp(-y[i] * work[i])
    return acc / n


@njit(**_NB)
def _binomial_intercept_step(y, eta, b0):
    n = y.shape[0]
    g = 0.0
    h = 0.0
    for i in range(n):
        g -= y[i] * sigmoid(-y[i] * eta[i])
        p = sigmoid(eta[i])
        h += p * (1.0 - p)
    g /= n
    h /= n
    if h < 1e-12:
        h = 1e-12
    step = -g / h
    base = loss_value(BINOMIAL, y, eta)
    trial = np.empty(n)
    for _ in range(60):
        gt = 0.0
        for i in range(n):
            trial[i] = eta[i] + step
            gt -= y[i] * sigmoid(-y[i] * trial[i])
        # the loss is convex in the intercept: a step that does not
        # overshoot the stationary point cannot increase it, even when the
        # decrease is below rounding of the loss value
        if gt * g >= 0.0 or loss_value(BINOMIAL, y, trial) <= base:
            eta[:] = trial
            return b0 + step, abs(step)
        step *= 0.5
    return b0, 0.0


@njit(**_NB)
def _solve_small(C, b):
    # Gaussian elimination with partial pivoting; returns ok flag
    k = b.shape[0]
    A = C.copy()
    x = b.copy()
    for c in range(k):
        piv = c
        for r in range(c + 1, k):
            if abs(A[r, c]) > abs(A[piv, c]):
                piv = r
        if A[piv, c] == 0.0:
            return x, False
        if piv != c:
            for q in range(k):
                tmp = A[c, q]
                A[c, q] = A[piv, q]
                A[piv, q] = tmp
            tmp = x[c]
            x[c] = x[piv]
            x[piv] = tmp
        for r in range(c + 1, k):
            f = A[r, c] / A[c, c]
            for q in range(c, k):
                A[r, q] -= f * A[c, q]
            x[r] -= f * x[c]
    for c in range(k - 1, -1, -1):
        acc = x[c]
        for q in range(c + 1, k):
            acc -= A[c, q] * x[q]
        x[c] = acc / A[c, c]
    return x, True


@njit(**_NB)
def _anderson_step(is_sparse, dense, indptr, indices, data, family, y, work,
                   beta, b0, coords, hist, gstart, gend, alpha, lam, gw, fw,
                   lo, hi, intercept, obj):
    """Try the Anderson extrapolation of the iterates stored in ``hist``.

    ``hist`` rows are successive sweep results over ``coords`` (plus the
    intercept in the last column). The extrapolated point is clipped to
    the bounds and accepted only if it lowers the objective. Returns the
    objective at the (possibly unchanged) iterate.
    """
    K = hist.shape[0] - 1
    m = coords.shape[0]
    w = hist.shape[1]
    U = np.empty((K, w))
    for i in range(K):
        for q in range(w):
            U[i, q] = hist[i + 1, q] - hist[i, q]
    C = U @ U.T
    scale = 0.0
    for i in range(K):
        scale = max(scale, C[i, i])
    if scale == 0.0:
        return obj
    for i in range(K):
        C[i, i] += 1e-10 * scale
    c, ok = _solve_small(C, np.ones(K))
    if not ok:
        return obj
    tot = 0.0
    for i in range(K):
        tot += c[i]
    if tot == 0.0 or not np.isfinite(tot):
        return obj
    for i in range(K):
        c[i] /= tot
    ext = np.zeros(w)
    for i in range(K):
        for q in range(w):
            ext[q] += c[i] * hist[i + 1, q]
    old = np.empty(m)
    new_work = work.copy()
    for k in range(m):
        j = coords[k]
        v = min(max(ext[k], lo[j]), hi[j])
        old[k] = beta[j]
        d = v - beta[j]
        if d != 0.0:
            if family == GAUSSIAN:
                col_axpy(is_sparse, dense, indptr, indices, data, j, -d,
                         new_work)
            else:
                col_axpy(is_sparse, dense, indptr, indices, data, j, d,
                         new_work)
        beta[j] = v
    nb0 = ext[m] if intercept else b0[0]
    d0 = nb0 - b0[0]
    for i in range(new_work.shape[0]):
        new_work[i] += -d0 if family == GAUSSIAN else d0
    new_obj = (loss_value(family, y, new_work)
               + penalty_value(beta, gstart, gend, alpha, lam, gw, fw))
    if new_obj < obj:
        b0[0] = nb0
        work[:] = new_work
        return new_obj
    for k in range(m):
        beta[coords[k]] = old[k]
    return obj


@njit(**_NB)
def cd_sweeps(is_sparse, dense, indptr, indices, data, family, y, work,
              beta, b0, visit, gstart, gend, step, alpha, lam, gw, fw, lo, hi,
              intercept, tol, max_visits, track, anderson):
    """Blockwise majorization-minimization sweeps over the groups in
    ``visit`` at a fixed lambda.

    ``work`` and ``b0`` (a length-1 array) are updated in place along with
    ``beta``. With ``track`` set, the objective is evaluated after every
    sweep and the largest sweep-to-sweep increase is reported. With
    ``anderson = K > 0``, every K sweeps an Anderson extrapolation of the
    last K + 1 iterates is tried and kept only if it lowers the objective.

    Returns (sweeps, visits, converged, last_change, max_increase).
    """
    n = y.shape[0]
    sweeps = 0
    visits = 0
    change = 0.0
    max_inc = 0.0
    obj = 0.0
    if track:
        obj = (loss_value(family, y, work)
               + penalty_value(beta, gstart, gend, alpha, lam, gw, fw))
    if visit.shape[0] == 0 and not intercept:
        return 0, 0, True, 0.0, 0.0
    ncoord = 0
    for gi in range(visit.shape[0]):
        ncoord += gend[visit[gi]] - gstart[visit[gi]]
    coords = np.empty(ncoord, dtype=np.int64)
    q = 0
    for gi in range(visit.shape[0]):
        for j in range(gstart[visit[gi]], gend[visit[gi]]):
            coords[q] = j
            q += 1
    use_aa = anderson > 0 and ncoord > 0
    hist = np.empty((anderson + 1 if use_aa else 1, ncoord + 1))
    nhist = 0
    if use_aa:
        for k in range(ncoord):
            hist[0, k] = beta[coords[k]]
        hist[0, ncoord] = b0[0]
        nhist = 1
        if not track:
            obj = (loss_value(family, y, work)
                   + penalty_value(beta, gstart, gend, alpha, lam, gw, fw))
    while True:
        change = 0.0
        for gi in range(visit.shape[0]):
            g = visit[gi]
            c0 = gstart[g]
            c1 = gend[g]
            m = c1 - c0
            t = step[g]
            visits += 1
            if t <= 0.0:
                # all-zero columns: the loss ignores this block
                for j in range(c0, c1):
                    if beta[j] != 0.0:
                        change = max(change, abs(beta[j]))
                        beta[j] = 0.0
                continue
            z = np.empty(m)
            for k in range(m):
                j = c0 + k
                if family == GAUSSIAN:
                    gr = -col_dot(is_sparse, dense, indptr, indices, data,
                                  j, work) / n
                else:
                    gr = -col_dot_logistic(is_sparse, dense, indptr, indices,
                                           data, j, y, work) / n
                z[k] = beta[j] - t * gr
            new = prox_group(z, t, alpha, lam, gw[g], fw[c0:c1], lo[c0:c1],
                             hi[c0:c1])
            for k in range(m):
                j = c0 + k
                d = new[k] - beta[j]
                if d != 0.0:
                    beta[j] = new[k]
                    if family == GAUSSIAN:
                        col_axpy(is_sparse, dense, indptr, indices, data,
                                 j, -d, work)
                    else:
                        col_axpy(is_sparse, dense, indptr, indices, data,
                                 j, d, work)
                    if abs(d) > change:
                        change = abs(d)
        if intercept:
            if family == GAUSSIAN:
                mres = 0.0
                for i in range(n):
                    mres += work[i]
                mres /= n
                b0[0] += mres
                for i in range(n):
                    work[i] -= mres
                d0 = abs(mres)
            else:
                nb, d0 = _binomial_intercept_step(y, work, b0[0])
                b0[0] = nb
            if d0 > change:
                change = d0
        sweeps += 1
        if track or use_aa:
            new_obj = (loss_value(family, y, work)
                       + penalty_value(beta, gstart, gend, alpha, lam, gw, fw))
            if track and new_obj - obj > max_inc:
                max_inc = new_obj - obj
            obj = new_obj
        bmax = 1.0
        for gi in range(visit.shape[0]):
            g = visit[gi]
            for j in range(gstart[g], gend[g]):
                if abs(beta[j]) > bmax:
                    bmax = abs(beta[j])
        if change <= tol * bmax:
            return sweeps, visits, True, change, max_inc
        if visits >= max_visits or (visit.shape[0] == 0 and sweeps >= 10000):
            return sweeps, visits, False, change, max_inc
        if use_aa:
            for k in range(ncoord):
                hist[nhist, k] = beta[coords[k]]
            hist[nhist, ncoord] = b0[0]
            nhist += 1
            if nhist == anderson + 1:
                obj = _anderson_step(is_sparse, dense, indptr, indices, data,
                                     family, y, work, beta, b0, coords, hist,
                                     gstart, gend, alpha, lam, gw, fw, lo, hi,
                                     intercept, obj)
                for k in range(ncoord):
                    hist[0, k] = beta[coords[k]]
                hist[0, ncoord] = b0[0]
                nhist = 1
