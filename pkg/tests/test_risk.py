import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sglpath import GroupStructure, fit_path, predict
from sglpath.risk import (approx_df, estimate_risk, exact_df,
                          information_criteria)


def signal_instance(seed=0, n=100, p=50, size=5, noise=1.0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    beta = np.repeat([1.0, 0.0] * (p // (2 * size)), size)
    y = X @ beta + noise * rng.standard_normal(n)
    return X, y, GroupStructure.equal(p, size)


def divergence(X, y, groups, lam, alpha, h=1e-5):
    """Sum of d yhat_i / d y_i by central differences of refits."""
    total = 0.0
    for i in range(y.size):
        out = []
        for sgn in (1, -1):
            yy = y.copy()
            yy[i] += sgn * h
            path = fit_path(X, yy, groups, lambdas=(lam,), alpha=alpha,
                            tol=1e-15, max_visits=10**7)
            out.append(predict(path, X[i:i + 1])[0, 0])
        total += (out[0] - out[1]) / (2 * h)
    return total


class TestExactDf:
    def test_lasso_equals_count(self):
        X, y, groups = signal_instance(1)
        path = fit_path(X, y, groups, alpha=1.0, nlambda=30)
        for m, lam in enumerate(path.lambdas):
            df, exact = exact_df(X, path.column(m), lam, 1.0, groups)
            assert exact
            assert df == pytest.approx(path.nnzero[m], abs=1e-8)

    def test_empty(self):
        X, _, groups = signal_instance(2)
        assert exact_df(X, np.zeros(50), 0.1, 0.5, groups) == (0.0, True)

    def test_single_group_orthonormal(self):
        n = 12
        rng = np.random.default_rng(3)
        Q, _ = np.linalg.qr(rng.standard_normal((n, 2)))
        X = Q * np.sqrt(n)
        b = np.array([0.6, -0.8])
        lam, alpha = 0.3, 0.25
        groups = GroupStructure.equal(2, 2)
        df, exact = exact_df(X, b, lam, alpha, groups, intercept=False)
        # hand-built 2x2 system: X'X = n I, K from the one active group
        nb = np.linalg.norm(b)
        Kg = (1 - alpha) * lam * np.sqrt(2) * \
            (np.eye(2) - np.outer(b, b) / nb ** 2) / nb
        M = n * np.eye(2) + n * Kg
        ref = np.trace(np.linalg.solve(M, n * np.eye(2)))
        c = (1 - alpha) * lam * np.sqrt(2) / nb
        assert ref == pytest.approx(1 + 1 / (1 + c), rel=1e-14)
        assert exact and df == pytest.approx(ref, abs=1e-10)

    @pytest.mark.parametrize("alpha", [0.0, 0.5])
    def test_matches_divergence(self, alpha):
        X, y, groups = signal_instance(4, n=30, p=8, size=4, noise=0.5)
        path = fit_path(X, y, groups, alpha=alpha, nlambda=10)
        lam = path.lambdas[5]
        fit = fit_path(X, y, groups, lambdas=(lam,), alpha=alpha, tol=1e-15,
                       max_visits=10**7)
        df, exact = exact_df(X, fit.column(0), lam, alpha, groups)
        assert exact
        # the unpenalized intercept adds one to the divergence
        assert df + 1 == pytest.approx(divergence(X, y, groups, lam, alpha),
                                       abs=1e-4)

    def test_rank_deficient_falls_back(self):
        X, _, groups = signal_instance(5, n=6, p=10)
        beta = np.zeros(10)
        beta[:5] = 1.0
        X[:, 1] = X[:, 0]
        with pytest.warns(UserWarning, match="rank"):
            df, exact = exact_df(X, beta, 0.1, 0.5, groups)
        assert not exact and df == 5

    def test_cap_falls_back(self):
        X, _, groups = signal_instance(6)
        beta = np.ones(50)
        with pytest.warns(UserWarning, match="cap"):
            df, exact = exact_df(X, beta, 0.1, 0.5, groups, max_active=10)
        assert not exact and df == 50

    def test_bound_coordinates_excluded(self):
        X, y, groups = signal_instance(7)
        path = fit_path(X, y, groups, alpha=1.0, nlambda=20,
                        upper_bounds=np.full(50, 0.5))
        col = path.column(19)
        at = np.count_nonzero(col == 0.5)
        assert at > 0
        df, _ = exact_df(X, col, path.lambdas[19], 1.0, groups,
                         upper=np.full(50, 0.5))
        assert df == pytest.approx(path.nnzero[19] - at, abs=1e-8)

    def test_approaches_p(self):
        X, y, groups = signal_instance(8, n=60, p=10)
        path = fit_path(X, y, groups, alpha=0.5, nlambda=40,
                        lambda_min_ratio=1e-6, tol=1e-12)
        dfs = [exact_df(X, path.column(m), path.lambdas[m], 0.5, groups)[0]
               for m in (20, 30, 39)]
        assert dfs[0] < dfs[1] < dfs[2] <= 10
        assert dfs[2] == pytest.approx(10, abs=1e-3)


class TestApproxDf:
    def test_zero(self):
        assert approx_df(np.zeros(4)) == 0

    def test_count(self):
        v = np.zeros(20)
        v[[1, 3, 5, 7, 11, 13, 17]] = 1.5
        assert approx_df(v) == 7


class TestInformationCriteria:
    def test_worked_example(self):
        aic, bic, gcv = information_criteria(1.0, 3.0, 10)
        assert aic == pytest.approx(0.6, abs=1e-12)
        assert bic == pytest.approx(3 * np.log(10) / 10, abs=1e-12)
        assert gcv == pytest.approx(1 / 0.49, abs=1e-12)

    def test_zero_df(self):
        aic, bic, gcv = information_criteria(2.5, 0.0, 7)
        assert gcv == 2.5 and aic == np.log(2.5) and bic == np.log(2.5)

    def test_df_at_n(self):
        _, _, gcv = information_criteria([1.0, 1.0], [10.0, 12.0], 10)
        assert np.all(np.isinf(gcv))


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-6, 1e6), st.integers(1, 10**6), st.floats(0, 1))
def test_log_gcv_identity(mse, n, frac):
    df = frac * n * 0.999
    _, _, gcv = information_criteria(mse, df, n)
    info = np.log(mse) + (-2.0) * np.log(1 - df / n)
    assert np.log(gcv) == pytest.approx(info, rel=1e-12, abs=1e-12)


class TestEstimateRisk:
    def test_arithmetic(self):
        X, y, groups = signal_instance(9)
        path = fit_path(X, y, groups, alpha=0.5, nlambda=20)
        risk = estimate_risk(path, X, y)
        n = y.size
        for m in range(path.n_lambda):
            r = y - X @ path.column(m) - path.intercepts[m]
            mse = r @ r / n
            assert risk.mse[m] == pytest.approx(mse, rel=1e-12)
            df = risk.df[m]
            assert 0 <= df <= min(n, 50)
            assert risk.aic[m] == pytest.approx(np.log(mse) + 2 * df / n,
                                                rel=1e-12)
            assert risk.bic[m] == pytest.approx(
                np.log(mse) + np.log(n) * df / n, rel=1e-12)
            assert risk.gcv[m] == pytest.approx(mse / (1 - df / n) ** 2,
                                                rel=1e-12)
        assert np.all(risk.exact)

    def test_approx_option(self):
        X, y, groups = signal_instance(10)
        path = fit_path(X, y, groups, alpha=0.5, nlambda=10)
        risk = estimate_risk(path, X, y, use_approx=True)
        np.testing.assert_array_equal(risk.df, path.nnzero)
        assert not np.any(risk.exact)

    def test_lasso_exact_equals_approx(self):
        X, y, groups = signal_instance(11)
        path = fit_path(X, y, groups, alpha=1.0, nlambda=15)
        a = estimate_risk(path, X, y)
        b = estimate_risk(path, X, y, use_approx=True)
        np.testing.assert_allclose(a.df, b.df, atol=1e-8)

    def test_minima_interior(self):
        X, y, groups = signal_instance(12, n=200, p=100, size=10, noise=2.0)
        path = fit_path(X, y, groups, alpha=0.2, nlambda=30,
                        lambda_min_ratio=1e-3)
        risk = estimate_risk(path, X, y)
        for name, lam in risk.minima().items():
            k = int(np.flatnonzero(path.lambdas == lam)[0])
            assert 0 < k < path.n_lambda - 1, name

    def test_standardized_fit(self):
        X, y, groups = signal_instance(13)
        X = X * np.linspace(0.5, 3, 50)
        a = fit_path(X, y, groups, alpha=0.5, nlambda=10, standardize=True,
                     tol=1e-12)
        sd = X.std(axis=0)
        b = fit_path(X / sd, y, groups, alpha=0.5, nlambda=10, tol=1e-12)
        np.testing.assert_allclose(estimate_risk(a, X, y).df,
                                   estimate_risk(b, X / sd, y).df,
                                   atol=1e-6)

    def test_binomial_rejected(self):
        X, y, groups = signal_instance(14)
        path = fit_path(X, (y > 0).astype(float), groups, nlambda=5,
                        family="binomial")
        with pytest.raises(ValueError, match="gaussian"):
            estimate_risk(path, X, y)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 0.9))
def test_df_permutation_invariant(seed, alpha):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((25, 9))
    beta = rng.standard_normal(9) * (rng.uniform(size=9) > 0.3)
    groups = GroupStructure.equal(9, 3)
    perm = np.concatenate([rng.permutation(3) + 3 * g for g in range(3)])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        a = exact_df(X, beta, 0.2, alpha, groups)
        b = exact_df(X[:, perm], beta[perm], 0.2, alpha, groups)
    assert a[1] == b[1]
    assert a[0] == pytest.approx(b[0], rel=1e-10, abs=1e-10)
