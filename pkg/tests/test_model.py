import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import sparse

from sglpath import GroupStructure, coef_at, fit_path, path_summary, predict
from sglpath.model import SolutionPath


def small_path(family="gaussian", seed=0, nlambda=12):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((40, 10))
    y = X[:, :5] @ np.ones(5) + rng.standard_normal(40)
    if family == "binomial":
        y = (y > 0).astype(float)
    groups = GroupStructure.equal(10, 5)
    return X, y, fit_path(X, y, groups, nlambda=nlambda, family=family)


def handmade_path(cols, lambdas, intercepts, groups, family="gaussian"):
    return SolutionPath(np.asarray(lambdas, float),
                        sparse.csc_matrix(np.asarray(cols, float)),
                        np.asarray(intercepts, float), family, groups, 0.5)


class TestContainer:
    def test_validation(self):
        g = GroupStructure.equal(2, 1)
        with pytest.raises(ValueError):
            handmade_path(np.zeros((2, 2)), [1.0, 2.0], [0, 0], g)
        with pytest.raises(ValueError):
            handmade_path(np.zeros((3, 2)), [2.0, 1.0], [0, 0], g)

    def test_counts(self):
        g = GroupStructure.from_labels([1, 1, 2, 2, 2])
        cols = np.array([[0, 1, 1], [0, 0, 2], [0, 0, 0], [0, 0, 3],
                         [0, 0, 0]], float)
        path = handmade_path(cols, [3, 2, 1], [0, 0, 0], g)
        np.testing.assert_array_equal(path.nnzero, [0, 1, 3])
        np.testing.assert_array_equal(path.active_groups, [0, 1, 2])
        np.testing.assert_allclose(path.group_norms()[:, 2],
                                   [np.sqrt(5), 3])


class TestCoefAt:
    def test_grid_hit(self):
        _, _, path = small_path()
        res = coef_at(path, path.lambdas[[3, 7]])
        np.testing.assert_array_equal(res.beta.toarray(),
                                      path.beta.toarray()[:, [3, 7]])
        np.testing.assert_array_equal(res.intercept, path.intercepts[[3, 7]])

    def test_midpoint(self):
        _, _, path = small_path()
        s = 0.5 * (path.lambdas[4] + path.lambdas[5])
        res = coef_at(path, s)
        dense = path.beta.toarray()
        np.testing.assert_allclose(res.beta.toarray()[:, 0],
                                   0.5 * (dense[:, 4] + dense[:, 5]),
                                   rtol=1e-14, atol=1e-15)
        assert res.intercept[0] == pytest.approx(
            0.5 * (path.intercepts[4] + path.intercepts[5]), rel=1e-14)

    def test_clamped_below(self):
        _, _, path = small_path()
        with pytest.warns(UserWarning, match="clamped"):
            res = coef_at(path, path.lambdas[-1] / 10)
        assert res.clamped[0]
        np.testing.assert_array_equal(res.beta.toarray()[:, 0],
                                      path.column(path.n_lambda - 1))

    def test_empty(self):
        _, _, path = small_path()
        with pytest.raises(ValueError):
            coef_at(path, [])


class TestPredict:
    def test_zero_column(self):
        X, _, path = small_path()
        out = predict(path, X, s=path.lambdas[0])
        assert path.nnzero[0] == 0
        np.testing.assert_array_equal(out[:, 0], path.intercepts[0])

    def test_sigmoid_midpoint(self):
        g = GroupStructure.equal(2, 1)
        path = handmade_path(np.zeros((2, 1)), [1.0], [0.0], g, "binomial")
        out = predict(path, np.ones((3, 2)), kind="response")
        np.testing.assert_array_equal(out, 0.5)

    def test_dense_multiply(self):
        X, _, path = small_path()
        ref = X @ path.beta.toarray() + path.intercepts
        np.testing.assert_allclose(predict(path, X), ref, atol=1e-12)

    def test_class_labels(self):
        X, _, path = small_path("binomial")
        cls = predict(path, X, kind="class")
        assert set(np.unique(cls)) <= {0.0, 1.0}
        prob = predict(path, X, kind="response")
        np.testing.assert_array_equal(cls, (prob > 0.5).astype(float))

    def test_errors(self):
        X, _, path = small_path()
        with pytest.raises(ValueError, match="dimension"):
            predict(path, X[:, :4])
        with pytest.raises(ValueError, match="binomial"):
            predict(path, X, kind="class")
        with pytest.raises(ValueError):
            predict(path, X, kind="odds")


class TestSummary:
    def test_all_zero(self):
        g = GroupStructure.equal(4, 2)
        path = handmade_path(np.zeros((4, 3)), [3, 2, 1], [0, 0, 0], g)
        rows, quant = path_summary(path)
        assert all(r["nnzero"] == 0 and r["active_grps"] == 0 for r in rows)
        assert [q["label"] for q in quant] == ["Max.", "3rd Qu.", "Median",
                                              "1st Qu.", "Min."]

    def test_single_group(self):
        g = GroupStructure.equal(10, 5)
        cols = np.zeros((10, 2))
        cols[5:8, 1] = [1.0, -2.0, 0.5]
        rows, _ = path_summary(handmade_path(cols, [2, 1], [0, 0], g))
        assert rows[1]["nnzero"] <= 5 and rows[1]["active_grps"] == 1

    def test_recount(self):
        _, _, path = small_path(nlambda=20)
        rows, quant = path_summary(path)
        dense = path.beta.toarray()
        for m, r in enumerate(rows):
            assert r["index"] == m + 1
            assert r["lambda_"] == path.lambdas[m]
            assert r["nnzero"] == np.count_nonzero(dense[:, m])
            assert r["active_grps"] == sum(
                np.any(dense[c0:c1, m]) for c0, c1 in path.groups.ranges)
        assert quant[0]["index"] == 1 and quant[-1]["index"] == 20


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_interpolation_convex_combination(u, v, theta):
    _, _, path = small_path()
    lo, hi = path.lambdas[-1], path.lambdas[0]
    s = lo + u * (hi - lo)
    res = coef_at(path, s).beta.toarray()[:, 0]
    k = np.searchsorted(-path.lambdas, -s, side="right") - 1
    k = min(k, path.n_lambda - 2)
    a, b = path.column(k), path.column(k + 1)
    assert np.all(res >= np.minimum(a, b) - 1e-12)
    assert np.all(res <= np.maximum(a, b) + 1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 1), st.integers(0, 11), st.integers(0, 11))
def test_predict_affine(theta, i, j):
    X, _, path = small_path()
    c1, c2 = path.column(i), path.column(j)
    mix = theta * c1 + (1 - theta) * c2
    b0 = theta * path.intercepts[i] + (1 - theta) * path.intercepts[j]
    mixed = handmade_path(mix[:, None], [1.0], [b0], path.groups)
    out = predict(mixed, X)[:, 0]
    ref = theta * predict(path, X)[:, i] + (1 - theta) * predict(path, X)[:, j]
    np.testing.assert_allclose(out, ref, rtol=1e-10, atol=1e-10)
