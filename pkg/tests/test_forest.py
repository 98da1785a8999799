"""Forest growth, prediction, tuning, OOB, and serialization tests."""

import math

import numpy as np
import pytest

from bankbm.components import COMPONENT_INDEX, N_COMPONENTS
from bankbm.forest import (
    FittedForest, ForestParams, default_grid, fit_forest, forest_from_json,
    forest_to_json, oob_rmse, predict, tune_hyperparameters,
)

LEAF = -1


def random_xy(n, seed=0, noise=0.0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0, 1, size=(n, N_COMPONENTS))
    y = 0.3 * X[:, 0] - 0.2 * X[:, 8] + noise * rng.normal(size=n)
    return X, y


def tree_arrays(forest, t):
    s = forest.tree_slice(t)
    return (forest.feat[s], forest.thr[s], forest.left[s], forest.right[s],
            forest.mean[s], forest.count[s])


def route_rows(feat, thr, left, right, X, rows):
    """Replay: node id -> list of rows reaching it (root=0)."""
    reach = {0: list(rows)}
    order = [0]
    i = 0
    while i < len(order):
        node = order[i]
        i += 1
        if feat[node] == LEAF:
            continue
        lrows, rrows = [], []
        for r in reach[node]:
            if X[r, feat[node]] <= thr[node]:
                lrows.append(r)
            else:
                rrows.append(r)
        reach[left[node]] = lrows
        reach[right[node]] = rrows
        order.extend([left[node], right[node]])
    return reach


def test_constant_response_single_leaf():
    X, _ = random_xy(40, seed=1)
    y = np.full(40, 0.75)   # exactly representable, so sums stay exact
    f = fit_forest(X, y, ForestParams(n_trees=5, min_leaf=1), seed=3)
    for t in range(5):
        feat, thr, left, right, mean, count = tree_arrays(f, t)
        assert len(feat) == 1 and feat[0] == LEAF
        assert mean[0] == 0.75
    assert predict(f, X[0]) == 0.75
    g = fit_forest(X, np.full(40, 0.7), ForestParams(n_trees=2, min_leaf=1), seed=3)
    assert predict(g, X[0]) == pytest.approx(0.7, abs=1e-12)


def equity_split_data():
    X = np.full((6, N_COMPONENTS), 0.25)
    X[:, COMPONENT_INDEX["customer_loans"]] = [0.5, 0.1, 0.4, 0.2, 0.3, 0.6]
    X[:, COMPONENT_INDEX["equity"]] = [0.02, 0.05, 0.10, 0.30, 0.40, 0.60]
    y = np.array([0.0, 0.0, 0.0, 1.0, 1.0, 1.0])
    return X, y


def test_equity_split_example():
    X, y = equity_split_data()
    params = ForestParams(n_trees=1, mtry=9, min_leaf=1, bootstrap=False)
    f = fit_forest(X, y, params, seed=0)
    feat, thr, left, right, mean, count = tree_arrays(f, 0)
    eq = COMPONENT_INDEX["equity"]
    assert feat[0] == eq
    assert 0.10 < thr[0] < 0.30
    assert mean[left[0]] == 0.0
    assert mean[right[0]] == 1.0
    assert predict(f, X[1]) == 0.0          # equity = 0.05 routes left
    obs = X[1].copy()
    obs[eq] = 0.05
    assert predict(f, obs) == 0.0


def test_two_tree_mean():
    # hand-built forest: two single-leaf trees with means 0.2 and 0.4
    f = FittedForest(
        offsets=np.array([0, 1, 2], dtype=np.int64),
        feat=np.array([LEAF, LEAF], dtype=np.int32),
        thr=np.zeros(2), left=np.array([-1, -1], dtype=np.int32),
        right=np.array([-1, -1], dtype=np.int32),
        mean=np.array([0.2, 0.4]), count=np.array([3, 3], dtype=np.int32),
        boot=np.zeros((2, 3), dtype=np.int32),
        params=ForestParams(n_trees=2), feature_names=("a",) * 9,
        seed=0, n_train=3, training_fingerprint="x")
    assert predict(f, np.full(N_COMPONENTS, 0.5)) == pytest.approx(0.3)


def test_node_means_by_replay():
    X, y = random_xy(120, seed=7, noise=0.05)
    params = ForestParams(n_trees=8, mtry=3, min_leaf=4, max_depth=6)
    f = fit_forest(X, y, params, seed=11)
    for t in range(f.n_trees):
        feat, thr, left, right, mean, count = tree_arrays(f, t)
        reach = route_rows(feat, thr, left, right, X, f.boot[t])
        for node, rows in reach.items():
            assert count[node] == len(rows)
            assert mean[node] == pytest.approx(np.mean(y[rows]), abs=1e-12)
            if feat[node] != LEAF:
                assert count[node] == count[left[node]] + count[right[node]]
            else:
                assert len(rows) >= params.min_leaf


def test_split_never_increases_sse():
    X, y = random_xy(150, seed=9, noise=0.1)
    f = fit_forest(X, y, ForestParams(n_trees=4, mtry=5, min_leaf=3), seed=2)
    for t in range(f.n_trees):
        feat, thr, left, right, mean, count = tree_arrays(f, t)
        reach = route_rows(feat, thr, left, right, X, f.boot[t])
        for node, rows in reach.items():
            if feat[node] == LEAF:
                continue
            sse = lambda rr: float(np.sum((y[rr] - np.mean(y[rr])) ** 2))
            assert sse(rows) >= sse(reach[left[node]]) + sse(reach[right[node]]) - 1e-9


def test_min_leaf_and_depth_respected():
    X, y = random_xy(200, seed=4, noise=0.2)
    f = fit_forest(X, y, ForestParams(n_trees=3, min_leaf=17, max_depth=3), seed=5)
    for t in range(3):
        feat, thr, left, right, mean, count = tree_arrays(f, t)
        depth = {0: 0}
        for node in range(len(feat)):
            if feat[node] != LEAF:
                depth[left[node]] = depth[node] + 1
                depth[right[node]] = depth[node] + 1
                assert depth[node] < 3
            else:
                assert count[node] >= 17
        assert max(depth.values()) <= 3


def test_determinism_same_seed():
    X, y = random_xy(90, seed=6, noise=0.05)
    params = ForestParams(n_trees=6, mtry=4, min_leaf=2)
    a = fit_forest(X, y, params, seed=42)
    b = fit_forest(X, y, params, seed=42)
    for field in ("offsets", "feat", "thr", "left", "right", "mean", "count", "boot"):
        assert np.array_equal(getattr(a, field), getattr(b, field)), field
    c = fit_forest(X, y, params, seed=43)
    assert not np.array_equal(a.thr, c.thr)


def test_chunking_does_not_change_forest():
    X, y = random_xy(70, seed=16, noise=0.05)
    params = ForestParams(n_trees=10, mtry=3, min_leaf=2)
    a = fit_forest(X, y, params, seed=1, chunk_size=3)
    b = fit_forest(X, y, params, seed=1, chunk_size=64)
    for field in ("offsets", "feat", "thr", "left", "right", "mean", "count"):
        assert np.array_equal(getattr(a, field), getattr(b, field)), field


def test_single_tree_memorizes_training_rows():
    X, y = random_xy(50, seed=13, noise=0.3)  # all rows distinct
    params = ForestParams(n_trees=1, mtry=9, min_leaf=1, bootstrap=False)
    f = fit_forest(X, y, params, seed=0)
    pred = f.predict(X)
    assert np.allclose(pred, y, atol=1e-12)


def test_parameter_validation():
    X, y = random_xy(30)
    with pytest.raises(ValueError, match="mtry"):
        fit_forest(X, y, ForestParams(mtry=10), seed=0)
    with pytest.raises(ValueError, match="too small"):
        fit_forest(X[:6], y[:6], ForestParams(min_leaf=10), seed=0)
    with pytest.raises(ValueError, match="n_trees"):
        ForestParams(n_trees=0).validate()
    with pytest.raises(ValueError, match="non-finite"):
        bad = X.copy()
        bad[0, 0] = np.nan
        fit_forest(bad, y, ForestParams(n_trees=1), seed=0)


def test_tune_single_point_grid():
    X, y = random_xy(60, seed=21, noise=0.1)
    only = ForestParams(n_trees=20, mtry=3, min_leaf=5)
    assert tune_hyperparameters(X, [only], folds=3, seed=0, y=y) == only


def test_tune_duplicate_points_tie_break():
    X, y = random_xy(60, seed=22, noise=0.1)
    p = ForestParams(n_trees=15, mtry=3, min_leaf=5)
    got = tune_hyperparameters(X, [p, p], folds=3, seed=0, y=y)
    assert got == p


def test_tune_prefers_lower_cv_rmse():
    # strong linear signal: a min_leaf that floors the whole sample loses
    X, y = random_xy(240, seed=23, noise=0.02)
    good = ForestParams(n_trees=30, mtry=9, min_leaf=5)
    bad = ForestParams(n_trees=30, mtry=9, min_leaf=80)
    got = tune_hyperparameters(X, [bad, good], folds=4, seed=3, y=y)
    assert got == good


def test_tune_tie_break_ordering():
    # constant response: every grid point scores identically (RMSE 0)
    X, _ = random_xy(80, seed=30)
    y = np.full(80, 1.5)
    grid = [ForestParams(n_trees=50, mtry=3, min_leaf=5),
            ForestParams(n_trees=20, mtry=3, min_leaf=5),
            ForestParams(n_trees=20, mtry=3, min_leaf=25)]
    got = tune_hyperparameters(X, grid, folds=4, seed=0, y=y)
    assert got == ForestParams(n_trees=20, mtry=3, min_leaf=25)


def test_oob_constant_response_zero():
    X, _ = random_xy(60, seed=25)
    y = np.full(60, 0.5)
    f = fit_forest(X, y, ForestParams(n_trees=30, min_leaf=2), seed=1)
    assert oob_rmse(f, X, y=y) == 0.0


def test_oob_requires_bootstrap():
    X, y = random_xy(40, seed=26)
    f = fit_forest(X, y, ForestParams(n_trees=2, bootstrap=False), seed=1)
    with pytest.raises(ValueError, match="bootstrap"):
        oob_rmse(f, X, y=y)


def test_oob_rmse_tracks_noise_scale():
    rng = np.random.default_rng(31)
    n, sigma = 1200, 0.05
    X = rng.uniform(0, 1, size=(n, N_COMPONENTS))
    y = 0.1 * X[:, 0] + sigma * rng.normal(size=n)
    f = fit_forest(X, y, ForestParams(n_trees=150, mtry=3, min_leaf=25), seed=8)
    got = oob_rmse(f, X, y=y)
    assert 0.75 * sigma < got < 1.25 * sigma


def test_default_grid_shape():
    grid = default_grid()
    assert len(grid) == 12
    assert all(p.max_depth is None for p in grid)


def test_serialization_round_trip():
    X, y = random_xy(80, seed=27, noise=0.1)
    f = fit_forest(X, y, ForestParams(n_trees=5, mtry=4, min_leaf=3), seed=9)
    text = forest_to_json(f)
    g = forest_from_json(text)
    for field in ("offsets", "feat", "thr", "left", "right", "mean", "count", "boot"):
        assert np.array_equal(getattr(f, field), getattr(g, field)), field
    assert g.params == f.params
    assert g.seed == f.seed
    assert g.training_fingerprint == f.training_fingerprint
    assert np.array_equal(g.predict(X), f.predict(X))
    assert forest_to_json(g) == text  # byte-stable re-serialization


def test_from_json_rejects_unknown_format():
    with pytest.raises(ValueError, match="format"):
        forest_from_json('{"format": "something-else"}')
