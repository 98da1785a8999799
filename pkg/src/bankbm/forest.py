"""Regression random forest on the nine portfolio components.

Trees are CART with variance-reduction splitting, grown on bootstrap
samples. Everything is deterministic given (data, params, seed): each
tree draws its bootstrap rows and feature subsamples from its own
derived stream, so thread count and chunking cannot change the result.
"""

from dataclasses import dataclass, replace
import hashlib
import json
import math

import numpy as np

from . import _kernels
from .components import COMPONENTS, N_COMPONENTS
from .panel import PanelDataset
from .seeding import TAG_BOOTSTRAP, TAG_CV_FOLDS, TAG_FEATURES, stream

UNBOUNDED_DEPTH = 1 << 30
FOREST_FORMAT = "bankbm-forest-v1"


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 500
    mtry: int = 3
    max_depth: int = None          # None = unbounded
    min_leaf: int = 5
    bootstrap_fraction: float = 1.0
    bootstrap: bool = True         # False: every row exactly once (test hook)

    def validate(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if not 1 <= self.mtry <= N_COMPONENTS:
            raise ValueError(f"mtry must be in [1, {N_COMPONENTS}]")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be None or >= 1")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        if not 0.0 < self.bootstrap_fraction <= 1.0:
            raise ValueError("bootstrap_fraction must be in (0, 1]")


@dataclass(frozen=True)
class FittedForest:
    """Flat node arrays; tree t owns offsets[t]:offsets[t+1], child ids local."""
    offsets: np.ndarray      # int64 (T+1,)
    feat: np.ndarray         # int32, -1 marks a leaf
    thr: np.ndarray          # float64
    left: np.ndarray         # int32, local node index
    right: np.ndarray        # int32
    mean: np.ndarray         # float64
    count: np.ndarray        # int32
    boot: np.ndarray         # int32 (T, nb) training-row multiset per tree
    params: ForestParams
    feature_names: tuple
    seed: int
    n_train: int
    training_fingerprint: str

    def __post_init__(self):
        for arr in (self.offsets, self.feat, self.thr, self.left, self.right,
                    self.mean, self.count, self.boot):
            arr.setflags(write=False)

    @property
    def n_trees(self):
        return int(self.offsets.shape[0] - 1)

    def tree_slice(self, t):
        return slice(int(self.offsets[t]), int(self.offsets[t + 1]))

    def predict(self, X) -> np.ndarray:
        X = _as_matrix(X)
        mask = np.ones((X.shape[0], self.n_trees), dtype=np.uint8)
        out = np.empty(X.shape[0], dtype=np.float64)
        _kernels.forest_predict(X, self.offsets, self.feat, self.thr,
                                self.left, self.right, self.mean, mask, out)
        return out


def _as_matrix(obs):
    X = np.ascontiguousarray(obs, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != N_COMPONENTS:
        raise ValueError(f"expected {N_COMPONENTS} feature columns, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite feature values")
    return X


def _extract_xy(group, y):
    if isinstance(group, PanelDataset):
        return _as_matrix(group.ratios), np.ascontiguousarray(
            group.profitability, dtype=np.float64)
    if y is None:
        raise ValueError("y is required when group is a raw feature matrix")
    return _as_matrix(group), np.ascontiguousarray(y, dtype=np.float64)


def fit_forest(group, y=None, params: ForestParams = None, seed: int = 0,
               chunk_size: int = 64) -> FittedForest:
    """Grow params.n_trees CART trees on bootstrap samples of the group."""
    if params is None:
        params = ForestParams()
    params.validate()
    X, y = _extract_xy(group, y)
    n = X.shape[0]
    if n < 2 * params.min_leaf:
        raise ValueError(f"group of {n} rows is too small for min_leaf={params.min_leaf}")
    if not np.all(np.isfinite(y)):
        raise ValueError("non-finite response values")

    nb = n if not params.bootstrap else max(1, int(round(params.bootstrap_fraction * n)))
    depth_cap = UNBOUNDED_DEPTH if params.max_depth is None else params.max_depth
    T = params.n_trees
    cap = 2 * nb + 1
    mtry = params.mtry

    boot_all = np.empty((T, nb), dtype=np.int32)
    for t in range(T):
        if params.bootstrap:
            boot_all[t] = stream(seed, TAG_BOOTSTRAP, t).integers(
                0, n, size=nb, dtype=np.int64).astype(np.int32)
        else:
            boot_all[t] = np.arange(nb, dtype=np.int32)

    parts = {k: [] for k in ("feat", "thr", "left", "right", "mean", "count")}
    sizes = np.empty(T, dtype=np.int64)

    for start in range(0, T, chunk_size):
        stop = min(start + chunk_size, T)
        c = stop - start
        feat_s = np.empty((c, cap), dtype=np.int32)
        thr_s = np.empty((c, cap), dtype=np.float64)
        left_s = np.empty((c, cap), dtype=np.int32)
        right_s = np.empty((c, cap), dtype=np.int32)
        mean_s = np.empty((c, cap), dtype=np.float64)
        cnt_s = np.empty((c, cap), dtype=np.int32)
        nn_s = np.empty(c, dtype=np.int64)
        if mtry < N_COMPONENTS:
            bufs = np.empty((c, mtry * cap), dtype=np.uint64)
            for j, t in enumerate(range(start, stop)):
                bufs[j] = stream(seed, TAG_FEATURES, t).integers(
                    0, 2 ** 64, size=mtry * cap, dtype=np.uint64)
        else:
            bufs = np.zeros((c, 1), dtype=np.uint64)
        _kernels.grow_forest_chunk(X, y, boot_all[start:stop], params.min_leaf,
                                   depth_cap, mtry, bufs, feat_s, thr_s,
                                   left_s, right_s, mean_s, cnt_s, nn_s)
        for j, t in enumerate(range(start, stop)):
            m = int(nn_s[j])
            sizes[t] = m
            parts["feat"].append(feat_s[j, :m].copy())
            parts["thr"].append(thr_s[j, :m].copy())
            parts["left"].append(left_s[j, :m].copy())
            parts["right"].append(right_s[j, :m].copy())
            parts["mean"].append(mean_s[j, :m].copy())
            parts["count"].append(cnt_s[j, :m].copy())

    offsets = np.zeros(T + 1, dtype=np.int64)
    np.cumsum(sizes, out=offsets[1:])
    fingerprint = hashlib.sha256(X.tobytes() + y.tobytes()).hexdigest()

    return FittedForest(
        offsets=offsets,
        feat=np.concatenate(parts["feat"]),
        thr=np.concatenate(parts["thr"]),
        left=np.concatenate(parts["left"]),
        right=np.concatenate(parts["right"]),
        mean=np.concatenate(parts["mean"]),
        count=np.concatenate(parts["count"]),
        boot=boot_all,
        params=params,
        feature_names=tuple(COMPONENTS),
        seed=int(seed),
        n_train=n,
        training_fingerprint=fingerprint,
    )


def predict(forest: FittedForest, obs) -> float:
    """Forest prediction for a single component vector."""
    out = forest.predict(np.asarray(obs, dtype=np.float64).reshape(1, -1))
    return float(out[0])


def oob_mask(forest: FittedForest, n_rows: int = None) -> np.ndarray:
    """mask[i, t] = 1 iff training row i is absent from tree t's bootstrap."""
    n = forest.n_train if n_rows is None else n_rows
    mask = np.ones((n, forest.n_trees), dtype=np.uint8)
    for t in range(forest.n_trees):
        mask[forest.boot[t], t] = 0
    return mask


def oob_rmse(forest: FittedForest, group, y=None) -> float:
    """RMSE over rows with at least one excluding tree, OOB predictions only."""
    if not forest.params.bootstrap:
        raise ValueError("OOB error requires bootstrap sampling to be enabled")
    X, y = _extract_xy(group, y)
    if X.shape[0] != forest.n_train:
        raise ValueError("OOB error must be computed on the training group")
    mask = oob_mask(forest)
    out = np.empty(X.shape[0], dtype=np.float64)
    _kernels.forest_predict(X, forest.offsets, forest.feat, forest.thr,
                            forest.left, forest.right, forest.mean, mask, out)
    covered = ~np.isnan(out)
    if not covered.any():
        raise ValueError("no observation is out-of-bag for any tree; grow more trees")
    err = out[covered] - y[covered]
    return float(np.sqrt(np.mean(err * err)))


def default_grid():
    grid = []
    for n_trees in (300, 500):
        for mtry in (3, 5, 9):
            for min_leaf in (5, 25):
                grid.append(ForestParams(n_trees=n_trees, mtry=mtry,
                                         min_leaf=min_leaf))
    return grid


def tune_hyperparameters(group, grid=None, folds: int = 5, seed: int = 0,
                         y=None) -> ForestParams:
    """Grid point with minimal mean k-fold CV RMSE.

    Ties break toward fewer trees, then smaller depth (None counts as
    unbounded), then larger min_leaf, then smaller mtry; fold membership
    and per-fold fit seeds are fixed across grid points.
    """
    if grid is None:
        grid = default_grid()
    grid = list(grid)
    if not grid:
        raise ValueError("empty hyperparameter grid")
    if folds < 2:
        raise ValueError("folds must be >= 2")
    X, y = _extract_xy(group, y)
    n = X.shape[0]
    if n < folds:
        raise ValueError(f"group of {n} rows cannot be split into {folds} folds")

    perm = stream(seed, TAG_CV_FOLDS).permutation(n)
    fold_rows = np.array_split(perm, folds)
    fit_seeds = stream(seed, TAG_CV_FOLDS, 1).integers(0, 2 ** 31 - 1, size=folds)

    scored = []
    for gi, params in enumerate(grid):
        params.validate()
        errs = []
        for f in range(folds):
            test_idx = np.sort(fold_rows[f])
            train_idx = np.sort(np.concatenate(
                [fold_rows[g] for g in range(folds) if g != f]))
            fitted = fit_forest(X[train_idx], y[train_idx], params,
                                seed=int(fit_seeds[f]))
            pred = fitted.predict(X[test_idx])
            e = pred - y[test_idx]
            errs.append(math.sqrt(float(np.mean(e * e))))
        rmse = float(np.mean(errs))
        depth_key = math.inf if params.max_depth is None else params.max_depth
        scored.append((rmse, params.n_trees, depth_key, -params.min_leaf,
                       params.mtry, gi, params))
    scored.sort(key=lambda rec: rec[:6])
    return scored[0][6]


def forest_to_json(forest: FittedForest) -> str:
    trees = []
    for t in range(forest.n_trees):
        s = forest.tree_slice(t)
        trees.append({
            "feat": forest.feat[s].tolist(),
            "thr": forest.thr[s].tolist(),
            "left": forest.left[s].tolist(),
            "right": forest.right[s].tolist(),
            "mean": forest.mean[s].tolist(),
            "count": forest.count[s].tolist(),
            "bootstrap_indices": forest.boot[t].tolist(),
        })
    doc = {
        "format": FOREST_FORMAT,
        "feature_names": list(forest.feature_names),
        "seed": forest.seed,
        "n_train": forest.n_train,
        "training_fingerprint": forest.training_fingerprint,
        "params": {
            "n_trees": forest.params.n_trees,
            "mtry": forest.params.mtry,
            "max_depth": forest.params.max_depth,
            "min_leaf": forest.params.min_leaf,
            "bootstrap_fraction": forest.params.bootstrap_fraction,
            "bootstrap": forest.params.bootstrap,
        },
        "trees": trees,
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def forest_from_json(text: str) -> FittedForest:
    doc = json.loads(text)
    if doc.get("format") != FOREST_FORMAT:
        raise ValueError(f"unrecognized forest format: {doc.get('format')!r}")
    p = doc["params"]
    params = ForestParams(n_trees=p["n_trees"], mtry=p["mtry"],
                          max_depth=p["max_depth"], min_leaf=p["min_leaf"],
                          bootstrap_fraction=p["bootstrap_fraction"],
                          bootstrap=p["bootstrap"])
    trees = doc["trees"]
    sizes = np.array([len(t["feat"]) for t in trees], dtype=np.int64)
    offsets = np.zeros(len(trees) + 1, dtype=np.int64)
    np.cumsum(sizes, out=offsets[1:])
    cat = lambda key, dtype: np.concatenate(
        [np.asarray(t[key], dtype=dtype) for t in trees])
    boot = np.asarray([t["bootstrap_indices"] for t in trees], dtype=np.int32)
    return FittedForest(
        offsets=offsets,
        feat=cat("feat", np.int32),
        thr=cat("thr", np.float64),
        left=cat("left", np.int32),
        right=cat("right", np.int32),
        mean=cat("mean", np.float64),
        count=cat("count", np.int32),
        boot=boot,
        params=params,
        feature_names=tuple(doc["feature_names"]),
        seed=int(doc["seed"]),
        n_train=int(doc["n_train"]),
        training_fingerprint=doc["training_fingerprint"],
    )
