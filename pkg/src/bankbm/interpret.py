"""Additive path-walk decomposition of forest predictions.

For one tree, an observation's prediction telescopes along its root-to-leaf
path: leaf_mean = root_mean + sum over steps of (child_mean - parent_mean),
and each step is booked to the feature that split the parent. Forest-level
bias/contributions/prediction are arithmetic means over trees, so
bias + sum(contributions) = prediction up to float roundoff.
"""

import csv
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .components import COMPONENTS, N_COMPONENTS
from .forest import FittedForest, _as_matrix, oob_mask


@dataclass(frozen=True)
class ContributionVector:
    obs_index: int
    bias: float
    contributions: np.ndarray   # (9,) canonical component order
    prediction: float

    def __post_init__(self):
        self.contributions.setflags(write=False)


@dataclass(frozen=True)
class ContributionMatrix:
    bias: np.ndarray            # (n,)
    contributions: np.ndarray   # (n, 9)
    prediction: np.ndarray      # (n,)
    tree_residual: np.ndarray   # (n,) worst per-tree additivity residual
    n_trees_used: np.ndarray    # (n,)
    feature_names: tuple

    def __post_init__(self):
        for arr in (self.bias, self.contributions, self.prediction,
                    self.tree_residual, self.n_trees_used):
            arr.setflags(write=False)

    @property
    def n_obs(self):
        return int(self.bias.shape[0])

    def forest_residual(self) -> np.ndarray:
        """|prediction - bias - sum(contributions)| per observation."""
        return np.abs(self.prediction - self.bias
                      - self.contributions.sum(axis=1))

    def row(self, i) -> ContributionVector:
        return ContributionVector(obs_index=int(i), bias=float(self.bias[i]),
                                  contributions=self.contributions[i].copy(),
                                  prediction=float(self.prediction[i]))


def _decompose(forest: FittedForest, X, mask) -> ContributionMatrix:
    n = X.shape[0]
    bias = np.empty(n, dtype=np.float64)
    contrib = np.empty((n, N_COMPONENTS), dtype=np.float64)
    pred = np.empty(n, dtype=np.float64)
    resid = np.empty(n, dtype=np.float64)
    used = np.empty(n, dtype=np.int64)
    _kernels.forest_decompose(X, forest.offsets, forest.feat, forest.thr,
                              forest.left, forest.right, forest.mean, mask,
                              bias, contrib, pred, resid, used)
    return ContributionMatrix(bias=bias, contributions=contrib, prediction=pred,
                              tree_residual=resid, n_trees_used=used,
                              feature_names=tuple(COMPONENTS))


def decompose_observation(forest: FittedForest, obs,
                          obs_index: int = 0) -> ContributionVector:
    if forest.n_trees == 0:
        raise ValueError("forest has no trees")
    X = _as_matrix(np.asarray(obs, dtype=np.float64).reshape(1, -1))
    mask = np.ones((1, forest.n_trees), dtype=np.uint8)
    cm = _decompose(forest, X, mask)
    return ContributionVector(obs_index=obs_index, bias=float(cm.bias[0]),
                              contributions=cm.contributions[0].copy(),
                              prediction=float(cm.prediction[0]))


def contribution_matrix(forest: FittedForest, group, mode: str = "in-sample"
                        ) -> ContributionMatrix:
    """Decompose every observation of the group, in stable row order.

    mode="oob" restricts each row to the trees whose bootstrap excluded it
    (rows must then be the forest's training rows, same order); rows no tree
    excludes come back NaN with n_trees_used = 0.
    """
    if forest.n_trees == 0:
        raise ValueError("forest has no trees")
    from .panel import PanelDataset
    X = group.ratios if isinstance(group, PanelDataset) else group
    X = _as_matrix(X)
    if X.shape[0] == 0:
        raise ValueError("empty observation group")
    if mode == "in-sample":
        mask = np.ones((X.shape[0], forest.n_trees), dtype=np.uint8)
    elif mode == "oob":
        if not forest.params.bootstrap:
            raise ValueError("OOB decomposition requires bootstrap sampling")
        if X.shape[0] != forest.n_train:
            raise ValueError("OOB decomposition must run on the training group")
        mask = oob_mask(forest)
    else:
        raise ValueError(f"unknown decomposition mode: {mode!r}")
    return _decompose(forest, X, mask)


CONTRIB_HEADER = ["row_index", "bank_id", "year", "bias"] + \
    list(COMPONENTS) + ["prediction"]


def write_contributions(path, data, cm: ContributionMatrix):
    """CSV export at full precision (floats via repr, exact round-trip)."""
    if data.n_obs != cm.n_obs:
        raise ValueError("panel and contribution matrix row counts differ")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CONTRIB_HEADER)
        for i in range(cm.n_obs):
            row = [int(data.row_index[i]), data.bank_id[i], int(data.year[i]),
                   repr(float(cm.bias[i]))]
            row += [repr(float(v)) for v in cm.contributions[i]]
            row.append(repr(float(cm.prediction[i])))
            w.writerow(row)


def read_contributions(path):
    """Returns (row_index, bank_id, year, ContributionMatrix)."""
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header != CONTRIB_HEADER:
            raise ValueError(f"unexpected contributions header in {path}")
        rows = list(r)
    n = len(rows)
    row_index = np.array([int(x[0]) for x in rows], dtype=np.int64)
    bank_id = np.array([x[1] for x in rows], dtype=object)
    year = np.array([int(x[2]) for x in rows], dtype=np.int64)
    bias = np.array([float(x[3]) for x in rows], dtype=np.float64)
    contrib = np.array([[float(v) for v in x[4:4 + N_COMPONENTS]] for x in rows],
                       dtype=np.float64).reshape(n, N_COMPONENTS)
    pred = np.array([float(x[-1]) for x in rows], dtype=np.float64)
    cm = ContributionMatrix(bias=bias, contributions=contrib, prediction=pred,
                            tree_residual=np.zeros(n), n_trees_used=np.zeros(n, dtype=np.int64),
                            feature_names=tuple(COMPONENTS))
    return row_index, bank_id, year, cm
