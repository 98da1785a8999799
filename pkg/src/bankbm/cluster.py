"""Contribution-space K-means and majority-rule selection of k.

kmeans_fit runs k-means++ seeding followed by Hartigan-Wong transfer
passes (Lloyd iterations behind a flag for cross-checks), best of
`restarts` by final inertia. compute_validity_indices scores a scan of
k values with Calinski-Harabasz, mean silhouette, Davies-Bouldin, Dunn,
and the Hartigan statistic; each index votes and the majority wins,
ties to the smallest k.
"""

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .seeding import TAG_KMEANS, stream

INDEX_NAMES = ("calinski_harabasz", "silhouette", "davies_bouldin", "dunn",
               "hartigan")
HARTIGAN_CUTOFF = 10.0


@dataclass(frozen=True)
class ClusterAssignment:
    k: int
    labels: np.ndarray       # (n,) int32
    centroids: np.ndarray    # (k, d)
    inertia: float
    seed: int
    restarts: int
    best_restart: int
    inertia_traces: tuple    # per restart, tuple of inertia after each pass

    def __post_init__(self):
        self.labels.setflags(write=False)
        self.centroids.setflags(write=False)

    @property
    def n_obs(self):
        return int(self.labels.shape[0])

    def cluster_sizes(self):
        return np.bincount(self.labels, minlength=self.k)


def _as_points(points):
    X = np.ascontiguousarray(points, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("points must be a 2-D array")
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite point coordinates")
    return X


def _kmeanspp_init(X, k, rng):
    """k-means++ seeding; duplicate points carry zero pick probability."""
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]), dtype=np.float64)
    first = int(rng.integers(0, n))
    centers[0] = X[first]
    if k == 1:
        return centers
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            raise ValueError(
                f"degenerate point set: cannot seed {k} distinct centers")
        cum = np.cumsum(d2)
        pick = int(np.searchsorted(cum, rng.uniform(0.0, total), side="right"))
        pick = min(pick, n - 1)
        centers[c] = X[pick]
        d2 = np.minimum(d2, ((X - centers[c]) ** 2).sum(axis=1))
    return centers


def _lloyd(X, centers0, max_passes):
    n, d = X.shape
    k = centers0.shape[0]
    centers = centers0.copy()
    labels = np.zeros(n, dtype=np.int32)
    trace = []
    for _ in range(max_passes + 1):
        d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = d2.argmin(axis=1).astype(np.int32)
        sizes = np.bincount(new_labels, minlength=k)
        for c in np.nonzero(sizes == 0)[0]:
            donors = sizes[new_labels] > 1
            dist_own = d2[np.arange(n), new_labels]
            dist_own = np.where(donors, dist_own, -np.inf)
            far = int(dist_own.argmax())
            sizes[new_labels[far]] -= 1
            new_labels[far] = c
            sizes[c] += 1
        for c in range(k):
            centers[c] = X[new_labels == c].mean(axis=0)
        inertia = float(((X - centers[new_labels]) ** 2).sum())
        trace.append(inertia)
        if np.array_equal(new_labels, labels) and len(trace) > 1:
            break
        labels = new_labels
    return labels, centers, trace


def kmeans_fit(points, k: int, seed: int = 0, restarts: int = 25,
               max_passes: int = 300,
               algorithm: str = "hartigan-wong") -> ClusterAssignment:
    """Best-inertia clustering over seeded restarts."""
    X = _as_points(points)
    n = X.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    if k > n:
        raise ValueError(f"k={k} exceeds {n} points")
    if np.unique(X, axis=0).shape[0] < k:
        raise ValueError(
            f"fewer than k={k} distinct points; clusters would be empty")
    if algorithm not in ("hartigan-wong", "lloyd"):
        raise ValueError(f"unknown algorithm: {algorithm!r}")

    best = None
    traces = []
    for r in range(restarts):
        rng = stream(seed, TAG_KMEANS, k, r)
        centers0 = _kmeanspp_init(X, k, rng)
        if algorithm == "hartigan-wong":
            labels = np.empty(n, dtype=np.int32)
            centers = np.empty_like(centers0)
            trace_buf = np.empty(max_passes + 2, dtype=np.float64)
            n_logged = _kernels.hartigan_wong(X, centers0, max_passes, labels,
                                              centers, trace_buf)
            trace = trace_buf[:n_logged].tolist()
        else:
            labels, centers, trace = _lloyd(X, centers0, max_passes)
        inertia = float(((X - centers[labels]) ** 2).sum())
        traces.append(tuple(trace))
        if best is None or inertia < best[0]:
            best = (inertia, r, labels.copy(), centers.copy())

    inertia, r_best, labels, centers = best
    sizes = np.bincount(labels, minlength=k)
    assert (sizes > 0).all(), "internal error: empty cluster in result"
    # exact member means (the HW kernel already recomputes, but pin it here)
    for c in range(k):
        centers[c] = X[labels == c].mean(axis=0)
    inertia = float(((X - centers[labels]) ** 2).sum())
    return ClusterAssignment(k=k, labels=labels, centroids=centers,
                             inertia=inertia, seed=int(seed),
                             restarts=restarts, best_restart=r_best,
                             inertia_traces=tuple(traces))


def _index_values(X, assignment: ClusterAssignment):
    """Calinski-Harabasz, mean silhouette, Davies-Bouldin, Dunn for one k."""
    n, d = X.shape
    k = assignment.k
    labels = assignment.labels
    centers = assignment.centroids
    sizes = assignment.cluster_sizes().astype(np.float64)

    overall = X.mean(axis=0)
    between = float((sizes * ((centers - overall) ** 2).sum(axis=1)).sum())
    within = assignment.inertia
    if within <= 0.0:
        ch = np.inf
    else:
        ch = (between / (k - 1)) / (within / (n - k))

    sum_dist = np.zeros((n, k), dtype=np.float64)
    min_inter = np.empty((k, k), dtype=np.float64)
    max_diam = np.empty(k, dtype=np.float64)
    _kernels.pairwise_cluster_stats(X, labels, k, sum_dist, min_inter, max_diam)

    own = sizes[labels]
    a = np.where(own > 1, sum_dist[np.arange(n), labels] / np.maximum(own - 1, 1), 0.0)
    mean_other = sum_dist / sizes[None, :]
    mean_other[np.arange(n), labels] = np.inf
    b = mean_other.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where((own > 1) & (denom > 0), (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    silhouette = float(s.mean())

    scatter = np.empty(k, dtype=np.float64)
    for c in range(k):
        member = X[labels == c]
        scatter[c] = np.sqrt(((member - centers[c]) ** 2).sum(axis=1)).mean()
    db_terms = np.zeros(k, dtype=np.float64)
    for i in range(k):
        worst = 0.0
        for j in range(k):
            if i == j:
                continue
            sep = np.sqrt(((centers[i] - centers[j]) ** 2).sum())
            val = np.inf if sep == 0.0 else (scatter[i] + scatter[j]) / sep
            worst = max(worst, val)
        db_terms[i] = worst
    db = float(db_terms.mean())

    diam = max_diam.max()
    inter = min(min_inter[i, j] for i in range(k) for j in range(k) if i != j)
    dunn = np.inf if diam == 0.0 else float(inter / diam)

    return {"calinski_harabasz": float(ch), "silhouette": silhouette,
            "davies_bouldin": db, "dunn": float(dunn)}


@dataclass(frozen=True)
class KVoteTable:
    ks: tuple                 # evaluated k values, ascending
    values: dict              # index name -> {k: value}; hartigan only where defined
    votes: dict               # index name -> voted k
    winner: int
    excluded: tuple           # k values dropped from the scan, with reasons


def compute_validity_indices(points, assignments) -> KVoteTable:
    """Score assignments (one per k) and collect one vote per index.

    `assignments` is a mapping k -> ClusterAssignment or an iterable of
    assignments. Hartigan's statistic H(k) = (W_k / W_{k+1} - 1)(n - k - 1)
    votes for the smallest k with H < 10, falling back to the largest
    scanned k when none dips below; it is only defined where k+1 was also
    scanned.
    """
    X = _as_points(points)
    if not isinstance(assignments, dict):
        assignments = {a.k: a for a in assignments}
    ks = sorted(assignments)
    if len(ks) < 2:
        raise ValueError("scan range must contain at least two values of k")

    excluded = []
    usable = []
    for k in ks:
        a = assignments[k]
        if k < 2:
            excluded.append((k, "k < 2 carries no validity information"))
            continue
        if (a.cluster_sizes() == 0).any():
            warnings.warn(f"k={k} produced an empty cluster; excluded from voting")
            excluded.append((k, "empty cluster"))
            continue
        usable.append(k)
    if len(usable) < 2:
        raise ValueError("fewer than two usable k values in the scan")

    values = {name: {} for name in INDEX_NAMES}
    for k in usable:
        vals = _index_values(X, assignments[k])
        for name in vals:
            values[name][k] = vals[name]

    n = X.shape[0]
    for k in usable:
        if k + 1 in usable:
            wk = assignments[k].inertia
            wk1 = assignments[k + 1].inertia
            if wk1 > 0.0:
                h = (wk / wk1 - 1.0) * (n - k - 1)
            else:
                h = np.inf if wk > 0.0 else 0.0
            values["hartigan"][k] = float(h)

    votes = {}
    arr = lambda name: np.array([values[name][k] for k in usable])
    votes["calinski_harabasz"] = usable[int(arr("calinski_harabasz").argmax())]
    votes["silhouette"] = usable[int(arr("silhouette").argmax())]
    votes["davies_bouldin"] = usable[int(arr("davies_bouldin").argmin())]
    votes["dunn"] = usable[int(arr("dunn").argmax())]
    h_ks = [k for k in usable if k in values["hartigan"]]
    votes["hartigan"] = max(usable)
    for k in h_ks:
        if values["hartigan"][k] < HARTIGAN_CUTOFF:
            votes["hartigan"] = k
            break

    winner = select_k_majority_from_votes(votes)
    return KVoteTable(ks=tuple(usable), values=values, votes=votes,
                      winner=winner, excluded=tuple(excluded))


def select_k_majority_from_votes(votes: dict) -> int:
    counts = {}
    for k in votes.values():
        counts[k] = counts.get(k, 0) + 1
    top = max(counts.values())
    return min(k for k, c in counts.items() if c == top)


def select_k_majority(table: KVoteTable) -> int:
    if not table.votes:
        raise ValueError("no index cast a vote")
    return select_k_majority_from_votes(table.votes)


def cluster_scan(points, k_range, seed: int = 0, restarts: int = 25,
                 max_passes: int = 300, algorithm: str = "hartigan-wong",
                 standardize: bool = False):
    """Fit every k in k_range, score, and vote. Returns (assignments, table).

    standardize=True z-scores each coordinate before clustering (constant
    coordinates pass through); assignments are reported for the original
    points either way.
    """
    X = _as_points(points)
    if standardize:
        mu = X.mean(axis=0)
        sd = X.std(axis=0)
        sd = np.where(sd > 0, sd, 1.0)
        Xs = (X - mu) / sd
    else:
        Xs = X
    ks = sorted(set(int(k) for k in k_range))
    assignments = {}
    skipped = []
    for k in ks:
        try:
            assignments[k] = kmeans_fit(Xs, k, seed=seed, restarts=restarts,
                                        max_passes=max_passes,
                                        algorithm=algorithm)
        except ValueError as exc:
            warnings.warn(f"k={k} skipped: {exc}")
            skipped.append(k)
    if len(assignments) < 2:
        raise ValueError("fewer than two k values could be fitted")
    table = compute_validity_indices(Xs, assignments)
    return assignments, table


def write_assignment(path, row_index, bank_id, year, assignment: ClusterAssignment):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row_index", "bank_id", "year", "cluster"])
        for i in range(assignment.n_obs):
            w.writerow([int(row_index[i]), bank_id[i], int(year[i]),
                        int(assignment.labels[i])])


def read_assignment(path):
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header != ["row_index", "bank_id", "year", "cluster"]:
            raise ValueError(f"unexpected assignment header in {path}")
        rows = list(r)
    row_index = np.array([int(x[0]) for x in rows], dtype=np.int64)
    labels = np.array([int(x[3]) for x in rows], dtype=np.int32)
    return row_index, labels


def write_votes(path, table: KVoteTable):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k"] + list(INDEX_NAMES))
        for k in table.ks:
            row = [k]
            for name in INDEX_NAMES:
                v = table.values[name].get(k)
                row.append("" if v is None else repr(float(v)))
            w.writerow(row)
        w.writerow(["vote"] + [table.votes[name] for name in INDEX_NAMES])
        w.writerow(["winner", table.winner] + [""] * (len(INDEX_NAMES) - 1))
