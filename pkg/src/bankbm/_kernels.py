"""Compiled inner loops: CART growth, forest path walking, Hartigan-Wong passes.

All kernels are deterministic functions of their inputs. Randomness enters
only through precomputed bootstrap index arrays and raw integer buffers
drawn from seeded numpy generators, never from state inside the kernels,
so results are identical for any thread count.
"""

import numpy as np
from numba import njit, prange

LEAF = -1


@njit(cache=True, nogil=True)
def grow_tree(X, y, boot, min_leaf, max_depth, mtry, rand_buf,
              feat, thr, left, right, mean, cnt):
    """Grow one variance-reduction CART on the rows listed in `boot`.

    Nodes are written into the caller-provided slabs (capacity 2*len(boot)+1).
    Split search: among `mtry` sampled features (scanned in ascending index
    order), candidate thresholds are midpoints between consecutive distinct
    sorted values; the first strictly-best (feature, threshold) wins, which
    breaks exact ties toward the lower feature index and lower threshold.
    Returns the number of nodes written.
    """
    n = boot.shape[0]
    p = X.shape[1]
    rows = boot.copy()
    tmp = np.empty(n, np.int32)
    pool = np.empty(p, np.int64)
    chosen = np.empty(mtry, np.int64)

    cap = feat.shape[0]
    stack_node = np.empty(cap, np.int64)
    stack_lo = np.empty(cap, np.int64)
    stack_hi = np.empty(cap, np.int64)
    stack_depth = np.empty(cap, np.int64)

    sp = 0
    stack_node[sp] = 0
    stack_lo[sp] = 0
    stack_hi[sp] = n
    stack_depth[sp] = 0
    sp += 1
    n_nodes = 1
    cursor = 0  # consumption offset into rand_buf

    while sp > 0:
        sp -= 1
        node = stack_node[sp]
        lo = stack_lo[sp]
        hi = stack_hi[sp]
        depth = stack_depth[sp]
        m = hi - lo

        sy = 0.0
        sy2 = 0.0
        ymin = y[rows[lo]]
        ymax = ymin
        for i in range(lo, hi):
            v = y[rows[i]]
            sy += v
            sy2 += v * v
            if v < ymin:
                ymin = v
            if v > ymax:
                ymax = v
        mean[node] = sy / m
        cnt[node] = m
        feat[node] = LEAF
        thr[node] = 0.0
        left[node] = -1
        right[node] = -1

        if m < 2 * min_leaf or depth >= max_depth or ymin == ymax:
            continue
        parent_sse = sy2 - sy * sy / m
        if parent_sse <= 0.0:
            continue

        # sample mtry feature indices without replacement, then sort ascending
        if mtry >= p:
            for j in range(p):
                chosen[j] = j
            n_chosen = p
        else:
            for j in range(p):
                pool[j] = j
            for t in range(mtry):
                j = t + np.int64(rand_buf[cursor + t] % np.uint64(p - t))
                pool[t], pool[j] = pool[j], pool[t]
                chosen[t] = pool[t]
            cursor += mtry
            n_chosen = mtry
            # insertion sort (mtry <= p, tiny)
            for a in range(1, n_chosen):
                key = chosen[a]
                b = a - 1
                while b >= 0 and chosen[b] > key:
                    chosen[b + 1] = chosen[b]
                    b -= 1
                chosen[b + 1] = key

        best_sse = np.inf
        best_f = -1
        best_thr = 0.0
        vals = np.empty(m, np.float64)
        for c in range(n_chosen):
            f = chosen[c]
            for i in range(m):
                vals[i] = X[rows[lo + i], f]
            order = np.argsort(vals, kind="mergesort")
            sl = 0.0
            sl2 = 0.0
            for i in range(m - 1):
                yi = y[rows[lo + order[i]]]
                sl += yi
                sl2 += yi * yi
                vi = vals[order[i]]
                vnext = vals[order[i + 1]]
                if vnext == vi:
                    continue
                nl = i + 1
                nr = m - nl
                if nl < min_leaf or nr < min_leaf:
                    continue
                sr = sy - sl
                sr2 = sy2 - sl2
                ssel = sl2 - sl * sl / nl
                if ssel < 0.0:
                    ssel = 0.0
                sser = sr2 - sr * sr / nr
                if sser < 0.0:
                    sser = 0.0
                tot = ssel + sser
                if tot < best_sse:
                    t = 0.5 * (vi + vnext)
                    if t == vnext:  # midpoint rounded up to the right value
                        t = vi
                    best_sse = tot
                    best_f = f
                    best_thr = t

        if best_f < 0 or best_sse >= parent_sse:
            continue

        # stable partition of rows[lo:hi] on x <= threshold
        nl = 0
        for i in range(lo, hi):
            if X[rows[i], best_f] <= best_thr:
                tmp[nl] = rows[i]
                nl += 1
        nr = nl
        for i in range(lo, hi):
            if not (X[rows[i], best_f] <= best_thr):
                tmp[nr] = rows[i]
                nr += 1
        for i in range(m):
            rows[lo + i] = tmp[i]

        lid = n_nodes
        rid = n_nodes + 1
        n_nodes += 2
        feat[node] = best_f
        thr[node] = best_thr
        left[node] = lid
        right[node] = rid

        stack_node[sp] = rid
        stack_lo[sp] = lo + nl
        stack_hi[sp] = hi
        stack_depth[sp] = depth + 1
        sp += 1
        stack_node[sp] = lid
        stack_lo[sp] = lo
        stack_hi[sp] = lo + nl
        stack_depth[sp] = depth + 1
        sp += 1

    return n_nodes


@njit(cache=True, parallel=True)
def grow_forest_chunk(X, y, boots, min_leaf, max_depth, mtry, rand_bufs,
                      feat, thr, left, right, mean, cnt, n_nodes):
    """Grow a chunk of trees in parallel; tree t writes only into slab t."""
    for t in prange(boots.shape[0]):
        n_nodes[t] = grow_tree(X, y, boots[t], min_leaf, max_depth, mtry,
                               rand_bufs[t], feat[t], thr[t], left[t],
                               right[t], mean[t], cnt[t])


@njit(cache=True, parallel=True)
def forest_predict(Xq, offsets, feat, thr, left, right, mean, mask, out):
    """Mean leaf value over the trees enabled in `mask` (n_obs x n_trees).

    Trees live in flat arrays; tree t occupies offsets[t]:offsets[t+1] and
    its child indices are local to that slice.
    """
    n = Xq.shape[0]
    T = offsets.shape[0] - 1
    for i in prange(n):
        acc = 0.0
        used = 0
        for t in range(T):
            if mask[i, t] == 0:
                continue
            base = offsets[t]
            node = 0
            while feat[base + node] != LEAF:
                if Xq[i, feat[base + node]] <= thr[base + node]:
                    node = left[base + node]
                else:
                    node = right[base + node]
            acc += mean[base + node]
            used += 1
        if used > 0:
            out[i] = acc / used
        else:
            out[i] = np.nan


@njit(cache=True, parallel=True)
def forest_decompose(Xq, offsets, feat, thr, left, right, mean, mask,
                     bias, contrib, pred, tree_resid, n_used):
    """Path-walk decomposition averaged over the trees enabled in `mask`.

    Per tree, each step from a node to the chosen child adds the child/parent
    mean difference to the splitting feature's contribution; the tree bias is
    the root mean. `tree_resid[i]` records the worst per-tree additivity
    residual seen for observation i. Trees accumulate in index order so the
    result does not depend on how observations are scheduled across threads.
    """
    n = Xq.shape[0]
    T = offsets.shape[0] - 1
    p = Xq.shape[1]
    for i in prange(n):
        bacc = 0.0
        pacc = 0.0
        cacc = np.zeros(p, np.float64)
        local = np.empty(p, np.float64)
        worst = 0.0
        used = 0
        for t in range(T):
            if mask[i, t] == 0:
                continue
            for j in range(p):
                local[j] = 0.0
            base = offsets[t]
            node = 0
            b = mean[base]
            while feat[base + node] != LEAF:
                f = feat[base + node]
                if Xq[i, f] <= thr[base + node]:
                    nxt = left[base + node]
                else:
                    nxt = right[base + node]
                local[f] += mean[base + nxt] - mean[base + node]
                node = nxt
            leaf_mean = mean[base + node]
            s = b
            for j in range(p):
                s += local[j]
                cacc[j] += local[j]
            r = abs(s - leaf_mean)
            if r > worst:
                worst = r
            bacc += b
            pacc += leaf_mean
            used += 1
        n_used[i] = used
        tree_resid[i] = worst
        if used > 0:
            bias[i] = bacc / used
            pred[i] = pacc / used
            for j in range(p):
                contrib[i, j] = cacc[j] / used
        else:
            bias[i] = np.nan
            pred[i] = np.nan
            for j in range(p):
                contrib[i, j] = np.nan


@njit(cache=True)
def _sqdist(X, i, centers, c):
    d = 0.0
    for j in range(X.shape[1]):
        diff = X[i, j] - centers[c, j]
        d += diff * diff
    return d


@njit(cache=True)
def _total_inertia(X, labels, centers):
    tot = 0.0
    for i in range(X.shape[0]):
        tot += _sqdist(X, i, centers, labels[i])
    return tot


@njit(cache=True)
def _recompute_centers(X, labels, k, centers, sizes):
    d = X.shape[1]
    for c in range(k):
        sizes[c] = 0
        for j in range(d):
            centers[c, j] = 0.0
    for i in range(X.shape[0]):
        c = labels[i]
        sizes[c] += 1
        for j in range(d):
            centers[c, j] += X[i, j]
    for c in range(k):
        if sizes[c] > 0:
            for j in range(d):
                centers[c, j] /= sizes[c]


@njit(cache=True, nogil=True)
def hartigan_wong(X, centers0, max_passes, labels, centers, trace):
    """Hartigan-Wong reassignment passes from the given initial centers.

    Each pass sweeps points in index order, moving a point when the
    size-corrected transfer criterion strictly lowers the within-cluster
    SSE, with centroids updated incrementally after every move and
    recomputed exactly at the end of each pass. `trace` receives the total
    inertia after initial assignment and after every pass. Returns the
    number of logged trace entries.
    """
    n, d = X.shape
    k = centers0.shape[0]
    sizes = np.zeros(k, np.int64)

    # initial assignment to the nearest seed center (ties to the lower id)
    for i in range(n):
        best = 0
        bd = _sqdist(X, i, centers0, 0)
        for c in range(1, k):
            dc = _sqdist(X, i, centers0, c)
            if dc < bd:
                bd = dc
                best = c
        labels[i] = best

    _recompute_centers(X, labels, k, centers, sizes)

    # repopulate any empty cluster with the point farthest from its centroid
    for c in range(k):
        if sizes[c] == 0:
            worst_i = -1
            worst_d = -1.0
            for i in range(n):
                if sizes[labels[i]] > 1:
                    di = _sqdist(X, i, centers, labels[i])
                    if di > worst_d:
                        worst_d = di
                        worst_i = i
            old = labels[worst_i]
            labels[worst_i] = c
            sizes[old] -= 1
            sizes[c] += 1
            _recompute_centers(X, labels, k, centers, sizes)

    n_trace = 0
    trace[n_trace] = _total_inertia(X, labels, centers)
    n_trace += 1

    for _ in range(max_passes):
        moved = 0
        for i in range(n):
            c1 = labels[i]
            s1 = sizes[c1]
            if s1 <= 1:
                continue
            remove_cost = _sqdist(X, i, centers, c1) * s1 / (s1 - 1.0)
            best_c = -1
            best_cost = remove_cost
            for c2 in range(k):
                if c2 == c1:
                    continue
                s2 = sizes[c2]
                add_cost = _sqdist(X, i, centers, c2) * s2 / (s2 + 1.0)
                if add_cost < best_cost:
                    best_cost = add_cost
                    best_c = c2
            if best_c >= 0:
                s2 = sizes[best_c]
                for j in range(d):
                    centers[c1, j] = (centers[c1, j] * s1 - X[i, j]) / (s1 - 1.0)
                    centers[best_c, j] = (centers[best_c, j] * s2 + X[i, j]) / (s2 + 1.0)
                sizes[c1] -= 1
                sizes[best_c] += 1
                labels[i] = best_c
                moved += 1
        _recompute_centers(X, labels, k, centers, sizes)
        trace[n_trace] = _total_inertia(X, labels, centers)
        n_trace += 1
        if moved == 0:
            break
    return n_trace


@njit(cache=True, nogil=True)
def pairwise_cluster_stats(X, labels, k, sum_dist, min_inter, max_diam):
    """One O(n^2) sweep collecting what silhouette and Dunn need.

    sum_dist[i, c] accumulates Euclidean distances from point i to every
    member of cluster c; min_inter[a, b] the smallest between-cluster pair
    distance; max_diam[c] the largest within-cluster pair distance.
    """
    n, d = X.shape
    for a in range(k):
        max_diam[a] = 0.0
        for b in range(k):
            min_inter[a, b] = np.inf
    for i in range(n):
        li = labels[i]
        for j in range(i + 1, n):
            lj = labels[j]
            dist = 0.0
            for t in range(d):
                diff = X[i, t] - X[j, t]
                dist += diff * diff
            dist = np.sqrt(dist)
            sum_dist[i, lj] += dist
            sum_dist[j, li] += dist
            if li == lj:
                if dist > max_diam[li]:
                    max_diam[li] = dist
            else:
                if dist < min_inter[li, lj]:
                    min_inter[li, lj] = dist
                    min_inter[lj, li] = dist
