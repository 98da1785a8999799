#!/usr/bin/env python3
"""
Cluster the contribution vectors and let the validity indices vote on
the number of business models.

Five indices are computed for every candidate k (Calinski-Harabasz,
silhouette, Davies-Bouldin, Dunn, Hartigan). Each casts one vote for
its preferred k; the majority wins, ties go to the smallest k.

Usage:
    python3 demos/03_cluster_selection.py
"""
import numpy as np

from bankbm.cluster import cluster_scan, select_k_majority
from bankbm.forest import ForestParams, fit_forest
from bankbm.interpret import contribution_matrix
from bankbm.panel import stratify_by_size
from bankbm.synth import generate_panel, three_bm_spec

spec = three_bm_spec(n_banks=200, seed=3)
data, truth = generate_panel(spec)
small = [g for g in stratify_by_size(data) if g.label == "Small"][0]
sub = data.take(small.indices)

forest = fit_forest(sub, params=ForestParams(n_trees=200, mtry=3, min_leaf=10),
                    seed=17)
cm = contribution_matrix(forest, sub)
print(f"clustering {cm.n_obs} contribution vectors "
      f"({cm.contributions.shape[1]} components)")

assignments, table = cluster_scan(cm.contributions, range(2, 9),
                                  seed=99, restarts=25)

print("\nvalidity index values by k (each index's vote marked *):")
names = list(table.values)
print("  k  " + "".join(f"{name:>19}" for name in names))
for k in table.ks:
    cells = []
    for name in names:
        mark = "*" if table.votes[name] == k else " "
        value = table.values[name].get(k)
        text = f"{value:>18.4f}" if value is not None else f"{'-':>18}"
        cells.append(text + mark)
    print(f"  {k}  " + "".join(cells))

# hartigan H(k) compares inertia at k and k+1, so the largest scanned k
# has no value; the rule votes for the smallest k with H < 10 and falls
# back to the largest k when none qualifies
k = select_k_majority(table)
print(f"\nmajority vote: k = {k}")

# compare the winning assignment to the planted business models
labels = assignments[k].labels
planted = truth.bm[sub.row_index]
print("\ncluster composition (rows: cluster, columns: planted BM):")
names = ("alpha", "beta", "gamma")
print("        " + "".join(f"{n:>8}" for n in names))
for c in range(k):
    counts = [int(np.sum((labels == c) & (planted == n))) for n in names]
    print(f"  c{c}     " + "".join(f"{v:>8}" for v in counts))
print(f"\nfinal inertia: {assignments[k].inertia:.6g} "
      f"(best of {assignments[k].restarts} restarts)")
