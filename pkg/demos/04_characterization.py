#!/usr/bin/env python3
"""
Turn clusters into named business models: order them by mean total
contribution, test which balance-sheet components distinguish each one,
and match the resulting component sets against the standard taxonomy.

A component characterizes a BM when its mean ratio inside the BM exceeds
the mean outside AND a two-sided Mann-Whitney test rejects equality at
the 10% level.

Usage:
    python3 demos/04_characterization.py
"""
import warnings

from bankbm.analysis import (characterize_bm, match_taxonomy, order_bms,
                             profile_clusters)
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
assignments, table = cluster_scan(cm.contributions, range(2, 9),
                                  seed=99, restarts=25)
k = select_k_majority(table)
labels = assignments[k].labels

# BM1 gets the highest mean total contribution, BM2 the next, and so on
profiles = order_bms(profile_clusters(cm, labels, "Small"))
print("business models (ordered by mean total contribution):")
for p in profiles:
    print(f"  {p.name}: {p.obs_count} obs, "
          f"total contribution {p.total_contribution:+.5f}")

with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    reports = characterize_bm(sub.ratios, profiles)

for report in reports:
    print(f"\n{report.name} ({report.obs_count} obs vs "
          f"{report.complement_count} outside):")
    for row in report.rows:
        flag = "  <- characterizes" if row.characterizing else ""
        print(f"  {row.component:<22} in {row.mean_in:.4f}  "
              f"out {row.mean_out:.4f}  p {row.p_value:.2e} "
              f"{row.stars:<3}{flag}")
    t = report.taxonomy
    print(f"  taxonomy: {t.label} (nearest {t.nearest}, distance {t.distance})")

# the planted signal sets, for comparison
print("\nplanted component sets:")
for bms in spec.bms.values():
    for bm in bms:
        print(f"  {bm.name:<6} {sorted(bm.signal)}")
    break

# taxonomy matching is usable standalone too
print("\nstandalone taxonomy lookups:")
for char_set in ({"customer_loans", "customer_deposits", "equity"},
                 {"derivative_exposures", "securities"},
                 {"interbank_lending", "interbank_borrowing"}):
    m = match_taxonomy(frozenset(char_set))
    print(f"  {sorted(char_set)} -> {m.label} "
          f"(nearest {m.nearest}, distance {m.distance})")
