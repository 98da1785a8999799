#!/usr/bin/env python3
"""
Panel ingestion walkthrough: parse a bank-year CSV, filter it, and
stratify the survivors into the three relative size groups.

Usage:
    python3 demos/01_panel_ingestion.py
"""
import os
import tempfile

import numpy as np

from bankbm.panel import (FilterConfig, SizeConfig, apply_filters,
                          parse_panel, size_labels, stratify_by_size,
                          write_panel_csv, write_rejections)
from bankbm.synth import generate_panel, three_bm_spec

out_dir = tempfile.mkdtemp(prefix="bankbm_demo1_")

# start from a synthetic panel so the demo is self-contained
spec = three_bm_spec(n_banks=80, seed=42)
data, truth = generate_panel(spec)
path = os.path.join(out_dir, "panel.csv")
write_panel_csv(path, data)
print(f"wrote {data.n_obs} bank-year rows to {path}")

# corrupt a few rows to show the rejection log: a negative ratio,
# a non-numeric profitability, and a zero-asset bank
with open(path) as fh:
    lines = fh.read().splitlines()
header = lines[0].split(",")
row = lines[1].split(",")
row[header.index("customer_loans")] = "-0.2"
lines.append(",".join(row))
row2 = lines[2].split(",")
row2[header.index("profitability")] = "n/a"
lines.append(",".join(row2))
row3 = lines[3].split(",")
row3[header.index("total_assets")] = "0"
lines.append(",".join(row3))
with open(path, "w") as fh:
    fh.write("\n".join(lines) + "\n")

raw = parse_panel(path)
print(f"\nparsed {raw.n_obs} rows "
      f"({len(raw.rejection_log)} rejected at parse time)")

clean = apply_filters(raw, FilterConfig())
dropped = list(clean.rejection_log)[len(raw.rejection_log):]
print(f"filters kept {clean.n_obs} rows, rejected {len(dropped)}:")
for row, reason in dropped[-3:]:
    print(f"  row {row}: {reason}")
rej_path = os.path.join(out_dir, "rejections.csv")
write_rejections(rej_path, clean)
print(f"rejection log -> {rej_path}")

# relative size groups: top 0.5% of aggregate assets per year is Large,
# everything below 0.005% is Small, the rest Medium
groups = stratify_by_size(clean, SizeConfig())
print("\nsize groups:")
for g in groups:
    share = g.n_obs / clean.n_obs
    print(f"  {g.label:<6} {g.n_obs:>5} obs ({share:5.1%})")

labels = size_labels(clean)
assert sum(g.n_obs for g in groups) == clean.n_obs
assert set(np.unique(labels)) <= {"Large", "Medium", "Small"}

# the synthetic generator plants asset levels far enough apart that the
# relative thresholds recover the planted sizes exactly
planted = truth.size[clean.row_index]
print(f"\nplanted size recovered on {np.mean(planted == labels):.1%} of rows")
