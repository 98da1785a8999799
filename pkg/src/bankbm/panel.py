"""Bank-year panel ingestion, validation filters, and size stratification.

A PanelDataset is a column store over numpy arrays, immutable after
construction. Observation order is the input file's data-row order, and
every dropped row lands in the rejection log with the rule it violated,
so parsed + rejected always equals the number of data rows seen.
"""

from dataclasses import dataclass, field
import csv
import hashlib
import io
import os
import warnings

import numpy as np

from .components import COMPONENTS, N_COMPONENTS, SIZE_LABELS

META_COLUMNS = ("bank_id", "year", "country", "total_assets")
CSV_COLUMNS = META_COLUMNS + COMPONENTS + ("profitability",)
NUMERIC_COLUMNS = ("year", "total_assets") + COMPONENTS + ("profitability",)


class PanelError(ValueError):
    """Unrecoverable ingestion/filter problem (missing column, empty panel)."""


@dataclass(frozen=True)
class PanelDataset:
    bank_id: np.ndarray
    year: np.ndarray
    country: np.ndarray
    total_assets: np.ndarray
    ratios: np.ndarray            # (n, 9) in canonical component order
    profitability: np.ndarray
    row_index: np.ndarray         # 0-based data-row index in the source file
    source_digest: str
    rejection_log: tuple = field(default_factory=tuple)

    def __post_init__(self):
        for arr in (self.bank_id, self.year, self.country, self.total_assets,
                    self.ratios, self.profitability, self.row_index):
            arr.setflags(write=False)

    @property
    def n_obs(self):
        return int(self.profitability.shape[0])

    def take(self, indices) -> "PanelDataset":
        """Row subset in the given index order; rejection log carried over."""
        idx = np.asarray(indices, dtype=np.int64)
        return PanelDataset(
            bank_id=self.bank_id[idx].copy(),
            year=self.year[idx].copy(),
            country=self.country[idx].copy(),
            total_assets=self.total_assets[idx].copy(),
            ratios=self.ratios[idx].copy(),
            profitability=self.profitability[idx].copy(),
            row_index=self.row_index[idx].copy(),
            source_digest=self.source_digest,
            rejection_log=self.rejection_log,
        )


def default_schema():
    """Canonical column name -> file column name (identity by default)."""
    return {name: name for name in CSV_COLUMNS}


def parse_panel(path, schema=None, delimiter=",", decimal=".") -> PanelDataset:
    """Read the panel CSV at `path`.

    `schema` maps canonical column names to the file's column names; omitted
    keys keep the canonical name. Rows whose numeric fields fail to parse go
    to the rejection log; structural problems (missing file, missing mapped
    column, no data rows) raise PanelError.
    """
    if not os.path.isfile(path):
        raise PanelError(f"input file not found: {path}")
    with open(path, "rb") as fh:
        raw = fh.read()
    digest = hashlib.sha256(raw).hexdigest()
    text = raw.decode("utf-8")
    return _parse_csv_text(text, schema=schema, delimiter=delimiter,
                           decimal=decimal, digest=digest,
                           origin=str(path))


def _parse_csv_text(text, schema=None, delimiter=",", decimal=".",
                    digest="", origin="<memory>") -> PanelDataset:
    mapping = default_schema()
    if schema:
        for key in schema:
            if key not in mapping:
                raise PanelError(f"unknown canonical column in schema: {key}")
        mapping.update(schema)

    reader = csv.reader(io.StringIO(text), delimiter=delimiter)
    try:
        header = next(reader)
    except StopIteration:
        raise PanelError(f"empty input file: {origin}") from None
    header = [h.strip() for h in header]
    pos = {}
    for canon in CSV_COLUMNS:
        name = mapping[canon]
        if name not in header:
            raise PanelError(
                f"missing column '{name}' (mapped from '{canon}') in {origin}")
        pos[canon] = header.index(name)

    bank_id, year, country, assets = [], [], [], []
    ratios, profit, row_index = [], [], []
    rejections = []
    ncols = len(header)

    for row_no, row in enumerate(reader):
        if len(row) != ncols:
            rejections.append((row_no, f"malformed row: {len(row)} fields, expected {ncols}"))
            continue
        bad = None
        vals = {}
        for canon in NUMERIC_COLUMNS:
            cell = row[pos[canon]].strip()
            if decimal != ".":
                cell = cell.replace(decimal, ".")
            try:
                vals[canon] = float(cell)
            except ValueError:
                bad = canon
                break
        if bad is not None:
            rejections.append((row_no, f"non-numeric: {bad}"))
            continue
        if vals["year"] != int(vals["year"]):
            rejections.append((row_no, "non-numeric: year"))
            continue
        bank_id.append(row[pos["bank_id"]].strip())
        country.append(row[pos["country"]].strip())
        year.append(int(vals["year"]))
        assets.append(vals["total_assets"])
        ratios.append([vals[c] for c in COMPONENTS])
        profit.append(vals["profitability"])
        row_index.append(row_no)

    n = len(profit)
    if n == 0 and not rejections:
        raise PanelError(f"no data rows in {origin}")

    return PanelDataset(
        bank_id=np.array(bank_id, dtype=object),
        year=np.array(year, dtype=np.int64),
        country=np.array(country, dtype=object),
        total_assets=np.array(assets, dtype=np.float64),
        ratios=np.array(ratios, dtype=np.float64).reshape(n, N_COMPONENTS),
        profitability=np.array(profit, dtype=np.float64),
        row_index=np.array(row_index, dtype=np.int64),
        source_digest=digest,
        rejection_log=tuple(rejections),
    )


@dataclass(frozen=True)
class FilterConfig:
    """Filter rules in percentile form; resolve() pins them to numbers."""
    ratio_bounds: bool = True
    require_finite: bool = True
    require_positive_assets: bool = True
    trim_profitability: bool = False
    trim_lower_pct: float = 1.0
    trim_upper_pct: float = 99.0
    winsorize: bool = False

    def resolve(self, data: PanelDataset) -> "ResolvedFilterRules":
        lo = hi = None
        if self.trim_profitability:
            if not 0.0 <= self.trim_lower_pct < self.trim_upper_pct <= 100.0:
                raise PanelError("trim percentiles must satisfy 0 <= lower < upper <= 100")
            finite = data.profitability[np.isfinite(data.profitability)]
            if finite.size == 0:
                raise PanelError("cannot resolve trim bounds: no finite profitability values")
            lo = float(np.percentile(finite, self.trim_lower_pct))
            hi = float(np.percentile(finite, self.trim_upper_pct))
        return ResolvedFilterRules(
            ratio_bounds=self.ratio_bounds,
            require_finite=self.require_finite,
            require_positive_assets=self.require_positive_assets,
            profit_lo=lo,
            profit_hi=hi,
            winsorize=self.winsorize,
        )


@dataclass(frozen=True)
class ResolvedFilterRules:
    """Filter rules with fixed numeric bounds; applying them is idempotent."""
    ratio_bounds: bool = True
    require_finite: bool = True
    require_positive_assets: bool = True
    profit_lo: float = None
    profit_hi: float = None
    winsorize: bool = False


def apply_filters(data: PanelDataset, rules=None) -> PanelDataset:
    """Drop (or winsorize) observations violating the rules; log each drop.

    A FilterConfig is resolved against `data` first; pass ResolvedFilterRules
    to reuse bounds pinned on another dataset (this is what makes repeated
    application a no-op).
    """
    if rules is None:
        rules = FilterConfig()
    if isinstance(rules, FilterConfig):
        rules = rules.resolve(data)

    n = data.n_obs
    keep = np.ones(n, dtype=bool)
    new_rejections = []
    profit = data.profitability.copy()

    for i in range(n):
        reason = None
        if rules.require_finite:
            if not np.isfinite(data.total_assets[i]):
                reason = "non-finite: total_assets"
            elif not np.isfinite(profit[i]):
                reason = "non-finite: profitability"
            else:
                for j, name in enumerate(COMPONENTS):
                    if not np.isfinite(data.ratios[i, j]):
                        reason = f"non-finite: {name}"
                        break
        if reason is None and rules.require_positive_assets:
            if not data.total_assets[i] > 0.0:
                reason = "non-positive: total_assets"
        if reason is None and rules.ratio_bounds:
            for j, name in enumerate(COMPONENTS):
                v = data.ratios[i, j]
                if v < 0.0 or v > 1.0:
                    reason = f"ratio out of [0,1]: {name}"
                    break
        if reason is None and rules.profit_lo is not None:
            if profit[i] < rules.profit_lo or profit[i] > rules.profit_hi:
                if rules.winsorize:
                    profit[i] = min(max(profit[i], rules.profit_lo), rules.profit_hi)
                else:
                    reason = "profitability outside trim bounds"
        if reason is not None:
            keep[i] = False
            new_rejections.append((int(data.row_index[i]), reason))

    if not keep.any():
        raise PanelError("all observations excluded by filters")

    idx = np.nonzero(keep)[0]
    return PanelDataset(
        bank_id=data.bank_id[idx].copy(),
        year=data.year[idx].copy(),
        country=data.country[idx].copy(),
        total_assets=data.total_assets[idx].copy(),
        ratios=data.ratios[idx].copy(),
        profitability=profit[idx],
        row_index=data.row_index[idx].copy(),
        source_digest=data.source_digest,
        rejection_log=data.rejection_log + tuple(new_rejections),
    )


@dataclass(frozen=True)
class SizeConfig:
    large_frac: float = 0.005      # share of aggregate assets at/above which a bank is Large
    small_frac: float = 0.00005    # share below which it is Small
    per_year: bool = True

    def __post_init__(self):
        if not (self.large_frac > self.small_frac > 0.0):
            raise PanelError("size thresholds must satisfy large_frac > small_frac > 0")


@dataclass(frozen=True)
class SizeGroup:
    label: str
    indices: np.ndarray  # positions into the filtered panel, ascending

    def __post_init__(self):
        self.indices.setflags(write=False)

    @property
    def n_obs(self):
        return int(self.indices.shape[0])


def stratify_by_size(data: PanelDataset, config: SizeConfig = None):
    """Split the panel into Large/Medium/Small by share of aggregate assets.

    The aggregate is computed per calendar year by default (pooled when
    config.per_year is False). Returns the groups in canonical label order;
    empty groups draw a warning and are returned empty rather than dropped.
    """
    if config is None:
        config = SizeConfig()
    n = data.n_obs
    agg = np.empty(n, dtype=np.float64)
    if config.per_year:
        for yr in np.unique(data.year):
            mask = data.year == yr
            agg[mask] = data.total_assets[mask].sum()
    else:
        agg[:] = data.total_assets.sum()

    share = data.total_assets / agg
    labels = np.where(share >= config.large_frac, "Large",
                      np.where(share < config.small_frac, "Small", "Medium"))

    groups = []
    for label in SIZE_LABELS:
        idx = np.nonzero(labels == label)[0].astype(np.int64)
        if idx.size == 0:
            warnings.warn(f"size group {label} is empty; downstream stages will skip it")
        groups.append(SizeGroup(label=label, indices=idx))
    return tuple(groups)


def size_labels(data: PanelDataset, config: SizeConfig = None) -> np.ndarray:
    """Per-observation size label array, same rule as stratify_by_size."""
    groups = stratify_by_size(data, config)
    out = np.empty(data.n_obs, dtype=object)
    for g in groups:
        out[g.indices] = g.label
    return out


def write_rejections(path, data: PanelDataset):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "reason"])
        for row_no, reason in data.rejection_log:
            w.writerow([row_no, reason])


def write_panel_csv(path, data: PanelDataset):
    """Serialize to the ingestion schema; floats via repr so a reparse
    reproduces the arrays bit for bit."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for i in range(data.n_obs):
            w.writerow([data.bank_id[i], int(data.year[i]), data.country[i],
                        repr(float(data.total_assets[i]))]
                       + [repr(float(v)) for v in data.ratios[i]]
                       + [repr(float(data.profitability[i]))])
