"""Synthetic bank panels with planted sizes, planted BM mixtures, and a
known component-to-profitability response.

Banks keep one planted BM and one planted size for all their years. Ratio
draws are truncated normals per component; profitability is a per-BM
linear response on the 9 ratios plus Gaussian noise. The generated rows
are serialized to ingestion-schema CSV text and handed to the panel
parser, so a generated dataset is bit-for-bit what a file load would
produce, with zero rejections by construction.
"""

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .components import COMPONENTS, N_COMPONENTS
from .panel import CSV_COLUMNS, _parse_csv_text
from .seeding import TAG_SYNTH, stream

SIZE_ASSET_LEVEL = {"Large": 1.0e6, "Medium": 1.0e4, "Small": 10.0}


@dataclass(frozen=True)
class PlantedBm:
    name: str
    weight: float                  # mixing weight among the size's banks
    ratio_means: tuple             # 9 means in [0, 1]
    ratio_sds: tuple               # 9 dispersions, >= 0
    response_intercept: float
    response_beta: tuple           # 9 linear coefficients on the ratios
    signal: frozenset = frozenset()  # ground-truth elevated components

    def validate(self):
        if len(self.ratio_means) != N_COMPONENTS or len(self.ratio_sds) != N_COMPONENTS:
            raise ValueError(f"{self.name}: ratio parameters must have 9 entries")
        if len(self.response_beta) != N_COMPONENTS:
            raise ValueError(f"{self.name}: response_beta must have 9 entries")
        if not all(0.0 <= m <= 1.0 for m in self.ratio_means):
            raise ValueError(f"{self.name}: ratio means must lie in [0, 1]")
        if not all(s >= 0.0 for s in self.ratio_sds):
            raise ValueError(f"{self.name}: ratio dispersions must be >= 0")
        if self.weight < 0.0:
            raise ValueError(f"{self.name}: negative mixing weight")
        unknown = set(self.signal) - set(COMPONENTS)
        if unknown:
            raise ValueError(f"{self.name}: unknown signal components {sorted(unknown)}")

    @property
    def mean_profitability(self):
        return self.response_intercept + float(
            np.dot(self.response_beta, self.ratio_means))


@dataclass(frozen=True)
class SynthSpec:
    n_banks: int
    years: tuple
    size_mix: tuple                # ((label, fraction), ...) over planted sizes
    bms: dict                      # size label -> tuple of PlantedBm
    noise_scale: float = 0.002
    seed: int = 0
    countries: tuple = ("C1", "C2", "C3", "C4", "C5")

    def validate(self):
        if self.n_banks < 1:
            raise ValueError("n_banks must be >= 1")
        if not self.years:
            raise ValueError("years must be non-empty")
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be >= 0")
        if not self.size_mix:
            raise ValueError("size_mix must be non-empty")
        labels = [s for s, _ in self.size_mix]
        if len(set(labels)) != len(labels):
            raise ValueError("duplicate size label in size_mix")
        fracs = np.array([f for _, f in self.size_mix], dtype=float)
        if (fracs < 0).any() or abs(fracs.sum() - 1.0) > 1e-9:
            raise ValueError("size_mix fractions must be >= 0 and sum to 1")
        for label, _ in self.size_mix:
            if label not in SIZE_ASSET_LEVEL:
                raise ValueError(f"unknown size label: {label}")
            bms = self.bms.get(label, ())
            if not bms:
                raise ValueError(f"no planted BMs for size {label}")
            w = sum(b.weight for b in bms)
            if abs(w - 1.0) > 1e-9:
                raise ValueError(f"{label}: BM weights sum to {w}, expected 1")
            for b in bms:
                b.validate()


@dataclass(frozen=True)
class GroundTruth:
    bank_id: np.ndarray
    year: np.ndarray
    size: np.ndarray               # planted size label per observation
    bm: np.ndarray                 # planted BM name per observation

    def __post_init__(self):
        for a in (self.bank_id, self.year, self.size, self.bm):
            a.setflags(write=False)

    @property
    def n_obs(self):
        return self.bank_id.shape[0]


def _truncated_normal(rng, mean, sd, size):
    """Normal(mean, sd) resampled until inside [0, 1]."""
    if sd == 0.0:
        return np.full(size, float(mean))
    out = rng.normal(mean, sd, size=size)
    bad = (out < 0.0) | (out > 1.0)
    while bad.any():
        out[bad] = rng.normal(mean, sd, size=int(bad.sum()))
        bad = (out < 0.0) | (out > 1.0)
    return out


def _allocate(n, fractions):
    """Largest-remainder split of n into len(fractions) integer counts."""
    raw = np.asarray(fractions, dtype=float) * n
    counts = np.floor(raw).astype(int)
    order = np.argsort(-(raw - counts), kind="stable")
    for i in range(n - counts.sum()):
        counts[order[i % len(counts)]] += 1
    return counts


def generate_panel(spec: SynthSpec, seed=None):
    """Draw a panel from a SynthSpec; returns (PanelDataset, GroundTruth)."""
    spec.validate()
    seed = spec.seed if seed is None else int(seed)

    size_labels = [s for s, _ in spec.size_mix]
    bank_sizes = np.repeat(size_labels,
                           _allocate(spec.n_banks, [f for _, f in spec.size_mix]))
    assign_rng = stream(seed, TAG_SYNTH, 1)
    asset_rng = stream(seed, TAG_SYNTH, 2)
    ratio_rng = stream(seed, TAG_SYNTH, 3)
    noise_rng = stream(seed, TAG_SYNTH, 4)

    bank_bm = np.empty(spec.n_banks, dtype=object)
    for label in size_labels:
        rows = np.nonzero(bank_sizes == label)[0]
        bms = spec.bms[label]
        w = np.array([b.weight for b in bms], dtype=float)
        picks = assign_rng.choice(len(bms), size=rows.size, p=w / w.sum())
        for r, p in zip(rows, picks):
            bank_bm[r] = bms[int(p)]

    years = [int(y) for y in spec.years]
    n_obs = spec.n_banks * len(years)
    base_assets = np.array([
        SIZE_ASSET_LEVEL[s] for s in bank_sizes
    ]) * np.exp(asset_rng.normal(0.0, 0.10, size=spec.n_banks))

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    gt_bank, gt_year, gt_size, gt_bm = [], [], [], []
    width = max(4, len(str(spec.n_banks)))
    for b in range(spec.n_banks):
        bm = bank_bm[b]
        bank_id = f"B{b + 1:0{width}d}"
        country = spec.countries[b % len(spec.countries)]
        ratios = np.column_stack([
            _truncated_normal(ratio_rng, bm.ratio_means[j], bm.ratio_sds[j],
                              len(years))
            for j in range(N_COMPONENTS)])
        beta = np.asarray(bm.response_beta, dtype=float)
        profit = (bm.response_intercept + ratios @ beta
                  + noise_rng.normal(0.0, spec.noise_scale, size=len(years)))
        year_assets = base_assets[b] * np.exp(
            asset_rng.normal(0.0, 0.02, size=len(years)))
        for t, y in enumerate(years):
            writer.writerow([bank_id, y, country, repr(float(year_assets[t]))]
                            + [repr(float(v)) for v in ratios[t]]
                            + [repr(float(profit[t]))])
            gt_bank.append(bank_id)
            gt_year.append(y)
            gt_size.append(str(bank_sizes[b]))
            gt_bm.append(bm.name)

    data = _parse_csv_text(buf.getvalue(), schema=None, delimiter=",",
                           decimal=".", digest=f"synth-seed-{seed}",
                           origin="<synthetic>")
    assert data.n_obs == n_obs and not data.rejection_log, \
        "synthetic panel must parse cleanly"
    gt = GroundTruth(bank_id=np.array(gt_bank, dtype=object),
                     year=np.array(gt_year, dtype=np.int64),
                     size=np.array(gt_size, dtype=object),
                     bm=np.array(gt_bm, dtype=object))
    return data, gt


GROUND_TRUTH_HEADER = ("bank_id", "year", "size", "bm")


def write_ground_truth(path, gt: GroundTruth):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(GROUND_TRUTH_HEADER)
        for i in range(gt.n_obs):
            w.writerow([gt.bank_id[i], int(gt.year[i]), gt.size[i], gt.bm[i]])


def read_ground_truth(path):
    bank, year, size, bm = [], [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != GROUND_TRUTH_HEADER:
            raise ValueError(f"unexpected ground truth header: {header}")
        for row in reader:
            bank.append(row[0])
            year.append(int(row[1]))
            size.append(row[2])
            bm.append(row[3])
    return GroundTruth(bank_id=np.array(bank, dtype=object),
                       year=np.array(year, dtype=np.int64),
                       size=np.array(size, dtype=object),
                       bm=np.array(bm, dtype=object))


# Canonical planted mixture: three BMs per size with disjoint elevated
# component sets and strictly ordered mean profitabilities.

RETAIL_SET = ("customer_loans", "customer_deposits", "equity")
INVESTMENT_SET = ("derivative_exposures", "securities",
                  "short_term_funding", "long_term_funding")
INTERBANK_SET = ("interbank_lending", "interbank_borrowing")

THREE_BM_BETA = {
    "customer_loans": 0.10, "customer_deposits": 0.10, "equity": 0.10,
    "derivative_exposures": 0.02, "securities": 0.02,
    "short_term_funding": 0.02, "long_term_funding": 0.02,
    "interbank_lending": -0.04, "interbank_borrowing": -0.04,
}


def _planted(name, weight, elevated, baseline=0.25, delta=0.30, sd=0.05,
             intercept=0.01):
    means = tuple(baseline + delta * (c in elevated) for c in COMPONENTS)
    beta = tuple(THREE_BM_BETA[c] for c in COMPONENTS)
    return PlantedBm(name=name, weight=weight, ratio_means=means,
                     ratio_sds=(sd,) * N_COMPONENTS,
                     response_intercept=intercept, response_beta=beta,
                     signal=frozenset(elevated))


def three_bm_spec(n_banks=150, years=tuple(range(2008, 2014)), seed=0,
                  noise_scale=0.002):
    """Three planted BMs in every size: a retail-leaning high performer, an
    investment-leaning middle, and an interbank-heavy low performer."""
    bms = (
        _planted("alpha", 0.30, RETAIL_SET),
        _planted("beta", 0.45, INVESTMENT_SET),
        _planted("gamma", 0.25, INTERBANK_SET),
    )
    assert (bms[0].mean_profitability > bms[1].mean_profitability
            > bms[2].mean_profitability)
    return SynthSpec(
        n_banks=n_banks, years=tuple(int(y) for y in years),
        size_mix=(("Large", 0.15), ("Medium", 0.35), ("Small", 0.50)),
        bms={"Large": bms, "Medium": bms, "Small": bms},
        noise_scale=noise_scale, seed=seed)


def single_bm_spec(n_banks=20, years=(2010, 2011), seed=0,
                   profitability=0.05):
    """One BM, zero dispersion and zero noise: constant response."""
    bm = PlantedBm(name="solo", weight=1.0,
                   ratio_means=(0.25,) * N_COMPONENTS,
                   ratio_sds=(0.0,) * N_COMPONENTS,
                   response_intercept=profitability,
                   response_beta=(0.0,) * N_COMPONENTS)
    # single-size mixes classify everyone Large under the relative-size
    # rule (each bank holds 1/n of the aggregate), so plant Large
    return SynthSpec(n_banks=n_banks, years=tuple(int(y) for y in years),
                     size_mix=(("Large", 1.0),), bms={"Large": (bm,)},
                     noise_scale=0.0, seed=seed)
