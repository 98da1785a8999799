"""Business-model profiles, characterization, taxonomy, and report rendering.

A BM is a cluster in contribution space. Profiles average member
contributions per component (their sum is the BM's total contribution,
the ranking score); characterization compares RAW portfolio ratios of a
BM against its same-size complement with the Mann-Whitney test. The two
stages deliberately consume different matrices: clustering/means run on
contributions, characterization on ratios.
"""

import csv
import os
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .components import COMPONENTS, N_COMPONENTS, SIZE_LETTER
from .stats import mann_whitney, significance_stars

ALPHA = 0.10

TAXONOMY = (
    ("retail", frozenset({"customer_loans", "customer_deposits", "equity"})),
    ("retail diversified", frozenset({"customer_loans", "customer_deposits",
                                      "equity", "short_term_funding",
                                      "long_term_funding"})),
    ("investment", frozenset({"derivative_exposures", "securities",
                              "short_term_funding", "long_term_funding"})),
    ("wholesale", frozenset({"derivative_exposures", "securities",
                             "short_term_funding", "long_term_funding",
                             "interbank_lending", "interbank_borrowing"})),
)
NON_STANDARD = "non-standard"
DEFAULT_TAXONOMY_THRESHOLD = 2


@dataclass(frozen=True)
class BmProfile:
    size: str                      # Large | Medium | Small
    cluster_id: int                # original cluster label
    lam: int                       # rank, 1 = best; 0 before order_bms
    members: np.ndarray            # positions into the size group's rows
    mean_contributions: np.ndarray # (9,)
    total_contribution: float
    obs_count: int

    def __post_init__(self):
        self.members.setflags(write=False)
        self.mean_contributions.setflags(write=False)

    @property
    def name(self):
        letter = SIZE_LETTER.get(self.size, self.size)
        return f"BM{self.lam}-{letter}" if self.lam else f"cluster{self.cluster_id}-{letter}"


@dataclass(frozen=True)
class ComponentStats:
    component: str
    mean_in: float
    mean_out: float
    p_value: float        # None when built from precomputed star levels
    stars: str
    characterizing: bool


@dataclass(frozen=True)
class TaxonomyMatch:
    label: str            # nearest profile, or "non-standard" past the threshold
    nearest: str
    distance: int


@dataclass(frozen=True)
class CharacterizationReport:
    name: str                      # BM name, or size label for size comparisons
    size: str
    obs_count: int
    complement_count: int
    rows: tuple                    # ComponentStats in canonical component order
    taxonomy: TaxonomyMatch

    @property
    def characterizing_set(self):
        return frozenset(r.component for r in self.rows if r.characterizing)


def profile_clusters(contribs, assignment, size: str):
    """One unranked profile per cluster; means over members, total = their sum."""
    from .interpret import ContributionMatrix
    M = contribs.contributions if isinstance(contribs, ContributionMatrix) else \
        np.asarray(contribs, dtype=np.float64)
    labels = assignment.labels if hasattr(assignment, "labels") else \
        np.asarray(assignment)
    if M.shape[0] != labels.shape[0]:
        raise ValueError("assignment does not cover the contribution rows")
    profiles = []
    for c in sorted(np.unique(labels).tolist()):
        members = np.nonzero(labels == c)[0].astype(np.int64)
        assert members.size > 0, "empty cluster reached profiling"
        means = M[members].mean(axis=0)
        profiles.append(BmProfile(size=size, cluster_id=int(c), lam=0,
                                  members=members,
                                  mean_contributions=means,
                                  total_contribution=float(means.sum()),
                                  obs_count=int(members.size)))
    return profiles


def order_bms(profiles):
    """Descending by total contribution; lambda = 1..n. Ties fall to the
    profile with more members, then the lower original cluster id."""
    ranked = sorted(profiles, key=lambda p: (-p.total_contribution,
                                             -p.obs_count, p.cluster_id))
    return [replace(p, lam=i + 1) for i, p in enumerate(ranked)]


def is_characterizing(mean_in, mean_out, p=None, significant=None,
                      alpha=ALPHA) -> bool:
    """Condition 1: strictly larger mean. Condition 2: distributions differ
    at the alpha level (p <= alpha, or a precomputed significance flag)."""
    if significant is None:
        if p is None:
            raise ValueError("need p or significant")
        significant = p <= alpha
    return bool(mean_in > mean_out) and bool(significant)


def match_taxonomy(char_set, threshold: int = DEFAULT_TAXONOMY_THRESHOLD
                   ) -> TaxonomyMatch:
    """Nearest canonical profile by symmetric-difference cardinality;
    ties keep the earlier profile in canonical order."""
    char_set = frozenset(char_set)
    unknown = char_set - set(COMPONENTS)
    if unknown:
        raise ValueError(f"unknown components: {sorted(unknown)}")
    best_label, best_d = None, None
    for label, profile in TAXONOMY:
        d = len(char_set ^ profile)
        if best_d is None or d < best_d:
            best_label, best_d = label, d
    label = best_label if best_d <= threshold else NON_STANDARD
    return TaxonomyMatch(label=label, nearest=best_label, distance=best_d)


def _component_report(name, size, in_rows, out_rows,
                      taxonomy_threshold, alpha) -> CharacterizationReport:
    rows = []
    for j, comp in enumerate(COMPONENTS):
        a = in_rows[:, j]
        b = out_rows[:, j]
        mean_in = float(a.mean())
        mean_out = float(b.mean())
        res = mann_whitney(a, b)
        stars = significance_stars(res.p_value)
        rows.append(ComponentStats(
            component=comp, mean_in=mean_in, mean_out=mean_out,
            p_value=res.p_value, stars=stars,
            characterizing=is_characterizing(mean_in, mean_out,
                                             p=res.p_value, alpha=alpha)))
    char_set = frozenset(r.component for r in rows if r.characterizing)
    return CharacterizationReport(
        name=name, size=size, obs_count=in_rows.shape[0],
        complement_count=out_rows.shape[0], rows=tuple(rows),
        taxonomy=match_taxonomy(char_set, taxonomy_threshold))


def characterize_bm(raw, profiles,
                    taxonomy_threshold: int = DEFAULT_TAXONOMY_THRESHOLD,
                    alpha: float = ALPHA):
    """Per-BM component stats against the same-size complement.

    `raw` holds the group's raw portfolio ratios, row-aligned with the
    member indices stored in the profiles.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if len(profiles) < 2:
        warnings.warn("single-cluster size: complement empty, characterization skipped")
        return []
    n = raw.shape[0]
    reports = []
    for p in profiles:
        mask = np.zeros(n, dtype=bool)
        mask[p.members] = True
        reports.append(_component_report(p.name, p.size, raw[mask], raw[~mask],
                                         taxonomy_threshold, alpha))
    return reports


def compare_sizes(ratios, labels,
                  taxonomy_threshold: int = DEFAULT_TAXONOMY_THRESHOLD,
                  alpha: float = ALPHA):
    """Size-vs-complement characterization over the full filtered panel."""
    ratios = np.asarray(ratios, dtype=np.float64)
    labels = np.asarray(labels)
    present = [s for s in ("Large", "Medium", "Small") if (labels == s).any()]
    if len(present) < 2:
        raise ValueError("size comparison needs at least two non-empty size groups")
    reports = []
    for s in present:
        mask = labels == s
        reports.append(_component_report(s, s, ratios[mask], ratios[~mask],
                                         taxonomy_threshold, alpha))
    return reports


def characterization_from_summary(name, size, mean_in, mean_out, stars,
                                  obs_count=0, complement_count=0,
                                  taxonomy_threshold: int = DEFAULT_TAXONOMY_THRESHOLD
                                  ) -> CharacterizationReport:
    """Apply the characterization rule to precomputed means and star levels
    (no raw data needed); any non-empty star string marks significance at
    the 10% level or better."""
    rows = []
    for j, comp in enumerate(COMPONENTS):
        flag = is_characterizing(mean_in[j], mean_out[j],
                                 significant=bool(stars[j]))
        rows.append(ComponentStats(component=comp, mean_in=float(mean_in[j]),
                                   mean_out=float(mean_out[j]), p_value=None,
                                   stars=stars[j], characterizing=flag))
    char_set = frozenset(r.component for r in rows if r.characterizing)
    return CharacterizationReport(
        name=name, size=size, obs_count=obs_count,
        complement_count=complement_count, rows=tuple(rows),
        taxonomy=match_taxonomy(char_set, taxonomy_threshold))


@dataclass(frozen=True)
class SizeResult:
    size: str
    k: int
    profiles: tuple           # lambda-ordered BmProfile
    reports: tuple            # CharacterizationReport, same order (may be empty)
    skipped: str = None       # reason when the whole size was skipped


def _fmt(x):
    return repr(float(x))


def write_contributions_by_bm(path, results):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["size", "bm", "cluster_id", "obs_count"] + list(COMPONENTS)
                   + ["total_contribution", "taxonomy_label",
                      "taxonomy_nearest", "taxonomy_distance"])
        for res in results:
            if res.skipped:
                continue
            tax = {r.name: r.taxonomy for r in res.reports}
            for p in res.profiles:
                t = tax.get(p.name)
                w.writerow([p.size, p.name, p.cluster_id, p.obs_count]
                           + [_fmt(v) for v in p.mean_contributions]
                           + [_fmt(p.total_contribution),
                              t.label if t else "", t.nearest if t else "",
                              t.distance if t is not None else ""])


def write_characterization(path, results):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["size", "bm", "component", "mean_in_bm",
                    "mean_in_complement", "p_value", "stars", "CHAR"])
        for res in results:
            if res.skipped:
                continue
            for rep in res.reports:
                for r in rep.rows:
                    w.writerow([rep.size, rep.name, r.component,
                                _fmt(r.mean_in), _fmt(r.mean_out),
                                "" if r.p_value is None else _fmt(r.p_value),
                                r.stars, int(r.characterizing)])


def write_size_comparison(path, reports):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["size", "component", "mean_in_size", "mean_in_complement",
                    "p_value", "stars", "CHAR"])
        for rep in reports:
            for r in rep.rows:
                w.writerow([rep.size, r.component, _fmt(r.mean_in),
                            _fmt(r.mean_out),
                            "" if r.p_value is None else _fmt(r.p_value),
                            r.stars, int(r.characterizing)])


def _md_cell(mean, stars, char):
    txt = f"{mean:.4f}"
    if char:
        txt = f"**{txt}**"
    if stars:
        txt += f" {stars}"
    return txt


def _pretty_components():
    return [c.replace("_", " ") for c in COMPONENTS]


def render_report_md(results, size_comparison):
    lines = ["# Business model identification", ""]

    if size_comparison:
        lines += ["## Size comparison", "",
                  "Mean portfolio ratios per size group against the complement "
                  "of the other sizes; bold marks characterizing components "
                  "(larger mean, distributions different at the configured "
                  "significance level).", "",
                  "| group | n | " + " | ".join(_pretty_components()) + " |",
                  "|---" * (N_COMPONENTS + 2) + "|"]
        for rep in size_comparison:
            cells = [_md_cell(r.mean_in, r.stars, r.characterizing)
                     for r in rep.rows]
            lines.append(f"| {rep.name} | {rep.obs_count} | " + " | ".join(cells) + " |")
            comp_cells = [f"{r.mean_out:.4f}" for r in rep.rows]
            lines.append(f"| C-{rep.name} | {rep.complement_count} | "
                         + " | ".join(comp_cells) + " |")
        lines.append("")

    for res in results:
        lines.append(f"## {res.size} banks")
        lines.append("")
        if res.skipped:
            lines += [f"Skipped: {res.skipped}", ""]
            continue
        lines.append(f"Majority rule selected k = {res.k} business models.")
        lines.append("")
        lines += ["### Contributions to profitability (x100)", "",
                  "| BM | n | " + " | ".join(_pretty_components()) + " | total |",
                  "|---" * (N_COMPONENTS + 3) + "|"]
        for p in res.profiles:
            cells = [f"{100 * v:.4f}" for v in p.mean_contributions]
            lines.append(f"| {p.name} | {p.obs_count} | " + " | ".join(cells)
                         + f" | {100 * p.total_contribution:.4f} |")
        lines.append("")
        if res.reports:
            lines += ["### Portfolio ratios and characterization", "",
                      "| group | n | " + " | ".join(_pretty_components()) + " |",
                      "|---" * (N_COMPONENTS + 2) + "|"]
            for rep in res.reports:
                cells = [_md_cell(r.mean_in, r.stars, r.characterizing)
                         for r in rep.rows]
                lines.append(f"| {rep.name} | {rep.obs_count} | "
                             + " | ".join(cells) + " |")
                comp_cells = [f"{r.mean_out:.4f}" for r in rep.rows]
                lines.append(f"| C-{rep.name} | {rep.complement_count} | "
                             + " | ".join(comp_cells) + " |")
            lines.append("")
            lines.append("Taxonomy:")
            for rep in res.reports:
                t = rep.taxonomy
                detail = f"nearest {t.nearest}, distance {t.distance}"
                lines.append(f"- {rep.name}: {t.label} ({detail})")
            lines.append("")
        else:
            lines += ["Characterization skipped: single-cluster size has an "
                      "empty complement.", ""]
    return "\n".join(lines) + "\n"


def render_tables(results, size_comparison, out_dir):
    """Write the output bundle; returns the four file paths."""
    paths = {
        "size_comparison": os.path.join(out_dir, "size_comparison.csv"),
        "contributions_by_bm": os.path.join(out_dir, "contributions_by_bm.csv"),
        "characterization": os.path.join(out_dir, "characterization.csv"),
        "report": os.path.join(out_dir, "report.md"),
    }
    write_size_comparison(paths["size_comparison"], size_comparison or [])
    write_contributions_by_bm(paths["contributions_by_bm"], results)
    write_characterization(paths["characterization"], results)
    with open(paths["report"], "w") as fh:
        fh.write(render_report_md(results, size_comparison or []))
    return paths
