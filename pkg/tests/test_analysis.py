"""Profiles, ordering, characterization rule, taxonomy matching, rendering.

Reference aggregates live in tests/fixtures/*.csv: per-group mean ratios
with significance stars and per-BM mean contributions (x100) with their
published totals. Tests replay the characterization rule and the
profile aggregation against those tables.
"""

import csv
import os

import numpy as np
import pytest

from bankbm.analysis import (
    BmProfile,
    CharacterizationReport,
    SizeResult,
    characterization_from_summary,
    characterize_bm,
    compare_sizes,
    is_characterizing,
    match_taxonomy,
    order_bms,
    profile_clusters,
    render_tables,
)
from bankbm.components import COMPONENTS, N_COMPONENTS

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")

CL, IL, DE, SEC, CD, IB, STF, LTF, EQ = COMPONENTS


def load_group_means(name):
    """Long-format fixture -> {group: (n, means[9], stars[9])}."""
    out = {}
    with open(os.path.join(FIXTURES, name), newline="") as fh:
        for row in csv.DictReader(fh):
            key = row.get("bm") or row["group"]
            n, means, stars = out.setdefault(
                key, (int(row["n"]), [None] * 9, [None] * 9))
            j = COMPONENTS.index(row["component"])
            means[j] = float(row["mean"])
            stars[j] = row["stars"]
    return out


def load_contribution_means():
    rows = []
    with open(os.path.join(FIXTURES, "bm_contribution_means.csv"), newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append((row["size"], row["bm"], int(row["n"]),
                         np.array([float(row[c]) for c in COMPONENTS]),
                         float(row["total"])))
    return rows


EXPECTED_SIZE_SETS = {
    "Large": {DE, SEC, STF, LTF},
    "Medium": {CL, IB, STF, LTF},
    "Small": {IL, CD, EQ},
}

EXPECTED_BM_SETS = {
    "BM1-L": {CL, CD, STF, EQ},
    "BM2-L": {IL, DE, SEC, IB},
    "BM3-L": {CL, DE, LTF},
    "BM1-M": {CL, STF, EQ},
    "BM2-M": {IL, SEC, IB, LTF},
    "BM3-M": {CL, DE, EQ},
    "BM1-S": {CL, CD, EQ},
    "BM2-S": {IL, IB},
    "BM3-S": {DE, LTF, EQ},
}

EXPECTED_TAXONOMY = {
    "BM1-L": ("retail", "retail", 1),
    "BM2-L": ("wholesale", "wholesale", 2),
    "BM3-L": ("non-standard", "investment", 3),
    "BM1-M": ("retail", "retail", 2),
    "BM2-M": ("wholesale", "wholesale", 2),
    "BM3-M": ("retail", "retail", 2),
    "BM1-S": ("retail", "retail", 0),
    "BM2-S": ("non-standard", "wholesale", 4),
    "BM3-S": ("non-standard", "investment", 3),
}


# ---------------------------------------------------------------- profiles


def test_profile_totals_match_reference():
    """Aggregating the reference contribution rows through profile_clusters
    reproduces every published total within 0.001 (x100 scale)."""
    rows = load_contribution_means()
    for size in ("Large", "Medium", "Small"):
        group = [r for r in rows if r[0] == size]
        M = np.vstack([means / 100.0 for _, _, _, means, _ in group])
        labels = np.arange(len(group))
        profiles = profile_clusters(M, labels, size)
        assert len(profiles) == len(group)
        for p, (_, bm, n, means, total) in zip(profiles, group):
            np.testing.assert_allclose(p.mean_contributions, means / 100.0,
                                       rtol=0, atol=1e-15)
            assert abs(100.0 * p.total_contribution - total) <= 0.001 + 1e-9, \
                f"{bm}: {100.0 * p.total_contribution} vs {total}"


def test_profile_clusters_multi_member_mean():
    rng = np.random.default_rng(7)
    base = rng.normal(size=(3, 9))
    M = np.repeat(base, 4, axis=0) + 0.0
    labels = np.repeat([0, 1, 2], 4)
    profiles = profile_clusters(M, labels, "Medium")
    for p, want in zip(profiles, base):
        assert p.obs_count == 4
        np.testing.assert_allclose(p.mean_contributions, want, atol=1e-12)
        assert p.total_contribution == pytest.approx(want.sum())


def test_profile_clusters_row_mismatch():
    with pytest.raises(ValueError, match="cover"):
        profile_clusters(np.zeros((5, 9)), np.zeros(4, dtype=int), "Small")


def test_grand_identity():
    """Member-weighted totals add up to the grand sum of contributions."""
    rng = np.random.default_rng(11)
    M = rng.normal(size=(200, 9))
    labels = rng.integers(0, 4, size=200)
    profiles = profile_clusters(M, labels, "Large")
    acc = sum(p.obs_count * p.total_contribution for p in profiles)
    assert acc == pytest.approx(M.sum(), abs=1e-9)
    assert sum(p.obs_count for p in profiles) == 200


# ---------------------------------------------------------------- ordering


def test_order_bms_reference_totals():
    """Published Large totals 0.4635 / -0.1167 / -1.1760 rank 1, 2, 3."""
    rows = [r for r in load_contribution_means() if r[0] == "Large"]
    shuffled = [rows[1], rows[2], rows[0]]
    profiles = [BmProfile(size="Large", cluster_id=i, lam=0,
                          members=np.arange(n),
                          mean_contributions=means / 100.0,
                          total_contribution=float(means.sum() / 100.0),
                          obs_count=n)
                for i, (_, _, n, means, _) in enumerate(shuffled)]
    ranked = order_bms(profiles)
    totals = [100.0 * p.total_contribution for p in ranked]
    assert totals == sorted(totals, reverse=True)
    assert [p.name for p in ranked] == ["BM1-L", "BM2-L", "BM3-L"]
    assert ranked[0].obs_count == 311
    assert ranked[1].obs_count == 671
    assert ranked[2].obs_count == 56


def _profile(total, obs, cid, size="Small"):
    return BmProfile(size=size, cluster_id=cid, lam=0,
                     members=np.arange(obs),
                     mean_contributions=np.full(9, total / 9.0),
                     total_contribution=total, obs_count=obs)


def test_order_bms_tie_breaks():
    a = _profile(0.5, obs=10, cid=2)
    b = _profile(0.5, obs=20, cid=5)
    ranked = order_bms([a, b])
    assert [p.cluster_id for p in ranked] == [5, 2]

    c = _profile(0.5, obs=10, cid=3)
    d = _profile(0.5, obs=10, cid=1)
    ranked = order_bms([c, d])
    assert [p.cluster_id for p in ranked] == [1, 3]
    assert [p.lam for p in ranked] == [1, 2]


# ---------------------------------------------------- characterization rule


def test_is_characterizing_requires_both_conditions():
    assert is_characterizing(0.6, 0.4, p=0.01)
    assert not is_characterizing(0.4, 0.6, p=0.01)      # wrong direction
    assert not is_characterizing(0.6, 0.4, p=0.2)       # not significant
    assert is_characterizing(0.6, 0.4, p=0.10)          # boundary inclusive
    assert not is_characterizing(0.5, 0.5, p=0.01)      # strict inequality
    assert is_characterizing(0.6, 0.4, significant=True)
    assert not is_characterizing(0.6, 0.4, significant=False)
    with pytest.raises(ValueError):
        is_characterizing(0.6, 0.4)


def test_size_reference_characterizing_sets():
    groups = load_group_means("size_means.csv")
    for size in ("Large", "Medium", "Small"):
        n, mean_in, stars = groups[size]
        _, mean_out, _ = groups[f"C-{size}"]
        rep = characterization_from_summary(size, size, mean_in, mean_out,
                                            stars, obs_count=n)
        assert rep.characterizing_set == EXPECTED_SIZE_SETS[size], size
    large = characterization_from_summary(
        "Large", "Large", groups["Large"][1], groups["C-Large"][1],
        groups["Large"][2])
    assert large.taxonomy.label == "investment"
    assert large.taxonomy.distance == 0


def test_bm_reference_characterizing_sets():
    groups = load_group_means("bm_ratio_means.csv")
    for bm, want in EXPECTED_BM_SETS.items():
        size = {"L": "Large", "M": "Medium", "S": "Small"}[bm[-1]]
        n, mean_in, stars = groups[bm]
        _, mean_out, _ = groups[f"C-{bm}"]
        rep = characterization_from_summary(bm, size, mean_in, mean_out,
                                            stars, obs_count=n)
        assert rep.characterizing_set == want, bm
        label, nearest, dist = EXPECTED_TAXONOMY[bm]
        assert rep.taxonomy.label == label, bm
        assert rep.taxonomy.nearest == nearest, bm
        assert rep.taxonomy.distance == dist, bm


def test_bm1s_is_exact_retail():
    groups = load_group_means("bm_ratio_means.csv")
    n, mean_in, stars = groups["BM1-S"]
    _, mean_out, _ = groups["C-BM1-S"]
    rep = characterization_from_summary("BM1-S", "Small", mean_in, mean_out,
                                        stars, obs_count=n)
    assert rep.characterizing_set == {CL, CD, EQ}
    assert rep.taxonomy.distance == 0 and rep.taxonomy.label == "retail"


def test_derivatives_characterize_every_bm3():
    groups = load_group_means("bm_ratio_means.csv")
    for bm in ("BM3-L", "BM3-M", "BM3-S"):
        size = {"L": "Large", "M": "Medium", "S": "Small"}[bm[-1]]
        n, mean_in, stars = groups[bm]
        _, mean_out, _ = groups[f"C-{bm}"]
        rep = characterization_from_summary(bm, size, mean_in, mean_out, stars)
        assert DE in rep.characterizing_set, bm


# ---------------------------------------------------------------- taxonomy


def test_taxonomy_exact_profiles():
    for label, members in (("retail", {CL, CD, EQ}),
                           ("retail diversified", {CL, CD, EQ, STF, LTF}),
                           ("investment", {DE, SEC, STF, LTF}),
                           ("wholesale", {DE, SEC, STF, LTF, IL, IB})):
        m = match_taxonomy(members)
        assert (m.label, m.nearest, m.distance) == (label, label, 0)


def test_taxonomy_interbank_pair_is_non_standard():
    m = match_taxonomy({IL, IB})
    assert m.label == "non-standard"
    assert m.nearest == "wholesale"
    assert m.distance == 4


def test_taxonomy_empty_set():
    m = match_taxonomy(set())
    assert m.label == "non-standard"
    assert m.nearest == "retail"       # smallest profile, 3 members
    assert m.distance == 3


def test_taxonomy_tie_prefers_canonical_order():
    # one step from retail (add stf) and one step from retail diversified
    # (drop ltf): retail wins by listing order
    m = match_taxonomy({CL, CD, EQ, STF})
    assert m.nearest == "retail"
    assert m.distance == 1
    assert m.label == "retail"


def test_taxonomy_threshold_and_unknown():
    assert match_taxonomy({CL, CD}, threshold=1).label == "retail"
    assert match_taxonomy({CL, CD}, threshold=0).label == "non-standard"
    with pytest.raises(ValueError, match="unknown"):
        match_taxonomy({"goodwill"})


# ------------------------------------------------------ end-to-end on data


def test_characterize_bm_planted_equity():
    """Cluster 0 gets visibly higher equity ratios; only cluster 0 should be
    characterized by equity, and pure-noise components by neither."""
    rng = np.random.default_rng(3)
    n = 40
    raw = np.full((2 * n, 9), 0.2)
    raw[:, COMPONENTS.index(EQ)] = np.concatenate([
        rng.normal(0.30, 0.01, size=n), rng.normal(0.10, 0.01, size=n)])
    labels = np.repeat([0, 1], n)
    profiles = order_bms(profile_clusters(rng.normal(size=(2 * n, 9)),
                                          labels, "Large"))
    reports = characterize_bm(raw, profiles)
    assert len(reports) == 2
    by_cid = {p.cluster_id: r for p, r in
              zip(sorted(profiles, key=lambda p: p.lam), reports)}
    eq_sets = {cid: EQ in r.characterizing_set for cid, r in by_cid.items()}
    assert eq_sets[0] and not eq_sets[1]
    for r in reports:
        assert CL not in r.characterizing_set   # constant column, p = 1


def test_characterize_single_cluster_skips():
    raw = np.random.default_rng(0).uniform(0.1, 0.9, size=(20, 9))
    profiles = profile_clusters(np.zeros((20, 9)), np.zeros(20, dtype=int),
                                "Small")
    with pytest.warns(UserWarning, match="single-cluster"):
        out = characterize_bm(raw, profiles)
    assert out == []


def test_compare_sizes_planted():
    rng = np.random.default_rng(9)
    n = 30
    ratios = rng.uniform(0.4, 0.6, size=(3 * n, 9))
    labels = np.array(["Large"] * n + ["Medium"] * n + ["Small"] * n)
    ratios[:n, COMPONENTS.index(DE)] += 0.3
    reports = compare_sizes(ratios, labels)
    assert [r.name for r in reports] == ["Large", "Medium", "Small"]
    assert DE in reports[0].characterizing_set
    assert DE not in reports[1].characterizing_set
    assert reports[0].complement_count == 2 * n


def test_compare_sizes_needs_two_groups():
    with pytest.raises(ValueError, match="two non-empty"):
        compare_sizes(np.zeros((5, 9)), np.array(["Large"] * 5))


# ---------------------------------------------------------------- rendering


def _small_size_result():
    rows = [r for r in load_contribution_means() if r[0] == "Small"]
    profiles = [BmProfile(size="Small", cluster_id=i, lam=0,
                          members=np.arange(n),
                          mean_contributions=means / 100.0,
                          total_contribution=float(means.sum() / 100.0),
                          obs_count=n)
                for i, (_, _, n, means, _) in enumerate(rows)]
    profiles = order_bms(profiles)
    groups = load_group_means("bm_ratio_means.csv")
    reports = []
    for p in profiles:
        n, mean_in, stars = groups[p.name]
        _, mean_out, _ = groups[f"C-{p.name}"]
        reports.append(characterization_from_summary(
            p.name, "Small", mean_in, mean_out, stars, obs_count=n,
            complement_count=sum(q.obs_count for q in profiles) - n))
    return SizeResult(size="Small", k=3, profiles=tuple(profiles),
                      reports=tuple(reports))


def test_render_tables_bundle(tmp_path):
    res = _small_size_result()
    skipped = SizeResult(size="Medium", k=0, profiles=(), reports=(),
                         skipped="fewer than 2 distinct points")
    groups = load_group_means("size_means.csv")
    comparison = [characterization_from_summary(
        s, s, groups[s][1], groups[f"C-{s}"][1], groups[s][2],
        obs_count=groups[s][0], complement_count=groups[f"C-{s}"][0])
        for s in ("Large", "Medium", "Small")]
    paths = render_tables([res, skipped], comparison, str(tmp_path))
    for p in paths.values():
        assert os.path.exists(p)

    report = open(paths["report"]).read()
    assert "## Small banks" in report
    assert "k = 3" in report
    # every markdown table row must have matching cell counts
    for line in report.splitlines():
        if line.startswith("| group |"):
            assert line.count("|") == N_COMPONENTS + 3
        if line.startswith("| BM |"):
            assert line.count("|") == N_COMPONENTS + 4
    assert "| BM3-S | 341 |" in report
    assert "-1.7668" in report            # published total, x100 4 decimals
    assert "0.4635" not in report         # Large result was not rendered
    assert "**0.5152**" in report         # characterizing mean in bold
    assert "Skipped: fewer than 2 distinct points" in report
    assert "- BM1-S: retail (nearest retail, distance 0)" in report
    assert "- BM2-S: non-standard (nearest wholesale, distance 4)" in report

    with open(paths["characterization"], newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 27
    flags = {(r["bm"], r["component"]): r["CHAR"] for r in rows}
    assert flags[("BM1-S", EQ)] == "1"
    assert flags[("BM1-S", SEC)] == "0"
    assert all(r["p_value"] == "" for r in rows)   # star-based reports

    with open(paths["contributions_by_bm"], newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["bm"] for r in rows] == ["BM1-S", "BM2-S", "BM3-S"]
    assert rows[0]["taxonomy_label"] == "retail"
    assert rows[1]["taxonomy_distance"] == "4"
    # full-precision CSV: round-trips through float exactly
    want = float(rows[2]["total_contribution"])
    assert want == pytest.approx(res.profiles[2].total_contribution, abs=0)

    with open(paths["size_comparison"], newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 27
    large_de = [r for r in rows
                if r["size"] == "Large" and r["component"] == DE][0]
    assert large_de["CHAR"] == "1"


def test_render_numeric_formatting(tmp_path):
    """x100 scaling with four decimals in the markdown table."""
    means = np.array([0.001414, 0.001326, 0.000276, 0.001469, 0.001523,
                      0.001555, 0.000318, 0.001021, 0.002257])
    p = BmProfile(size="Small", cluster_id=0, lam=1,
                  members=np.arange(5), mean_contributions=means,
                  total_contribution=float(means.sum()), obs_count=5)
    res = SizeResult(size="Small", k=1, profiles=(p,), reports=())
    paths = render_tables([res], [], str(tmp_path))
    report = open(paths["report"]).read()
    assert "0.1414" in report
    assert "1.1159" in report or "1.1160" in report
    assert "Characterization skipped" in report
