"""Config-driven batch pipeline over the library stages.

Every stage reads its inputs from disk and writes its artifacts back to
the output directory, so composing the stage subcommands by hand yields
byte-identical files to the one-shot run_pipeline. No artifact embeds
wall-clock state; reruns with the same config and seed reproduce the
bundle bit for bit.
"""

import csv
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field, replace

import numpy as np

from . import analysis
from .analysis import (
    CharacterizationReport,
    ComponentStats,
    SizeResult,
    TaxonomyMatch,
    characterize_bm,
    compare_sizes,
    order_bms,
    profile_clusters,
    render_tables,
)
from .cluster import cluster_scan, read_assignment, select_k_majority, \
    write_assignment, write_votes
from .components import LETTER_SIZE, SIZE_LABELS, SIZE_LETTER
from .forest import ForestParams, fit_forest, forest_from_json, \
    forest_to_json, tune_hyperparameters
from .interpret import contribution_matrix, read_contributions, \
    write_contributions
from .panel import FilterConfig, PanelError, SizeConfig, apply_filters, \
    parse_panel, size_labels, stratify_by_size, write_panel_csv, \
    write_rejections
from .seeding import TAG_SIZE_STAGE, stream
from .synth import generate_panel, three_bm_spec, write_ground_truth

STAGE_ORDER = ("validate", "fit", "decompose", "cluster", "characterize",
               "report")


class ConfigError(ValueError):
    """Bad config, unreadable input, invalid panel: exit code 2."""


class ComputeError(RuntimeError):
    """A stage failed after validation: exit code 3."""


@dataclass(frozen=True)
class PipelineConfig:
    input: str = None
    out_dir: str = None
    seed: int = None
    threads: int = 0               # 0 = library default
    size_group: str = "all"        # all | Large | Medium | Small
    delimiter: str = ","
    decimal: str = "."
    schema: tuple = ()             # ((canonical, file column), ...)
    filters: FilterConfig = field(default_factory=FilterConfig)
    size: SizeConfig = field(default_factory=SizeConfig)
    tune: bool = True
    folds: int = 5
    forest: ForestParams = field(default_factory=ForestParams)
    decompose_mode: str = "in-sample"
    k_min: int = 2
    k_max: int = 8
    restarts: int = 25
    max_passes: int = 300
    algorithm: str = "hartigan-wong"
    standardize: bool = False
    alpha: float = 0.10
    taxonomy_threshold: int = 2
    synth_n_banks: int = 150
    synth_year_min: int = 2008
    synth_year_max: int = 2013
    synth_noise: float = 0.002

    def schema_dict(self):
        return dict(self.schema) or None

    def selected_sizes(self):
        if self.size_group == "all":
            return list(SIZE_LABELS)
        return [self.size_group]


def _parse_bool(key, raw):
    low = raw.strip().lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {raw!r}")


def _parse_opt_int(key, raw):
    if raw.strip().lower() in ("", "none"):
        return None
    return _parse_int(key, raw)


def _parse_int(key, raw):
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None


def _parse_float(key, raw):
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {raw!r}") from None


def _parse_str(key, raw):
    return raw


# key -> (attribute path, parser); schema.* handled separately
_CONFIG_KEYS = {
    "input": ("input", _parse_str),
    "out_dir": ("out_dir", _parse_str),
    "seed": ("seed", _parse_int),
    "threads": ("threads", _parse_int),
    "size_group": ("size_group", _parse_str),
    "csv.delimiter": ("delimiter", _parse_str),
    "csv.decimal": ("decimal", _parse_str),
    "filters.ratio_bounds": ("filters.ratio_bounds", _parse_bool),
    "filters.require_finite": ("filters.require_finite", _parse_bool),
    "filters.require_positive_assets": ("filters.require_positive_assets", _parse_bool),
    "filters.trim_profitability": ("filters.trim_profitability", _parse_bool),
    "filters.trim_lower_pct": ("filters.trim_lower_pct", _parse_float),
    "filters.trim_upper_pct": ("filters.trim_upper_pct", _parse_float),
    "filters.winsorize": ("filters.winsorize", _parse_bool),
    "size.large_frac": ("size.large_frac", _parse_float),
    "size.small_frac": ("size.small_frac", _parse_float),
    "size.per_year": ("size.per_year", _parse_bool),
    "forest.tune": ("tune", _parse_bool),
    "forest.folds": ("folds", _parse_int),
    "forest.n_trees": ("forest.n_trees", _parse_int),
    "forest.mtry": ("forest.mtry", _parse_int),
    "forest.min_leaf": ("forest.min_leaf", _parse_int),
    "forest.max_depth": ("forest.max_depth", _parse_opt_int),
    "forest.bootstrap_fraction": ("forest.bootstrap_fraction", _parse_float),
    "decompose.mode": ("decompose_mode", _parse_str),
    "cluster.k_min": ("k_min", _parse_int),
    "cluster.k_max": ("k_max", _parse_int),
    "cluster.restarts": ("restarts", _parse_int),
    "cluster.max_passes": ("max_passes", _parse_int),
    "cluster.algorithm": ("algorithm", _parse_str),
    "cluster.standardize": ("standardize", _parse_bool),
    "analysis.alpha": ("alpha", _parse_float),
    "analysis.taxonomy_threshold": ("taxonomy_threshold", _parse_int),
    "synth.n_banks": ("synth_n_banks", _parse_int),
    "synth.year_min": ("synth_year_min", _parse_int),
    "synth.year_max": ("synth_year_max", _parse_int),
    "synth.noise": ("synth_noise", _parse_float),
}


def parse_config_text(text, origin="<config>"):
    """key = value lines; blank lines and # comments ignored."""
    out = {}
    for ln, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{origin}:{ln}: expected 'key = value'")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key in out:
            raise ConfigError(f"{origin}:{ln}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def _set_path(fields, path, value):
    if "." in path:
        head, _, tail = path.partition(".")
        fields[head] = replace(fields[head], **{tail: value})
    else:
        fields[path] = value


def config_from_sources(config_path=None, overrides=None) -> PipelineConfig:
    """Defaults, then the config file, then CLI overrides."""
    cfg = PipelineConfig()
    fields = {f: getattr(cfg, f) for f in (
        "input", "out_dir", "seed", "threads", "size_group", "delimiter",
        "decimal", "schema", "filters", "size", "tune", "folds", "forest",
        "decompose_mode", "k_min", "k_max", "restarts", "max_passes",
        "algorithm", "standardize", "alpha", "taxonomy_threshold",
        "synth_n_banks", "synth_year_min", "synth_year_max", "synth_noise")}
    schema = dict(cfg.schema)

    if config_path is not None:
        if not os.path.isfile(config_path):
            raise ConfigError(f"config file not found: {config_path}")
        with open(config_path) as fh:
            raw = parse_config_text(fh.read(), origin=str(config_path))
        for key, value in raw.items():
            if key.startswith("schema."):
                schema[key[len("schema."):]] = value
                continue
            if key not in _CONFIG_KEYS:
                raise ConfigError(f"unknown config key: {key}")
            path, parser = _CONFIG_KEYS[key]
            try:
                _set_path(fields, path, parser(key, value))
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"{key}: {exc}") from None

    for key, value in (overrides or {}).items():
        if value is None:
            continue
        path, _ = _CONFIG_KEYS[key]
        _set_path(fields, path, value)

    fields["schema"] = tuple(sorted(schema.items()))
    return PipelineConfig(**fields)


def validate_config(cfg: PipelineConfig, command: str) -> PipelineConfig:
    """Structural checks shared by every stage; raises ConfigError."""
    if cfg.out_dir is None:
        raise ConfigError("out_dir is required (config key out_dir or --out-dir)")
    if cfg.seed is None:
        raise ConfigError("seed is required and has no default (set seed= or --seed)")
    if cfg.seed < 0:
        raise ConfigError("seed must be >= 0")
    if cfg.threads < 0:
        raise ConfigError("threads must be >= 0")
    if command != "simulate":
        if cfg.input is None:
            raise ConfigError("input is required (config key input or --input)")
        if not os.path.isfile(cfg.input):
            raise ConfigError(f"input file not found: {cfg.input}")
    if cfg.size_group not in ("all",) + SIZE_LABELS:
        raise ConfigError(f"size_group must be one of L|M|S|all, got {cfg.size_group!r}")
    if len(cfg.delimiter) != 1 or len(cfg.decimal) != 1:
        raise ConfigError("csv.delimiter and csv.decimal must be single characters")
    if cfg.decompose_mode not in ("in-sample", "oob"):
        raise ConfigError(f"decompose.mode must be in-sample or oob, got {cfg.decompose_mode!r}")
    if not 2 <= cfg.k_min <= cfg.k_max:
        raise ConfigError(f"k range must satisfy 2 <= k_min <= k_max, got {cfg.k_min}..{cfg.k_max}")
    if cfg.restarts < 1 or cfg.max_passes < 1:
        raise ConfigError("cluster.restarts and cluster.max_passes must be >= 1")
    if cfg.algorithm not in ("hartigan-wong", "lloyd"):
        raise ConfigError(f"unknown cluster.algorithm: {cfg.algorithm!r}")
    if not 0.0 < cfg.alpha <= 1.0:
        raise ConfigError("analysis.alpha must be in (0, 1]")
    if cfg.taxonomy_threshold < 0:
        raise ConfigError("analysis.taxonomy_threshold must be >= 0")
    if cfg.folds < 2:
        raise ConfigError("forest.folds must be >= 2")
    if cfg.synth_n_banks < 1:
        raise ConfigError("synth.n_banks must be >= 1")
    if cfg.synth_year_min > cfg.synth_year_max:
        raise ConfigError("synth.year_min must be <= synth.year_max")
    if cfg.synth_noise < 0:
        raise ConfigError("synth.noise must be >= 0")
    try:
        cfg.forest.validate()
        SizeConfig(large_frac=cfg.size.large_frac,
                   small_frac=cfg.size.small_frac, per_year=cfg.size.per_year)
    except (ValueError, PanelError) as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def apply_thread_cap(threads: int):
    """Cap numba worker threads; 0 leaves the library default in place.
    Requests beyond the detected CPU budget clamp instead of failing so a
    config is portable across machines."""
    if threads and threads > 0:
        import numba
        numba.set_num_threads(max(1, min(threads, numba.config.NUMBA_NUM_THREADS)))


# --------------------------------------------------------------- serialization


def semantic_config_dict(cfg: PipelineConfig) -> dict:
    """Everything that affects artifact bytes: excludes out_dir and threads."""
    return {
        "input": cfg.input,
        "seed": cfg.seed,
        "size_group": cfg.size_group,
        "csv.delimiter": cfg.delimiter,
        "csv.decimal": cfg.decimal,
        "schema": dict(cfg.schema),
        "filters.ratio_bounds": cfg.filters.ratio_bounds,
        "filters.require_finite": cfg.filters.require_finite,
        "filters.require_positive_assets": cfg.filters.require_positive_assets,
        "filters.trim_profitability": cfg.filters.trim_profitability,
        "filters.trim_lower_pct": cfg.filters.trim_lower_pct,
        "filters.trim_upper_pct": cfg.filters.trim_upper_pct,
        "filters.winsorize": cfg.filters.winsorize,
        "size.large_frac": cfg.size.large_frac,
        "size.small_frac": cfg.size.small_frac,
        "size.per_year": cfg.size.per_year,
        "forest.tune": cfg.tune,
        "forest.folds": cfg.folds,
        "forest.n_trees": cfg.forest.n_trees,
        "forest.mtry": cfg.forest.mtry,
        "forest.min_leaf": cfg.forest.min_leaf,
        "forest.max_depth": cfg.forest.max_depth,
        "forest.bootstrap_fraction": cfg.forest.bootstrap_fraction,
        "decompose.mode": cfg.decompose_mode,
        "cluster.k_min": cfg.k_min,
        "cluster.k_max": cfg.k_max,
        "cluster.restarts": cfg.restarts,
        "cluster.max_passes": cfg.max_passes,
        "cluster.algorithm": cfg.algorithm,
        "cluster.standardize": cfg.standardize,
        "analysis.alpha": cfg.alpha,
        "analysis.taxonomy_threshold": cfg.taxonomy_threshold,
        "synth.n_banks": cfg.synth_n_banks,
        "synth.year_min": cfg.synth_year_min,
        "synth.year_max": cfg.synth_year_max,
        "synth.noise": cfg.synth_noise,
    }


def config_digest(cfg: PipelineConfig) -> str:
    blob = json.dumps(semantic_config_dict(cfg), sort_keys=True,
                      separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _dump_json(path, doc):
    with open(path, "w") as fh:
        fh.write(json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n")


def _load_json(path):
    with open(path) as fh:
        return json.load(fh)


# ----------------------------------------------------------------- file names


def _path(cfg, name):
    return os.path.join(cfg.out_dir, name)


def forest_path(cfg, size):
    return _path(cfg, f"forest_{SIZE_LETTER[size]}.json")


def skip_path(cfg, size):
    return _path(cfg, f"skip_{SIZE_LETTER[size]}.json")


def contributions_path(cfg, size):
    return _path(cfg, f"contributions_{SIZE_LETTER[size]}.csv")


def assignment_path(cfg, size):
    return _path(cfg, f"assignment_{SIZE_LETTER[size]}.csv")


def votes_path(cfg, size):
    return _path(cfg, f"votes_{SIZE_LETTER[size]}.csv")


def bm_results_path(cfg, size):
    return _path(cfg, f"bm_results_{SIZE_LETTER[size]}.json")


def _remove(*paths):
    for p in paths:
        if os.path.exists(p):
            os.remove(p)


def _mark_skip(cfg, size, stage, reason):
    _dump_json(skip_path(cfg, size),
               {"size": size, "stage": stage, "reason": reason})


def _skip_reason(cfg, size):
    p = skip_path(cfg, size)
    if os.path.exists(p):
        doc = _load_json(p)
        return f"{doc['reason']} (at stage {doc['stage']})"
    return None


# -------------------------------------------------------------------- loading


def load_filtered_panel(cfg: PipelineConfig):
    try:
        data = parse_panel(cfg.input, schema=cfg.schema_dict(),
                           delimiter=cfg.delimiter, decimal=cfg.decimal)
        return apply_filters(data, cfg.filters)
    except PanelError as exc:
        raise ConfigError(str(exc)) from None


def _stage_seed(cfg, size, slot):
    idx = SIZE_LABELS.index(size)
    return int(stream(cfg.seed, TAG_SIZE_STAGE, idx, slot)
               .integers(0, 2 ** 31 - 1))


def _groups_by_label(data, cfg):
    groups = {g.label: g for g in stratify_by_size(data, cfg.size)}
    return {s: groups[s] for s in cfg.selected_sizes()}


# --------------------------------------------------------------------- stages


def stage_validate(cfg: PipelineConfig) -> dict:
    data = load_filtered_panel(cfg)
    write_rejections(_path(cfg, "rejections.csv"), data)
    counts = {}
    import warnings as _w
    with _w.catch_warnings():
        _w.simplefilter("ignore")
        for g in stratify_by_size(data, cfg.size):
            counts[g.label] = g.n_obs
    summary = {
        "input": cfg.input,
        "input_digest": data.source_digest,
        "n_accepted": data.n_obs,
        "n_rejected": len(data.rejection_log),
        "size_counts": counts,
    }
    _dump_json(_path(cfg, "panel_summary.json"), summary)
    print(f"validate: {data.n_obs} observations accepted, "
          f"{len(data.rejection_log)} rejected; sizes {counts}")
    return summary


def stage_simulate(cfg: PipelineConfig) -> dict:
    spec = three_bm_spec(
        n_banks=cfg.synth_n_banks,
        years=tuple(range(cfg.synth_year_min, cfg.synth_year_max + 1)),
        seed=cfg.seed, noise_scale=cfg.synth_noise)
    data, gt = generate_panel(spec)
    panel_path = _path(cfg, "panel.csv")
    write_panel_csv(panel_path, data)
    write_ground_truth(_path(cfg, "ground_truth.csv"), gt)
    print(f"simulate: wrote {panel_path} ({data.n_obs} observations, "
          f"{cfg.synth_n_banks} banks) and ground_truth.csv")
    return {"panel": panel_path, "n_obs": data.n_obs}


def stage_fit(cfg: PipelineConfig) -> dict:
    data = load_filtered_panel(cfg)
    fitted = {}
    for size, group in _groups_by_label(data, cfg).items():
        _remove(forest_path(cfg, size), skip_path(cfg, size))
        if group.n_obs == 0:
            _mark_skip(cfg, size, "fit", "empty size group")
            print(f"fit: {size}: skipped (empty size group)")
            continue
        sub = data.take(group.indices)
        seed = _stage_seed(cfg, size, 0)
        try:
            params = cfg.forest
            if cfg.tune:
                params = tune_hyperparameters(sub, folds=cfg.folds, seed=seed)
            forest = fit_forest(sub, params=params, seed=seed)
        except ValueError as exc:
            _mark_skip(cfg, size, "fit", str(exc))
            print(f"fit: {size}: skipped ({exc})")
            continue
        with open(forest_path(cfg, size), "w") as fh:
            fh.write(forest_to_json(forest))
        fitted[size] = params
        print(f"fit: {size}: {group.n_obs} obs, n_trees={params.n_trees} "
              f"mtry={params.mtry} min_leaf={params.min_leaf} "
              f"max_depth={params.max_depth} -> {forest_path(cfg, size)}")
    return {s: p for s, p in fitted.items()}


def stage_decompose(cfg: PipelineConfig) -> dict:
    data = load_filtered_panel(cfg)
    done = {}
    for size, group in _groups_by_label(data, cfg).items():
        _remove(contributions_path(cfg, size))
        reason = _skip_reason(cfg, size)
        if reason is not None:
            print(f"decompose: {size}: skipped ({reason})")
            continue
        fpath = forest_path(cfg, size)
        if not os.path.exists(fpath):
            raise ComputeError(f"decompose: missing {fpath}; run fit first")
        with open(fpath) as fh:
            forest = forest_from_json(fh.read())
        sub = data.take(group.indices)
        cm = contribution_matrix(forest, sub, mode=cfg.decompose_mode)
        write_contributions(contributions_path(cfg, size), sub, cm)
        done[size] = cm.n_obs
        print(f"decompose: {size}: {cm.n_obs} rows ({cfg.decompose_mode}) "
              f"-> {contributions_path(cfg, size)}")
    return done


def stage_cluster(cfg: PipelineConfig) -> dict:
    chosen = {}
    for size in cfg.selected_sizes():
        _remove(assignment_path(cfg, size), votes_path(cfg, size))
        reason = _skip_reason(cfg, size)
        if reason is not None:
            print(f"cluster: {size}: skipped ({reason})")
            continue
        cpath = contributions_path(cfg, size)
        if not os.path.exists(cpath):
            raise ComputeError(f"cluster: missing {cpath}; run decompose first")
        row_index, bank_id, year, cm = read_contributions(cpath)
        seed = _stage_seed(cfg, size, 1)
        try:
            assignments, table = cluster_scan(
                cm.contributions, range(cfg.k_min, cfg.k_max + 1), seed=seed,
                restarts=cfg.restarts, max_passes=cfg.max_passes,
                algorithm=cfg.algorithm, standardize=cfg.standardize)
        except ValueError as exc:
            _mark_skip(cfg, size, "cluster", str(exc))
            print(f"cluster: {size}: skipped ({exc})")
            continue
        k = select_k_majority(table)
        write_assignment(assignment_path(cfg, size), row_index, bank_id,
                         year, assignments[k])
        write_votes(votes_path(cfg, size), table)
        chosen[size] = k
        print(f"cluster: {size}: votes {table.votes} -> k={k}")
    return chosen


def stage_characterize(cfg: PipelineConfig) -> dict:
    data = load_filtered_panel(cfg)
    out = {}
    for size, group in _groups_by_label(data, cfg).items():
        reason = _skip_reason(cfg, size)
        if reason is not None:
            _dump_json(bm_results_path(cfg, size),
                       {"size": size, "skipped": reason, "k": 0,
                        "profiles": [], "reports": []})
            print(f"characterize: {size}: skipped ({reason})")
            continue
        apath = assignment_path(cfg, size)
        cpath = contributions_path(cfg, size)
        if not os.path.exists(apath) or not os.path.exists(cpath):
            raise ComputeError(
                f"characterize: missing artifacts for {size}; run cluster first")
        row_index, _, _, cm = read_contributions(cpath)
        arow_index, labels = read_assignment(apath)
        sub = data.take(group.indices)
        if not (np.array_equal(row_index, arow_index)
                and np.array_equal(row_index, sub.row_index)):
            raise ComputeError(
                f"characterize: {size}: artifact rows do not line up with the "
                f"panel; rerun decompose and cluster with this config")
        profiles = order_bms(profile_clusters(cm, labels, size))
        import warnings as _w
        with _w.catch_warnings():
            _w.simplefilter("ignore")
            reports = characterize_bm(sub.ratios, profiles,
                                      taxonomy_threshold=cfg.taxonomy_threshold,
                                      alpha=cfg.alpha)
        result = SizeResult(size=size, k=len(profiles),
                            profiles=tuple(profiles), reports=tuple(reports))
        _dump_json(bm_results_path(cfg, size), _size_result_to_doc(result))
        out[size] = result
        print(f"characterize: {size}: {len(profiles)} BMs, "
              f"{len(reports)} characterizations -> {bm_results_path(cfg, size)}")
    return out


def _size_result_to_doc(res: SizeResult) -> dict:
    return {
        "size": res.size,
        "k": res.k,
        "skipped": res.skipped,
        "profiles": [{
            "cluster_id": p.cluster_id,
            "lam": p.lam,
            "obs_count": p.obs_count,
            "total_contribution": p.total_contribution,
            "mean_contributions": [float(v) for v in p.mean_contributions],
            "members": [int(i) for i in p.members],
        } for p in res.profiles],
        "reports": [{
            "name": r.name,
            "size": r.size,
            "obs_count": r.obs_count,
            "complement_count": r.complement_count,
            "taxonomy": {"label": r.taxonomy.label,
                         "nearest": r.taxonomy.nearest,
                         "distance": r.taxonomy.distance},
            "rows": [{
                "component": row.component,
                "mean_in": row.mean_in,
                "mean_out": row.mean_out,
                "p_value": row.p_value,
                "stars": row.stars,
                "characterizing": row.characterizing,
            } for row in r.rows],
        } for r in res.reports],
    }


def _size_result_from_doc(doc) -> SizeResult:
    from .analysis import BmProfile
    profiles = tuple(BmProfile(
        size=doc["size"], cluster_id=p["cluster_id"], lam=p["lam"],
        members=np.array(p["members"], dtype=np.int64),
        mean_contributions=np.array(p["mean_contributions"], dtype=np.float64),
        total_contribution=p["total_contribution"],
        obs_count=p["obs_count"]) for p in doc["profiles"])
    reports = tuple(CharacterizationReport(
        name=r["name"], size=r["size"], obs_count=r["obs_count"],
        complement_count=r["complement_count"],
        rows=tuple(ComponentStats(
            component=row["component"], mean_in=row["mean_in"],
            mean_out=row["mean_out"], p_value=row["p_value"],
            stars=row["stars"], characterizing=row["characterizing"])
            for row in r["rows"]),
        taxonomy=TaxonomyMatch(label=r["taxonomy"]["label"],
                               nearest=r["taxonomy"]["nearest"],
                               distance=r["taxonomy"]["distance"]))
        for r in doc["reports"])
    return SizeResult(size=doc["size"], k=doc["k"], profiles=profiles,
                      reports=reports, skipped=doc["skipped"])


def stage_report(cfg: PipelineConfig) -> dict:
    results = []
    for size in cfg.selected_sizes():
        rpath = bm_results_path(cfg, size)
        if not os.path.exists(rpath):
            raise ComputeError(
                f"report: missing {rpath}; run characterize first")
        results.append(_size_result_from_doc(_load_json(rpath)))

    data = load_filtered_panel(cfg)
    import warnings as _w
    with _w.catch_warnings():
        _w.simplefilter("ignore")
        labels = size_labels(data, cfg.size)
        try:
            comparison = compare_sizes(data.ratios, labels,
                                       taxonomy_threshold=cfg.taxonomy_threshold,
                                       alpha=cfg.alpha)
        except ValueError:
            comparison = []
    paths = render_tables(results, comparison, cfg.out_dir)
    print(f"report: wrote {', '.join(sorted(os.path.basename(p) for p in paths.values()))}")
    return paths


def write_manifest(cfg: PipelineConfig, status: str, failed_stage=None,
                   error=None, input_digest=None):
    import numba
    from . import __version__
    doc = {
        "status": status,
        "failed_stage": failed_stage,
        "error": error,
        "config_digest": config_digest(cfg),
        "config": semantic_config_dict(cfg),
        "seed": cfg.seed,
        "input_digest": input_digest,
        "versions": {
            "python": ".".join(str(v) for v in sys.version_info[:3]),
            "numpy": np.__version__,
            "numba": numba.__version__,
            "bankbm": __version__,
        },
    }
    _dump_json(_path(cfg, "manifest.json"), doc)


def run_pipeline(cfg: PipelineConfig) -> dict:
    """ingest -> filter -> stratify -> per-size fit/decompose/cluster/
    characterize -> size comparison -> render, then the run manifest."""
    os.makedirs(cfg.out_dir, exist_ok=True)
    stages = (("validate", stage_validate), ("fit", stage_fit),
              ("decompose", stage_decompose), ("cluster", stage_cluster),
              ("characterize", stage_characterize), ("report", stage_report))
    summary = {}
    input_digest = None
    for name, fn in stages:
        try:
            summary[name] = fn(cfg)
        except ConfigError:
            raise
        except Exception as exc:
            write_manifest(cfg, "failed", failed_stage=name, error=str(exc),
                           input_digest=input_digest)
            raise ComputeError(f"{name}: {exc}") from exc
        if name == "validate":
            input_digest = summary[name]["input_digest"]
    write_manifest(cfg, "ok", input_digest=input_digest)
    print(f"pipeline: ok; manifest {_path(cfg, 'manifest.json')}")
    return summary
