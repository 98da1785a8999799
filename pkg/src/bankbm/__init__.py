"""Bank business-model identification from profitability contributions.

The pipeline: fit a regression random forest of profitability on nine
portfolio-component ratios per size group, decompose each prediction into
additive per-component contributions, cluster observations in
contribution space with majority-rule selection of the cluster count,
then characterize and name the resulting business models against a
portfolio taxonomy.
"""

__version__ = "0.1.0"

from .analysis import (
    BmProfile,
    CharacterizationReport,
    ComponentStats,
    SizeResult,
    TaxonomyMatch,
    characterization_from_summary,
    characterize_bm,
    compare_sizes,
    is_characterizing,
    match_taxonomy,
    order_bms,
    profile_clusters,
    render_tables,
)
from .cluster import (
    ClusterAssignment,
    KVoteTable,
    cluster_scan,
    compute_validity_indices,
    kmeans_fit,
    select_k_majority,
)
from .components import COMPONENTS, N_COMPONENTS, SIZE_LABELS
from .forest import (
    FittedForest,
    ForestParams,
    fit_forest,
    forest_from_json,
    forest_to_json,
    oob_rmse,
    tune_hyperparameters,
)
from .interpret import (
    ContributionMatrix,
    ContributionVector,
    contribution_matrix,
    decompose_observation,
)
from .panel import (
    FilterConfig,
    PanelDataset,
    PanelError,
    SizeConfig,
    SizeGroup,
    apply_filters,
    parse_panel,
    size_labels,
    stratify_by_size,
    write_panel_csv,
)
from .pipeline import (
    ComputeError,
    ConfigError,
    PipelineConfig,
    config_from_sources,
    run_pipeline,
    validate_config,
)
from .stats import UTestResult, mann_whitney, significance_stars
from .synth import (
    GroundTruth,
    PlantedBm,
    SynthSpec,
    generate_panel,
    single_bm_spec,
    three_bm_spec,
    write_ground_truth,
)
