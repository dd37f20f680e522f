"""Robust crop ideotype optimization on a representative subset of climates.

The pipeline: synthetic climate series (:mod:`~ideotype.climate`), a toy
crop model (:mod:`~ideotype.cropmodel`), DTW and model-based climate
dissimilarities (:mod:`~ideotype.dissim`), relational k-means selecting K
representative series (:mod:`~ideotype.cluster`), reconstruction of the full
yield distribution from those K series (:mod:`~ideotype.reconstruct`), and
bi-objective optimization of expected yield and CVaR
(:mod:`~ideotype.moo`), compared with the indicators of
:mod:`~ideotype.indicators` by :mod:`~ideotype.experiment`.
"""

from .climate import (
    ClimateError,
    ClimateSeries,
    ClimateSet,
    GeneratorConfig,
    SiteConfig,
    default_generator_config,
    generate_climate,
    load_climate,
    write_climate,
)
from .cluster import ClusterModel, ClusteringConfig, RelationalKMeans, relational_kmeans, select_representatives
from .cropmodel import (
    DEFAULT_BOUNDS,
    TRAITS,
    Phenotype,
    PhenotypeBounds,
    PhenotypeError,
    Simulator,
    YieldMatrix,
    lhs_sample,
    simulate_yield,
    yield_matrix,
)
from .dissim import (
    DissimWeights,
    DissimilarityMatrix,
    DtwConfig,
    climate_dissimilarity,
    combine,
    cosine_normalize,
    dtw_distance,
    model_dissim,
    variable_dissim,
)
from .experiment import ExperimentConfig, run_experiment
from .indicators import epsilon_indicator, hypervolume, r2_indicator, reference_point
from .moo import (
    BUDGET_PRESETS,
    BudgetReport,
    ObjectivePoint,
    OptimizerConfig,
    ParetoArchive,
    PhenotypeOptimizer,
    evaluate_full,
    evaluate_reconstructed,
    mopso_cd,
    naive_mopso,
    random_search,
    two_step,
)
from .reconstruct import (
    MixtureReconstructor,
    ReconstructedYield,
    ResidualTable,
    compute_residuals,
    cvar,
    expectation,
    quantile,
    reconstruct_sample,
)

__version__ = "0.1.0"
