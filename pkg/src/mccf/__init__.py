"""Item-based collaborative filtering with dimensionality reduction,
single- and multi-criteria."""

from .core import (
    CriteriaRecord,
    CriteriaTensor,
    Dataset,
    DatasetStats,
    ParseError,
    RatingRecord,
    RatingScale,
    criteria_slice,
    dataset_stats,
    overall_slice,
)
from .engine import (
    AggregationWeights,
    McConfig,
    McModel,
    NeighborhoodSpec,
    Prediction,
    aggregate_overall,
    batch_predict,
    build_mc_model,
    fit_aggregation,
    load_model,
    mc_recommend_top_n,
    predict_criteria,
    predict_matrix,
    predict_overall,
    predict_single,
    recommend_top_n,
    save_model,
)
from .evaluation import (
    BenchmarkConfig,
    EvalReport,
    McBenchmarkConfig,
    RelevanceSpec,
    bias,
    coverage,
    mae,
    precision_recall_f1,
    rmse,
    run_benchmark,
    run_mc_benchmark,
    run_sweep,
)
from .ingest import (
    MOVIELENS_SCALE,
    DensityFilterSpec,
    SplitSpec,
    density_filter,
    parse_movielens,
    parse_multicriteria,
    split_train_test,
    write_movielens,
    write_multicriteria,
)
from .linalg import (
    FactorModel,
    PcaModel,
    TuckerModel,
    hosvd,
    impute_missing,
    pca,
    pca_project,
    pca_reconstruct,
    ssvd,
    truncated_svd,
    tucker_reconstruct,
)
from .similarity import (
    SIMILARITY_KINDS,
    SimilarityStore,
    item_similarity_matrix,
)

__version__ = "0.1.0"

__all__ = [
    "AggregationWeights",
    "BenchmarkConfig",
    "CriteriaRecord",
    "CriteriaTensor",
    "Dataset",
    "DatasetStats",
    "DensityFilterSpec",
    "EvalReport",
    "FactorModel",
    "MOVIELENS_SCALE",
    "McBenchmarkConfig",
    "McConfig",
    "McModel",
    "NeighborhoodSpec",
    "ParseError",
    "PcaModel",
    "Prediction",
    "RatingRecord",
    "RatingScale",
    "RelevanceSpec",
    "SIMILARITY_KINDS",
    "SimilarityStore",
    "SplitSpec",
    "TuckerModel",
    "aggregate_overall",
    "batch_predict",
    "bias",
    "build_mc_model",
    "coverage",
    "criteria_slice",
    "dataset_stats",
    "density_filter",
    "fit_aggregation",
    "hosvd",
    "impute_missing",
    "item_similarity_matrix",
    "load_model",
    "mae",
    "mc_recommend_top_n",
    "overall_slice",
    "parse_movielens",
    "parse_multicriteria",
    "pca",
    "pca_project",
    "pca_reconstruct",
    "precision_recall_f1",
    "predict_criteria",
    "predict_matrix",
    "predict_overall",
    "predict_single",
    "recommend_top_n",
    "rmse",
    "run_benchmark",
    "run_mc_benchmark",
    "run_sweep",
    "save_model",
    "split_train_test",
    "ssvd",
    "truncated_svd",
    "tucker_reconstruct",
    "write_movielens",
    "write_multicriteria",
]
