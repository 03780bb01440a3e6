"""Domain-generalization active learning toolkit.

Public surface: dataset construction and pools, the MLP feature extractor
with its combined objective, random forests with importance scores,
weak-feature plans, selection strategies, the experiment loop, and the CLI.
"""

from ._backend import active_backend
from .data import (
    DomainDataset,
    Fragment,
    PoolState,
    Sample,
    Split,
    combine_fragments,
    generate_rotated_gaussians,
    init_pool,
    load_csv_dataset,
    load_idx_pairs,
    make_loo_splits,
    pool_label,
    rotate_fragment,
    rotate_images,
    save_csv_dataset,
)
from .errors import (
    ConsistencyError,
    ContractError,
    DegenerateDataError,
    FormatError,
    UndefinedScoreError,
)
from .forest import Forest, ForestConfig
from .loop import ExperimentConfig, RoundRecord, evaluate, run_daal, run_matrix
from .mlp import (
    FeatureBatch,
    MlpModel,
    TrainConfig,
    backward_and_step,
    extract,
    forward,
    init_model,
    load_checkpoint,
    loss_all,
    loss_ce,
    loss_dom,
    masked_forward,
    predict_proba,
    save_checkpoint,
    train_model,
)
from .selection import (
    CentroidTable,
    DifficultyScore,
    DistanceDiagnostics,
    compute_centroids,
    daal_rank,
    daal_score,
    distance_diagnostics,
    phi_inter_same,
    phi_intra_cross,
    select,
)
from .weakfeat import WeakFeaturePlan, build_plan, score_features

__version__ = "0.1.0"

__all__ = [
    "active_backend",
    "DomainDataset", "Fragment", "PoolState", "Sample", "Split",
    "combine_fragments", "generate_rotated_gaussians", "init_pool",
    "load_csv_dataset", "load_idx_pairs", "make_loo_splits", "pool_label",
    "rotate_fragment", "rotate_images", "save_csv_dataset",
    "ConsistencyError", "ContractError", "DegenerateDataError", "FormatError", "UndefinedScoreError",
    "Forest", "ForestConfig",
    "ExperimentConfig", "RoundRecord", "evaluate", "run_daal", "run_matrix",
    "FeatureBatch", "MlpModel", "TrainConfig", "backward_and_step", "extract",
    "forward", "init_model", "load_checkpoint", "loss_all", "loss_ce", "loss_dom",
    "masked_forward", "predict_proba", "save_checkpoint", "train_model",
    "CentroidTable", "DifficultyScore", "DistanceDiagnostics", "compute_centroids",
    "daal_rank", "daal_score", "distance_diagnostics", "phi_inter_same", "phi_intra_cross",
    "select",
    "WeakFeaturePlan", "build_plan", "score_features",
]
