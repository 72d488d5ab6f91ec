"""Greedy layer-wise neural architecture search on a from-scratch numpy kernel."""

from .conv import CnnArchitecture, ConvLayerSpec, conv2d_forward, dropout_apply, maxpool_forward
from .data import Dataset, SplitSpec, gen_bars, gen_eggbox, load_csv, split, standardize
from .errors import (
    AllTrialsFailedError,
    ArchSearchError,
    ConfigError,
    DataError,
    ShapeError,
    TrainingDivergedError,
    UndefinedScoreError,
)
from .metrics import ConfusionCounts, accuracy, f1_binary, f1_multiclass, r2_score
from .nn import (
    ArchitectureSpec,
    LayerSpec,
    TrainConfig,
    TrainedModel,
    forward,
    grad,
    init_params,
    param_count,
    predict,
    predict_proba,
    train,
)
from .search import (
    SearchConfig,
    SearchData,
    SearchReport,
    TrialResult,
    greedy_search,
    random_search,
    select_best,
)
from .space import SearchSpace, TrialSpec, cnn_space, full_cardinality, mlp_space, stratified_cardinality

__version__ = "0.1.0"
