"""Inter-layer structural encoders over frozen language-model representations.

Fuses the per-layer representation stack of a frozen model into one task
vector via set, complete-graph, or Cayley-graph encoders, with single-layer
and attention baselines, a planted-signal synthetic benchmark, and a
deterministic training harness.
"""

from ._kernels import BACKEND as kernel_backend
from .baselines import (
    BaselineConfig,
    last_layer_encode,
    layer_sweep,
    train_linear_probe,
    weighted_encode,
)
from .cayley import (
    CayleyGraph,
    GroupElement,
    build_cayley,
    graph_diameter,
    group_size,
    smallest_n_for,
)
from .checkpoint import load_params, save_params
from .data import (
    SPLIT_TEST,
    SPLIT_TRAIN,
    SPLIT_VALIDATION,
    SynthSpec,
    TaskDataset,
    few_shot_subset,
    generate_synthetic,
    read_lrep,
    write_lrep,
)
from .encoders import (
    CayleyEncoder,
    EncoderConfig,
    FcEncoder,
    GraphStructure,
    LayerStack,
    NodeAssignment,
    SetEncoder,
    assign_layers,
    cayley_encode,
    fc_encode,
    gcn_layer,
    gin_layer,
    mean_pool_tokens,
    set_encode,
)
from .errors import (
    FormatError,
    IlseError,
    InvalidArgument,
    InvalidState,
    InvariantViolation,
    NumericFailure,
    SearchFailure,
    UndefinedCorrelation,
)
from .nn import Linear, Mlp, ParamStore, accuracy, pearson, spearman
from .training import (
    ILSE_METHODS,
    METHODS,
    Model,
    RunMetrics,
    TrainConfig,
    compare_methods,
    count_params,
    few_shot_curve,
    format_comparison,
    grid_search,
    train,
)

__version__ = "0.1.0"
