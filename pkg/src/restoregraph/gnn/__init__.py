"""Dense numpy graph-network engine: layers, training, evaluation."""

from .layers import (
    AttentionLayer,
    DenseLayer,
    GraphConvLayer,
    NeighborMeanLayer,
    attention_coefficients,
    cross_entropy_loss,
    gat_forward,
    gcn_forward,
    sage_forward,
    softmax,
    softmax_cross_entropy_backward,
)
from .model import (
    ARCHES,
    GnnModel,
    ModelConfig,
    TrainReport,
    ablate,
    ablation_battery,
    evaluate,
    format_report_table,
    gat_edges,
    keep_groups,
    load_model,
    report_row,
    save_model,
    score_predictions,
    stratified_split,
    train,
)
from .ops import glorot, leaky_relu, normalize_adjacency, relu

__all__ = [
    "ARCHES",
    "AttentionLayer",
    "DenseLayer",
    "GnnModel",
    "GraphConvLayer",
    "ModelConfig",
    "NeighborMeanLayer",
    "TrainReport",
    "ablate",
    "ablation_battery",
    "attention_coefficients",
    "cross_entropy_loss",
    "evaluate",
    "format_report_table",
    "gat_edges",
    "gat_forward",
    "gcn_forward",
    "glorot",
    "keep_groups",
    "leaky_relu",
    "load_model",
    "normalize_adjacency",
    "relu",
    "report_row",
    "sage_forward",
    "save_model",
    "score_predictions",
    "softmax",
    "softmax_cross_entropy_backward",
    "stratified_split",
    "train",
]
