from .batching import Batch, collate
from .branches import (
    context_branch,
    encode_shared,
    gcn_layer,
    knowledge_branch,
    masked_softmax,
    syntax_branch,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .config import BRANCHES, FUSIONS, KganConfig, count_parameters, init_params
from .fusion import fuse_baseline, fuse_hierarchical, loss, softmax
from .model import KganModel, Prediction

__all__ = [
    "Batch",
    "BRANCHES",
    "FUSIONS",
    "KganConfig",
    "KganModel",
    "Prediction",
    "collate",
    "context_branch",
    "count_parameters",
    "encode_shared",
    "fuse_baseline",
    "fuse_hierarchical",
    "gcn_layer",
    "init_params",
    "knowledge_branch",
    "load_checkpoint",
    "loss",
    "masked_softmax",
    "save_checkpoint",
    "softmax",
    "syntax_branch",
]
