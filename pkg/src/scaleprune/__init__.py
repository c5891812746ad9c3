"""Structure-texture guided token pruning for coarse-to-fine transformer
inference: scoring, selection, dense-map recovery, a desk-scale pipeline
simulator and a measurement harness."""

__version__ = "0.1.0"

from .grids import (
    FeatureGrid,
    SparseTokens,
    avg_pool_3x3,
    center_tokens,
    gather_tokens,
    make_coord_grid,
)
from .metrics import psnr, ssim
from .pipeline import (
    PruneSpec,
    ScaleSchedule,
    ToyModel,
    flop_count,
    inject_noise,
    run_dense,
    run_pruned,
)
from .recovery import (
    RecoveryStrategy,
    anchor_copy,
    cache_upsample,
    force_include,
    nn_propagate,
)
from .scoring import (
    PruneParams,
    first_principal_direction,
    joint_select,
    l2norm_score,
    random_score,
    structural_score,
    textural_score,
)

__all__ = [
    "FeatureGrid", "SparseTokens", "avg_pool_3x3", "center_tokens",
    "gather_tokens", "make_coord_grid",
    "PruneParams", "first_principal_direction", "structural_score",
    "textural_score", "joint_select", "l2norm_score", "random_score",
    "RecoveryStrategy", "nn_propagate", "cache_upsample", "anchor_copy",
    "force_include",
    "ToyModel", "ScaleSchedule", "PruneSpec", "run_dense", "run_pruned",
    "inject_noise", "flop_count",
    "psnr", "ssim",
]
