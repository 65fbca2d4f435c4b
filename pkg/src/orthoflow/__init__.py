"""Memory-efficient optical flow via local orthogonal cost volumes."""

from .attention import (
    HORIZONTAL,
    IDENTITY,
    RANDOM_ORTHONORMAL,
    SCALED_IDENTITY,
    VERTICAL,
    AttendedPyramid,
    AttentionConfig,
    attend_pyramid,
    attention_backward,
    local_axial_attention,
)
from .costvolume import (
    LookupEntry,
    LookupSchedule,
    OrthogonalCostVolume,
    RepresentationKind,
    build_global1d_volume,
    build_local2d_volume,
    build_orthogonal_volume,
    element_count,
    orthogonal_volume_backward,
)
from .features import FeaturePyramid, build_pyramid, extract_features
from .flowio import FLO_MAGIC, read_flo, write_flo
from .grids import (
    FeatureMap,
    FlowField,
    GrayImage,
    avg_pool_2x2,
    bilinear_sample,
    upsample_flow,
)
from .solver import (
    AffineWarp,
    EvalReport,
    SolverConfig,
    TextureSpec,
    Translation,
    estimate_flow,
    evaluate,
    make_synthetic_pair,
    sequence_loss,
    soft_argmax_update,
)
from .visualize import flow_to_rgb, make_color_wheel

__version__ = "0.1.0"

__all__ = [
    "AffineWarp",
    "AttendedPyramid",
    "AttentionConfig",
    "EvalReport",
    "FLO_MAGIC",
    "FeatureMap",
    "FeaturePyramid",
    "FlowField",
    "GrayImage",
    "HORIZONTAL",
    "IDENTITY",
    "LookupEntry",
    "LookupSchedule",
    "OrthogonalCostVolume",
    "RANDOM_ORTHONORMAL",
    "RepresentationKind",
    "SCALED_IDENTITY",
    "SolverConfig",
    "TextureSpec",
    "Translation",
    "VERTICAL",
    "attend_pyramid",
    "attention_backward",
    "avg_pool_2x2",
    "bilinear_sample",
    "build_global1d_volume",
    "build_local2d_volume",
    "build_orthogonal_volume",
    "build_pyramid",
    "element_count",
    "estimate_flow",
    "evaluate",
    "extract_features",
    "flow_to_rgb",
    "local_axial_attention",
    "make_color_wheel",
    "make_synthetic_pair",
    "orthogonal_volume_backward",
    "read_flo",
    "sequence_loss",
    "soft_argmax_update",
    "upsample_flow",
    "write_flo",
]
