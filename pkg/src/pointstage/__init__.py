"""Virtual multi-view point cloud rendering and coarse-to-fine localization.

The renderer projects a cloud into posed virtual cameras, resolves per-pixel
occlusion through packed 64-bit depth/index keys, and widens survivors into
screen-space discs. On top of that sit multi-view heatmap fusion over 3D
candidate grids, convex feature upsampling, and a two-stage zoom-in
localization pipeline. :mod:`pointstage.reference` holds a deliberately
sequential re-implementation that the vectorized renderer must match bit
for bit; `pointstage verify` runs that comparison from the command line.
"""

from .fusion import (
    FeatureMapStack,
    Heatmap,
    ScoredCloud,
    argmax_point,
    candidate_grid,
    pool_local_feature,
    score_points,
)
from .geom import (
    CANONICAL_VIEW_ORDER,
    CameraRig,
    Orthographic,
    Pinhole,
    PointCloud,
    VirtualCamera,
    WorkspaceCube,
    make_rig,
    roi_cube,
    zoom_rig,
)
from .pipeline import (
    PipelineConfig,
    Scorer,
    StagePrediction,
    SyntheticScorer,
    TrajectoryLog,
    extract_keyframes,
    run_stage,
    run_two_stage,
)
from .renderer import (
    BACKGROUND_DEPTH,
    PackedDepthIndex,
    ProjectedPoints,
    RenderedView,
    SplatConfig,
    pack,
    project,
    render,
    splat,
    unpack,
    z_order,
)
from .upsample import (
    CoarseFeatureGrid,
    ConvexWeights,
    convex_upsample,
    normalize_to_convex,
)

__version__ = "0.1.0"

__all__ = [
    "BACKGROUND_DEPTH",
    "CANONICAL_VIEW_ORDER",
    "CameraRig",
    "CoarseFeatureGrid",
    "ConvexWeights",
    "FeatureMapStack",
    "Heatmap",
    "Orthographic",
    "PackedDepthIndex",
    "Pinhole",
    "PipelineConfig",
    "PointCloud",
    "ProjectedPoints",
    "RenderedView",
    "ScoredCloud",
    "Scorer",
    "SplatConfig",
    "StagePrediction",
    "SyntheticScorer",
    "TrajectoryLog",
    "VirtualCamera",
    "WorkspaceCube",
    "argmax_point",
    "candidate_grid",
    "convex_upsample",
    "extract_keyframes",
    "make_rig",
    "normalize_to_convex",
    "pack",
    "pool_local_feature",
    "project",
    "render",
    "roi_cube",
    "run_stage",
    "run_two_stage",
    "score_points",
    "splat",
    "unpack",
    "z_order",
    "zoom_rig",
]
