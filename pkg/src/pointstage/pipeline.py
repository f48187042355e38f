"""Coarse-to-fine 3D target localization over rendered views.

A stage renders the cloud from a rig, asks a scorer for per-view heatmaps
and feature grids, fuses the heatmaps over a 3D candidate grid, and emits
the best candidate plus a pooled feature and a zoomed region of interest.
The two-stage driver reruns the search inside the coarse stage's ROI with
a zoomed rig; the coarse pick itself is kept in the fine candidate set, so
refinement can only tie or improve the candidate the first stage found.

Also here: gripper trajectory logs and keyframe extraction, which select
the timesteps worth localizing in the first place.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Protocol

import numpy as np

from .fusion import (
    FeatureMapStack,
    Heatmap,
    argmax_point,
    candidate_grid,
    pool_local_feature,
    score_points,
)
from .geom import CameraRig, PointCloud, WorkspaceCube, make_rig, roi_cube, zoom_rig
from .renderer import RenderedView, SplatConfig, render


class Scorer(Protocol):
    """Turns rendered views into per-view heatmaps and feature grids.

    Implementations receive the rendered views (each carries its camera)
    and must return one heatmap per view plus a feature grid stack aligned
    with the view order. This is the seam where a learned model plugs in.
    """

    def __call__(
        self, views: list[RenderedView]
    ) -> tuple[list[Heatmap], FeatureMapStack]: ...


@dataclass(frozen=True)
class SyntheticScorer:
    """Closed-form scorer that highlights a known world-space target.

    Each view's heatmap is an isotropic Gaussian bump (peak 1) centered on
    the target's continuous projection, or all zeros when the camera does
    not see the target. Feature grids are one-hot token maps at 1/patch
    resolution marking the token containing the target's pixel. Useful for
    exercising the localization pipeline without a learned model.
    """

    target: np.ndarray
    sigma_px: float = 8.0
    patch: int = 14

    def __post_init__(self) -> None:
        tgt = np.asarray(self.target, dtype=np.float64).reshape(3)
        sigma = float(self.sigma_px)
        patch = int(self.patch)
        if not np.all(np.isfinite(tgt)):
            raise ValueError("target must be finite")
        if not math.isfinite(sigma) or sigma <= 0:
            raise ValueError(f"sigma_px must be positive, got {self.sigma_px}")
        if patch < 1:
            raise ValueError(f"patch must be >= 1, got {self.patch}")
        object.__setattr__(self, "target", tgt)
        object.__setattr__(self, "sigma_px", sigma)
        object.__setattr__(self, "patch", patch)

    def __call__(
        self, views: list[RenderedView]
    ) -> tuple[list[Heatmap], FeatureMapStack]:
        if not views:
            raise ValueError("need at least one rendered view")
        h, w = views[0].depth.shape
        p = self.patch
        if w % p or h % p:
            raise ValueError(
                f"patch size {p} must divide the {w}x{h} image resolution"
            )
        th, tw = h // p, w // p
        loc = self.target.reshape(1, 3)
        heatmaps = []
        grids = []
        cols = np.arange(w, dtype=np.float64)
        rows = np.arange(h, dtype=np.float64)
        for view_id, view in enumerate(views):
            camera = view.camera
            if view.depth.shape != (h, w):
                raise ValueError("all views must share one image resolution")
            u, v, z = camera.project_continuous(loc)
            heat = np.zeros((h, w))
            grid = np.zeros((th, tw, 1))
            if bool(camera.in_view(u, v, z)[0]):
                uu, vv = float(u[0]), float(v[0])
                du2 = (cols - uu) ** 2
                dv2 = (rows - vv) ** 2
                heat = np.exp(-(dv2[:, None] + du2[None, :]) / (2.0 * self.sigma_px**2))
                grid[int(vv // p), int(uu // p), 0] = 1.0
            heatmaps.append(Heatmap(heat, view_id))
            grids.append(grid)
        stack = FeatureMapStack(tuple(grids), tuple(v.camera for v in views))
        return heatmaps, stack


@dataclass(frozen=True)
class PipelineConfig:
    """Knobs for the two-stage localization run.

    zoom is the linear shrink factor of the fine stage's search cube;
    zoom == 1 degenerates to two passes over the full workspace.
    """

    views: tuple[str, ...] = ("front", "top", "right")
    image_size: int = 224
    projection: str = "orthographic"
    splat: SplatConfig = field(default_factory=SplatConfig)
    zoom: float = 4.0
    coarse_resolution: int = 32
    fine_resolution: int = 32
    workers: int = 1

    def __post_init__(self) -> None:
        views = tuple(self.views)
        if not views:
            raise ValueError("views must name at least one view")
        if int(self.image_size) < 2:
            raise ValueError("image_size must be at least 2")
        zoom = float(self.zoom)
        if not math.isfinite(zoom) or zoom < 1.0:
            raise ValueError(f"zoom must be >= 1, got {self.zoom}")
        if int(self.coarse_resolution) < 1 or int(self.fine_resolution) < 1:
            raise ValueError("candidate grid resolutions must be >= 1")
        if int(self.workers) < 1:
            raise ValueError("workers must be >= 1")
        object.__setattr__(self, "views", views)
        object.__setattr__(self, "image_size", int(self.image_size))
        object.__setattr__(self, "zoom", zoom)
        object.__setattr__(self, "coarse_resolution", int(self.coarse_resolution))
        object.__setattr__(self, "fine_resolution", int(self.fine_resolution))
        object.__setattr__(self, "workers", int(self.workers))


@dataclass(frozen=True)
class StagePrediction:
    """One stage's output: the winning candidate and its context.

    roi is the cube a subsequent stage would search (side = cube/zoom,
    clamped inside the stage's own search cube). For the fine stage,
    ``coarse`` links back to the stage that seeded it.
    """

    location: np.ndarray
    score: float
    pooled_feature: np.ndarray
    roi: WorkspaceCube
    stage_id: str
    coarse: Optional["StagePrediction"] = None

    @property
    def low_confidence(self) -> bool:
        """True when the fused score carries no positive evidence."""
        return self.score <= 0.0


def run_stage(
    cloud: PointCloud,
    rig: CameraRig,
    cfg: PipelineConfig,
    scorer: Scorer,
    candidates: np.ndarray,
    *,
    cube: WorkspaceCube,
    stage_id: str,
    coarse: StagePrediction | None = None,
) -> StagePrediction:
    """Render, score, and pick the best 3D candidate for one stage."""
    views = render(cloud, rig, cfg.splat, workers=cfg.workers)
    heatmaps, stack = scorer(views)
    scored = score_points(candidates, heatmaps, rig)
    idx, location = argmax_point(scored)
    pooled = pool_local_feature(location, stack)
    roi = roi_cube(cube, location, cfg.zoom)
    return StagePrediction(
        location=location,
        score=float(scored.scores[idx]),
        pooled_feature=pooled,
        roi=roi,
        stage_id=stage_id,
        coarse=coarse,
    )


def run_two_stage(
    cloud: PointCloud,
    scorer: Scorer,
    cfg: PipelineConfig,
    workspace: WorkspaceCube,
) -> StagePrediction:
    """Coarse search over the workspace, then a zoomed fine search.

    The fine stage searches the coarse prediction's ROI with a rig refit to
    that cube (at zoom == 1 the ROI is the whole workspace and the coarse
    rig is reused). The coarse pick is appended to the fine candidate grid,
    so the fine stage always has the coarse answer available verbatim.
    Returns the fine prediction, with the coarse one attached.
    """
    rig = make_rig(
        workspace, cfg.views, cfg.image_size, cfg.image_size, cfg.projection
    )
    coarse_cands = candidate_grid(workspace, cfg.coarse_resolution)
    coarse = run_stage(
        cloud, rig, cfg, scorer, coarse_cands, cube=workspace, stage_id="coarse"
    )
    fine_cube = coarse.roi
    if cfg.zoom == 1.0:
        fine_rig = rig
    else:
        fine_rig = zoom_rig(rig, coarse.location, cfg.zoom, workspace)
    fine_cands = np.vstack(
        [candidate_grid(fine_cube, cfg.fine_resolution), coarse.location[None, :]]
    )
    return run_stage(
        cloud,
        fine_rig,
        cfg,
        scorer,
        fine_cands,
        cube=fine_cube,
        stage_id="fine",
        coarse=coarse,
    )


@dataclass(frozen=True)
class TrajectoryLog:
    """A recorded end-effector trajectory with gripper state.

    timesteps must be strictly increasing integers; quaternions are
    (w, x, y, z) and must be unit to within 1e-6. Empty logs are legal to
    construct but cannot be queried for keyframes.
    """

    timesteps: np.ndarray
    positions: np.ndarray
    quaternions: np.ndarray
    gripper_open: np.ndarray

    def __post_init__(self) -> None:
        ts = np.asarray(self.timesteps, dtype=np.int64)
        pos = np.asarray(self.positions, dtype=np.float64)
        quat = np.asarray(self.quaternions, dtype=np.float64)
        grip = np.asarray(self.gripper_open, dtype=bool)
        n = ts.shape[0]
        if ts.ndim != 1:
            raise ValueError("timesteps must be a 1D array")
        if pos.shape != (n, 3):
            raise ValueError(f"positions must have shape ({n}, 3), got {pos.shape}")
        if quat.shape != (n, 4):
            raise ValueError(f"quaternions must have shape ({n}, 4), got {quat.shape}")
        if grip.shape != (n,):
            raise ValueError(f"gripper_open must have shape ({n},), got {grip.shape}")
        if n > 1 and not bool(np.all(np.diff(ts) > 0)):
            raise ValueError("timesteps must be strictly increasing")
        if not np.all(np.isfinite(pos)) or not np.all(np.isfinite(quat)):
            raise ValueError("positions and quaternions must be finite")
        if n:
            norms = np.sqrt((quat**2).sum(axis=1))
            err = float(np.abs(norms - 1.0).max())
            if err > 1e-6:
                raise ValueError(f"quaternions must be unit (max |norm-1| = {err:g})")
        object.__setattr__(self, "timesteps", ts)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "quaternions", quat)
        object.__setattr__(self, "gripper_open", grip)

    def __len__(self) -> int:
        return self.timesteps.shape[0]


def extract_keyframes(log: TrajectoryLog) -> list[int]:
    """Timesteps of gripper-state changes plus the final timestep, sorted.

    An entry is a change when its gripper state differs from the previous
    entry's. The final timestep is always included, so every non-empty log
    yields at least one keyframe. Raises ValueError for an empty log.
    """
    n = len(log)
    if n == 0:
        raise ValueError("cannot extract keyframes from an empty trajectory")
    grip = log.gripper_open
    changed = np.nonzero(grip[1:] != grip[:-1])[0] + 1
    frames = set(int(log.timesteps[i]) for i in changed)
    frames.add(int(log.timesteps[n - 1]))
    return sorted(frames)
