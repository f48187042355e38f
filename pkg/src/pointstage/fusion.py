"""Back-projection of per-view heatmaps onto 3D candidate points.

A scorer produces one 2D heatmap per rendered view. Each 3D candidate is
projected into every view; its score is the mean of the bilinearly sampled
heatmap values over the views whose frustum contains it. Candidates seen by
no view score -inf and are excluded from the argmax. The same continuous
projection drives :func:`pool_local_feature`, which concatenates bilinear
samples of per-view feature grids at a chosen 3D location.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geom import CameraRig, VirtualCamera, WorkspaceCube


@dataclass(frozen=True)
class Heatmap:
    """A nonnegative, finite (h, w) score field for one view."""

    values: np.ndarray
    view_id: int = 0

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2:
            raise ValueError(f"heatmap must be 2D, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("heatmap values must be finite")
        if vals.size and float(vals.min()) < 0:
            raise ValueError("heatmap values must be >= 0")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "view_id", int(self.view_id))


@dataclass(frozen=True)
class ScoredCloud:
    """Candidate points with fused scores.

    scores[i] is -inf exactly when views_hit[i] == 0 (the candidate was
    outside every view's frustum).
    """

    points: np.ndarray
    scores: np.ndarray
    views_hit: np.ndarray

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.float64)
        scores = np.asarray(self.scores, dtype=np.float64)
        hits = np.asarray(self.views_hit, dtype=np.int64)
        n = pts.shape[0]
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must have shape (M, 3), got {pts.shape}")
        if scores.shape != (n,) or hits.shape != (n,):
            raise ValueError("scores and views_hit must be (M,) arrays")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "views_hit", hits)


@dataclass(frozen=True)
class FeatureMapStack:
    """Per-view feature grids (each (h', w', D)) with their cameras."""

    grids: tuple[np.ndarray, ...]
    cameras: tuple[VirtualCamera, ...]

    def __post_init__(self) -> None:
        grids = tuple(np.asarray(g, dtype=np.float64) for g in self.grids)
        cameras = tuple(self.cameras)
        if not grids:
            raise ValueError("feature stack needs at least one view")
        if len(grids) != len(cameras):
            raise ValueError("grids and cameras must have the same length")
        shape = grids[0].shape
        for g in grids:
            if g.ndim != 3 or g.shape != shape:
                raise ValueError("all feature grids must share one (h', w', D) shape")
        object.__setattr__(self, "grids", grids)
        object.__setattr__(self, "cameras", cameras)

    @property
    def n_channels(self) -> int:
        return self.grids[0].shape[2]


def _bilinear(values: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Clamp-to-edge bilinear sampling at continuous pixel coordinates.

    Integer coordinates return the pixel value exactly (the off-pixel terms
    are multiplied by exact zeros).
    """
    h, w = values.shape[0], values.shape[1]
    x0 = np.floor(u)
    y0 = np.floor(v)
    fx = u - x0
    fy = v - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    v00 = values[y0c, x0c]
    v10 = values[y0c, x1c]
    v01 = values[y1c, x0c]
    v11 = values[y1c, x1c]
    if values.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    return (
        v00 * (1.0 - fx) * (1.0 - fy)
        + v10 * fx * (1.0 - fy)
        + v01 * (1.0 - fx) * fy
        + v11 * fx * fy
    )


def score_points(
    points: np.ndarray, heatmaps: list[Heatmap], rig: CameraRig
) -> ScoredCloud:
    """Fuse per-view heatmaps into one score per 3D candidate.

    Each candidate's score is the mean over in-frustum views of the heatmap
    sampled bilinearly at the candidate's continuous projection. Heatmaps
    pair with rig cameras by position and must match the rig's length and
    image resolution.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"points must have shape (M, 3), got {pts.shape}")
    if pts.shape[0] == 0:
        raise ValueError("need at least one candidate point")
    if len(heatmaps) != len(rig):
        raise ValueError(
            f"got {len(heatmaps)} heatmaps for a rig with {len(rig)} views"
        )
    sums = np.zeros(pts.shape[0])
    counts = np.zeros(pts.shape[0], dtype=np.int64)
    for heatmap, (_, camera) in zip(heatmaps, rig):
        if heatmap.values.shape != (camera.height, camera.width):
            raise ValueError(
                f"heatmap shape {heatmap.values.shape} does not match the "
                f"view's {camera.height}x{camera.width} image"
            )
        u, v, z = camera.project_continuous(pts)
        seen = camera.in_view(u, v, z)
        if not bool(seen.any()):
            continue
        samples = _bilinear(heatmap.values, u[seen], v[seen])
        sums[seen] += samples
        counts[seen] += 1
    scores = np.where(counts > 0, sums / np.maximum(counts, 1), -np.inf)
    return ScoredCloud(pts, scores, counts)


def argmax_point(scored: ScoredCloud) -> tuple[int, np.ndarray]:
    """Index and location of the best-scoring candidate.

    Exact ties resolve to the lowest index. Raises ValueError when every
    candidate is unscored (no view saw any of them).
    """
    if not bool((scored.views_hit > 0).any()):
        raise ValueError("every candidate is outside all view frusta")
    idx = int(np.argmax(scored.scores))
    return idx, scored.points[idx].copy()


def pool_local_feature(location: np.ndarray, stack: FeatureMapStack) -> np.ndarray:
    """Concatenate bilinear feature samples at one 3D location across views.

    The location's continuous image projection is rescaled to each grid's
    resolution with the pixel-area mapping u' = (u + 0.5) * w'/w - 0.5.
    Views that do not see the location contribute zeros, keeping the layout
    fixed at D * n_views; if no view sees it at all, that is an error.
    """
    loc = np.asarray(location, dtype=np.float64).reshape(1, 3)
    pooled = []
    seen_any = False
    for grid, camera in zip(stack.grids, stack.cameras):
        u, v, z = camera.project_continuous(loc)
        if bool(camera.in_view(u, v, z)[0]):
            seen_any = True
            gh, gw = grid.shape[0], grid.shape[1]
            gu = (u + 0.5) * (gw / camera.width) - 0.5
            gv = (v + 0.5) * (gh / camera.height) - 0.5
            pooled.append(_bilinear(grid, gu, gv)[0])
        else:
            pooled.append(np.zeros(grid.shape[2]))
    if not seen_any:
        raise ValueError("location is outside every view's frustum")
    return np.concatenate(pooled)


def candidate_grid(cube: WorkspaceCube, resolution: int) -> np.ndarray:
    """Cell centers of a resolution^3 partition of the cube, shape (res^3, 3).

    Ordering is row-major over (ix, iy, iz): x varies slowest, z fastest.
    """
    res = int(resolution)
    if res < 1:
        raise ValueError(f"resolution must be >= 1, got {resolution}")
    lo = cube.min_corner
    step = cube.side / res
    axes = [lo[a] + (np.arange(res) + 0.5) * step for a in range(3)]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    return np.stack([gx, gy, gz], axis=-1).reshape(-1, 3)
