"""Independent scalar oracles and scene generators shared across tests.

Everything here is deliberately written against the documented contracts,
not against the package internals: plain Python loops, no clever numpy, so
a bug in the fast paths cannot hide in a shared formula.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from pointstage import (
    CameraRig,
    PointCloud,
    RenderedView,
    SplatConfig,
    WorkspaceCube,
    make_rig,
)


class Scene(NamedTuple):
    cloud: PointCloud
    rig: CameraRig
    splat: SplatConfig
    workspace: WorkspaceCube


def bilinear_scalar(values: np.ndarray, u: float, v: float) -> np.ndarray:
    """Clamp-to-edge bilinear sample of a 2D (or 2D+channel) array."""
    h, w = values.shape[0], values.shape[1]
    x0 = math.floor(u)
    y0 = math.floor(v)
    fx = u - x0
    fy = v - y0

    def cl(i: int, n: int) -> int:
        return 0 if i < 0 else (n - 1 if i > n - 1 else i)

    v00 = values[cl(y0, h), cl(x0, w)]
    v10 = values[cl(y0, h), cl(x0 + 1, w)]
    v01 = values[cl(y0 + 1, h), cl(x0, w)]
    v11 = values[cl(y0 + 1, h), cl(x0 + 1, w)]
    return (
        v00 * (1.0 - fx) * (1.0 - fy)
        + v10 * fx * (1.0 - fy)
        + v01 * (1.0 - fx) * fy
        + v11 * fx * fy
    )


def score_points_scalar(points, heatmaps, rig) -> tuple[np.ndarray, np.ndarray]:
    """Per-point loop version of heatmap fusion: (scores, views_hit)."""
    pts = np.asarray(points, dtype=np.float64)
    scores = np.empty(pts.shape[0])
    hits = np.zeros(pts.shape[0], dtype=np.int64)
    for i in range(pts.shape[0]):
        total, count = 0.0, 0
        for hm, (_, cam) in zip(heatmaps, rig):
            u, v, z = cam.project_continuous(pts[i : i + 1])
            if not bool(cam.in_view(u, v, z)[0]):
                continue
            total += float(bilinear_scalar(hm.values, float(u[0]), float(v[0])))
            count += 1
        scores[i] = total / count if count else -np.inf
        hits[i] = count
    return scores, hits


def upsample_triple_loop(grid: np.ndarray, weights: np.ndarray, factor: int) -> np.ndarray:
    """Literal per-pixel, per-tap, per-channel convex upsampling."""
    gh, gw, nc = grid.shape
    h, w = gh * factor, gw * factor
    out = np.zeros((h, w, nc))
    for y in range(h):
        for x in range(w):
            for k in range(9):
                dy, dx = k // 3 - 1, k % 3 - 1
                ry = min(max(y // factor + dy, 0), gh - 1)
                rx = min(max(x // factor + dx, 0), gw - 1)
                for c in range(nc):
                    out[y, x, c] += weights[y, x, k] * grid[ry, rx, c]
    return out


def softmax_scalar(row: list[float]) -> list[float]:
    top = max(row)
    exps = [math.exp(r - top) for r in row]
    total = sum(exps)
    return [e / total for e in exps]


def disc_fill_splat(view: RenderedView, cfg: SplatConfig) -> RenderedView:
    """Forward (scatter) formulation of splatting over the full image.

    Walks every hit pixel k and offers it to each pixel j within the
    Chebyshev window and Euclidean reach rho(k); each j keeps the offer
    with the lexicographically smallest (depth, source index). Organized
    opposite to both package implementations (which gather per target
    pixel), so it cross-checks their window and tie logic.
    """
    from pointstage import Pinhole
    from pointstage.renderer import _splat_window

    window = _splat_window(view, cfg)
    if window == 0:
        return view
    h, w = view.depth.shape
    proj = view.camera.projection
    pinhole = isinstance(proj, Pinhole)
    rf = cfg.radius * (proj.fx if pinhole else proj.scale)

    best: dict[tuple[int, int], tuple[float, int]] = {}
    ys, xs = np.nonzero(view.hit_mask)
    for yk, xk in zip(ys.tolist(), xs.tolist()):
        dk = float(view.depth[yk, xk])
        if pinhole:
            rho = rf / dk if dk > 0.0 else math.inf
        else:
            rho = rf
        offer = (dk, yk * w + xk)
        for dy in range(-window, window + 1):
            for dx in range(-window, window + 1):
                if dy == 0 and dx == 0:
                    continue
                yj, xj = yk + dy, xk + dx
                if not (0 <= yj < h and 0 <= xj < w):
                    continue
                if math.sqrt(dy * dy + dx * dx) > rho:
                    continue
                cur = best.get((yj, xj))
                if cur is None or offer < cur:
                    best[(yj, xj)] = offer

    feats = view.features.copy()
    depth = view.depth.copy()
    hits = view.hit_mask.copy()
    for (yj, xj), (dk, lin) in best.items():
        if not dk < float(view.depth[yj, xj]):
            continue
        yk, xk = lin // w, lin % w
        feats[yj, xj] = view.features[yk, xk]
        depth[yj, xj] = view.depth[yk, xk]
        hits[yj, xj] = True
    return RenderedView(feats, depth, hits, view.camera)


VIEWS_3 = ("front", "top", "right")
VIEWS_5 = ("front", "back", "left", "right", "top")


def random_scene(
    index: int,
    *,
    n_points: int | None = None,
    image_size: int = 224,
) -> Scene:
    """Deterministic randomized scene family for equivalence testing.

    Cycles view counts, projection kinds, splat radius classes, window
    caps, and feature channel counts; every 5th scene quantizes positions
    to force depth ties, every 7th adds far-out points to exercise frustum
    culling (including behind pinhole cameras).
    """
    rng = np.random.default_rng(987_001 + index)
    if n_points is None:
        n_points = int(rng.integers(300, 4000))
    side = float(rng.uniform(0.5, 2.0))
    workspace = WorkspaceCube(rng.uniform(-1.0, 1.0, 3), side)
    views = VIEWS_3 if index % 2 == 0 else VIEWS_5
    projection = "orthographic" if (index // 2) % 2 == 0 else "pinhole"
    radius = [0.0, 0.01 * side, 0.035 * side][index % 3]
    max_px = 5 if index % 4 < 2 else 8
    n_channels = [3, 3, 3, 1, 5][index % 5]

    pos = rng.uniform(workspace.min_corner, workspace.max_corner, (n_points, 3))
    if index % 5 == 0:
        step = side / 64.0
        pos = workspace.center + np.round((pos - workspace.center) / step) * step
    if index % 7 == 0:
        outliers = workspace.center + np.array(
            [[4.0 * side, 0, 0], [-4.0 * side, 0, 0], [0, 4.0 * side, 0],
             [0, -4.0 * side, 0], [0, 0, 4.0 * side], [0, 0, -4.0 * side]]
        )
        pos = np.vstack([pos, outliers])
    cloud = PointCloud(pos, rng.random((pos.shape[0], n_channels)))
    rig = make_rig(workspace, views, image_size, image_size, projection)
    return Scene(cloud, rig, SplatConfig(radius=radius, max_px=max_px), workspace)


def views_equal_bitwise(a: RenderedView, b: RenderedView) -> bool:
    """Bitwise equality of two rendered views (signed zeros distinguished)."""
    return (
        bool(np.array_equal(a.depth.view(np.uint32), b.depth.view(np.uint32)))
        and bool(np.array_equal(a.features.view(np.uint64), b.features.view(np.uint64)))
        and bool(np.array_equal(a.hit_mask, b.hit_mask))
    )
