"""Brute-force reference renderer used as the correctness oracle.

Everything here is deliberately scalar and sequential: plain Python loops,
per-pixel candidate lists searched linearly for the lexicographic
(depth, index) minimum, and a per-pixel brute-force window scan for the
splat. There is no 64-bit packing, no vectorized kernel in the decision
path, and no parallelism. The fast renderer must reproduce this output bit
for bit, which is why both modules spell the shared floating-point formulas
with identical evaluation order (see :mod:`pointstage.renderer`).

numpy appears only for exact float32 casts and for assembling the output
arrays; every comparison that decides a winner happens on plain Python
floats and ints.
"""

from __future__ import annotations

import math

import numpy as np

from .geom import CameraRig, Pinhole, PointCloud, VirtualCamera
from .renderer import BACKGROUND_DEPTH, RenderedView, SplatConfig

_f32 = np.float32


def project_point(
    camera: VirtualCamera, x: float, y: float, z: float
) -> tuple[int, int, float, bool]:
    """Scalar projection of one world point.

    Returns (pixel_x, pixel_y, depth, in_frustum) with depth already rounded
    to float32 precision. Mirrors :func:`pointstage.renderer.project`.
    """
    r = camera.rotation
    t = camera.translation
    xc = r[0, 0] * x + r[0, 1] * y + r[0, 2] * z + t[0]
    yc = r[1, 0] * x + r[1, 1] * y + r[1, 2] * z + t[1]
    zc = r[2, 0] * x + r[2, 1] * y + r[2, 2] * z + t[2]
    proj = camera.projection
    pinhole = isinstance(proj, Pinhole)
    if pinhole:
        if zc == 0.0:
            return 0, 0, float(_f32(zc)), False
        u = (proj.fx * xc) / zc + proj.cx
        v = (proj.fy * yc) / zc + proj.cy
    else:
        u = proj.scale * xc + proj.cx
        v = proj.scale * yc + proj.cy
    depth = float(_f32(zc))
    if not (math.isfinite(u) and math.isfinite(v)):
        return 0, 0, depth, False
    mag = math.floor(abs(u) + 0.5)
    px = -mag if u < 0.0 else mag
    mag = math.floor(abs(v) + 0.5)
    py = -mag if v < 0.0 else mag
    if pinhole:
        z_ok = depth > 0.0
    else:
        z_ok = depth >= 0.0
    ok = z_ok and 0 <= px < camera.width and 0 <= py < camera.height
    return int(px), int(py), depth, ok


def _render_one(
    cloud: PointCloud, camera: VirtualCamera, cfg: SplatConfig
) -> RenderedView:
    w, h = camera.width, camera.height
    if h > w:
        raise ValueError(
            f"rendering requires height <= width for unique linear pixel "
            f"indices, got {w}x{h}"
        )
    r = camera.rotation
    r00, r01, r02 = float(r[0, 0]), float(r[0, 1]), float(r[0, 2])
    r10, r11, r12 = float(r[1, 0]), float(r[1, 1]), float(r[1, 2])
    r20, r21, r22 = float(r[2, 0]), float(r[2, 1]), float(r[2, 2])
    t0, t1, t2 = (float(v) for v in camera.translation)
    proj = camera.projection
    pinhole = isinstance(proj, Pinhole)
    if pinhole:
        fx, fy = proj.fx, proj.fy
    else:
        scale = proj.scale
    cx, cy = proj.cx, proj.cy
    floor = math.floor
    isfinite = math.isfinite
    f32 = _f32

    # Pass 1: bucket in-frustum points by linear pixel index.
    buckets: dict[int, list[tuple[float, int]]] = {}
    for i, (x, y, z) in enumerate(cloud.positions.tolist()):
        xc = r00 * x + r01 * y + r02 * z + t0
        yc = r10 * x + r11 * y + r12 * z + t1
        zc = r20 * x + r21 * y + r22 * z + t2
        if pinhole:
            if zc == 0.0:
                continue
            u = (fx * xc) / zc + cx
            v = (fy * yc) / zc + cy
        else:
            u = scale * xc + cx
            v = scale * yc + cy
        depth = float(f32(zc))
        if pinhole:
            if not depth > 0.0:
                continue
        elif depth < 0.0:
            continue
        if not (isfinite(u) and isfinite(v)):
            continue
        mag = floor(abs(u) + 0.5)
        px = -mag if u < 0.0 else mag
        if px < 0 or px >= w:
            continue
        mag = floor(abs(v) + 0.5)
        py = -mag if v < 0.0 else mag
        if py < 0 or py >= h:
            continue
        lin = px * w + py
        if depth == 0.0:
            depth = 0.0  # canonicalize -0.0: the packed key does the same
        entry = (depth, i)
        hits = buckets.get(lin)
        if hits is None:
            buckets[lin] = [entry]
        else:
            hits.append(entry)

    # Pass 2: per pixel, linear search for the lexicographic minimum.
    depth_img = np.full((h, w), BACKGROUND_DEPTH, dtype=np.float32)
    feat_img = np.zeros((h, w, cloud.n_channels), dtype=np.float64)
    hit_img = np.zeros((h, w), dtype=bool)
    features = cloud.features
    for lin, candidates in buckets.items():
        best = candidates[0]
        for entry in candidates[1:]:
            if entry < best:
                best = entry
        py = lin % w
        px = lin // w
        depth_img[py, px] = best[0]
        feat_img[py, px] = features[best[1]]
        hit_img[py, px] = True

    pre = RenderedView(feat_img, depth_img, hit_img, camera)
    return _splat_brute(pre, cfg)


def _splat_brute(view: RenderedView, cfg: SplatConfig) -> RenderedView:
    """Per-pixel brute-force splat over the candidate window.

    The scan is restricted to the bounding box of hit pixels dilated by the
    window half-width; any pixel outside it has no hit pixel in its window
    and therefore no qualifying candidate.
    """
    h, w = view.depth.shape
    hit_rows, hit_cols = np.nonzero(view.hit_mask)
    if cfg.radius == 0.0 or hit_rows.size == 0:
        return view
    proj = view.camera.projection
    pinhole = isinstance(proj, Pinhole)
    if pinhole:
        rf = cfg.radius * proj.fx
        dmin = float(view.depth[view.hit_mask].min())
        rho_max = rf / dmin if dmin > 0.0 else math.inf
    else:
        rho_const = cfg.radius * proj.scale
        rho_max = rho_const
    if not math.isfinite(rho_max):
        window = cfg.max_px
    else:
        window = min(math.ceil(rho_max), cfg.max_px)
    if window == 0:
        return view

    y_lo = max(0, int(hit_rows.min()) - window)
    y_hi = min(h, int(hit_rows.max()) + window + 1)
    x_lo = max(0, int(hit_cols.min()) - window)
    x_hi = min(w, int(hit_cols.max()) + window + 1)
    offsets = [
        (dy, dx, math.sqrt(dy * dy + dx * dx))
        for dy in range(-window, window + 1)
        for dx in range(-window, window + 1)
        if (dy, dx) != (0, 0)
    ]

    rows = view.depth.tolist()
    inf = math.inf
    winners: list[tuple[int, int, int, int]] = []
    for yj in range(y_lo, y_hi):
        row = rows[yj]
        for xj in range(x_lo, x_hi):
            dj = row[xj]
            best_key: tuple[float, int] | None = None
            best_y = best_x = -1
            for dy, dx, dist in offsets:
                yk = yj + dy
                if yk < 0 or yk >= h:
                    continue
                xk = xj + dx
                if xk < 0 or xk >= w:
                    continue
                dk = rows[yk][xk]
                if not dk < dj:
                    continue
                if pinhole:
                    rho = rf / dk if dk > 0.0 else inf
                else:
                    rho = rho_const
                if dist <= rho:
                    key = (dk, yk * w + xk)
                    if best_key is None or key < best_key:
                        best_key = key
                        best_y, best_x = yk, xk
            if best_key is not None:
                winners.append((yj, xj, best_y, best_x))

    if not winners:
        return view
    depth = view.depth.copy()
    feats = view.features.copy()
    hits = view.hit_mask.copy()
    for yj, xj, yk, xk in winners:
        depth[yj, xj] = view.depth[yk, xk]
        feats[yj, xj] = view.features[yk, xk]
        hits[yj, xj] = True
    return RenderedView(feats, depth, hits, view.camera)


def render_oracle(
    cloud: PointCloud, rig: CameraRig, cfg: SplatConfig | None = None
) -> list[RenderedView]:
    """Reference rendering of a cloud from every rig camera, in rig order.

    Same contract as :func:`pointstage.renderer.render`, minus the worker
    knob (the oracle is sequential by definition). Slow by design; use it
    for verification, not throughput.
    """
    if cloud.n_points == 0:
        raise ValueError("cannot render an empty cloud")
    if cfg is None:
        cfg = SplatConfig()
    return [_render_one(cloud, camera, cfg) for _, camera in rig]
