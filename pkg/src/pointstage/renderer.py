"""Point-cloud rasterization with packed depth-index z-ordering and disc splatting.

Rendering one view is a three-step pipeline:

1. :func:`project` maps every point to an integer pixel, a float32 depth,
   and a linear pixel index ``pixel_x * w + pixel_y``.
2. :func:`z_order` resolves occlusion: per pixel, the surviving point is the
   lexicographic minimum of (depth, point index). Depth and index are packed
   into one 64-bit integer (depth bit pattern in the high 32 bits), so the
   survivor is a plain unsigned minimum and the scatter can be split across
   workers and merged in any order without changing the result.
3. :func:`splat` widens each survivor into a screen-space disc: a pixel j
   adopts the feature and depth of the lowest-depth neighbor k that is
   strictly nearer than j's current depth and whose disc reaches j, i.e.
   ``|j - k| <= rho(k)`` with ``rho(k) = radius * focal / depth(k)`` for
   pinhole and ``rho(k) = radius * scale`` for orthographic cameras. The
   pass reads only the pre-splat buffers; replacements copy, never blend.

:func:`render` runs the three steps for every camera of a rig. Its output is
bit-for-bit reproducible for any worker count, and must match
:func:`pointstage.reference.render_oracle` exactly; the expression order of
every floating-point formula here is mirrored there and is part of the
contract.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .geom import CameraRig, Orthographic, Pinhole, PointCloud, VirtualCamera

_EMPTY = np.uint64(0xFFFFFFFFFFFFFFFF)
_INDEX_MASK = np.uint64(0xFFFFFFFF)
_MAX_INDEX = 1 << 32

BACKGROUND_DEPTH = np.float32(np.inf)


@dataclass(frozen=True)
class SplatConfig:
    """Splatting parameters.

    radius is the world-space disc radius in meters (0 disables splatting);
    max_px caps the candidate search window half-width in pixels, guarding
    against near-camera points whose screen radius would explode.
    """

    radius: float = 0.0
    max_px: int = 5

    def __post_init__(self) -> None:
        r = float(self.radius)
        if not np.isfinite(r) or r < 0:
            raise ValueError(f"radius must be >= 0, got {self.radius}")
        m = int(self.max_px)
        if m < 0:
            raise ValueError(f"max_px must be >= 0, got {self.max_px}")
        object.__setattr__(self, "radius", r)
        object.__setattr__(self, "max_px", m)


@dataclass(frozen=True)
class ProjectedPoints:
    """Per-point projection results for one camera.

    For in-frustum points: 0 <= pixel_x < w, 0 <= pixel_y < h, depth is the
    float32 camera-frame z (> 0 pinhole, >= 0 orthographic), and
    linear_index == pixel_x * w + pixel_y. Out-of-frustum entries keep
    linear_index == -1 and arbitrary pixel values.
    """

    pixel_x: np.ndarray
    pixel_y: np.ndarray
    depth: np.ndarray
    linear_index: np.ndarray
    in_frustum: np.ndarray


@dataclass(frozen=True)
class RenderedView:
    """One rendered image: features (h, w, C), depth (h, w) float32 with
    +inf background sentinel, and hit_mask marking pixels holding a point.
    """

    features: np.ndarray
    depth: np.ndarray
    hit_mask: np.ndarray
    camera: VirtualCamera

    @property
    def n_channels(self) -> int:
        return self.features.shape[2]


@dataclass(frozen=True)
class PackedDepthIndex:
    """A depth/index pair packed into one unsigned 64-bit value.

    The high 32 bits hold the IEEE-754 bit pattern of the (nonnegative)
    float32 depth, the low 32 bits the point index, so unsigned integer
    ordering equals lexicographic (depth, index) ordering.
    """

    value: int

    def __post_init__(self) -> None:
        v = int(self.value)
        if not 0 <= v < 1 << 64:
            raise ValueError(f"packed value must fit in 64 bits, got {self.value}")
        object.__setattr__(self, "value", v)

    @property
    def depth_key(self) -> int:
        return self.value >> 32

    @property
    def index(self) -> int:
        return self.value & 0xFFFFFFFF

    @property
    def depth(self) -> float:
        return float(np.uint32(self.depth_key).view(np.float32))


def pack(depth: float, index: int) -> PackedDepthIndex:
    """Pack a nonnegative depth and a point index into 64 bits.

    The depth is rounded to float32 first; -0.0 is canonicalized to +0.0 so
    that packed ordering matches numeric depth ordering for every
    representable nonnegative depth.

    Raises
    ------
    ValueError
        If depth is negative or non-finite, or index is outside [0, 2**32).
    """
    d = float(depth)
    if not math.isfinite(d) or d < 0:
        raise ValueError(f"depth must be finite and >= 0, got {depth}")
    i = int(index)
    if not 0 <= i < _MAX_INDEX:
        raise ValueError(f"index must be in [0, 2**32), got {index}")
    key = int(np.float32(d).view(np.uint32))
    if key == 0x80000000:  # -0.0 after rounding
        key = 0
    return PackedDepthIndex((key << 32) | i)


def unpack(value: int) -> tuple[int, int]:
    """Split a packed 64-bit value into (depth_key, index)."""
    v = int(value)
    if not 0 <= v < 1 << 64:
        raise ValueError(f"packed value must fit in 64 bits, got {value}")
    return v >> 32, v & 0xFFFFFFFF


def _pack_array(depth32: np.ndarray, indices: np.ndarray) -> np.ndarray:
    """Vectorized pack: float32 depths and int indices to uint64 keys."""
    d = np.ascontiguousarray(depth32, dtype=np.float32)
    d = np.where(d == np.float32(0.0), np.float32(0.0), d)  # kill -0.0
    keys = d.view(np.uint32).astype(np.uint64) << np.uint64(32)
    return keys | indices.astype(np.uint64)


def _round_half_away(values: np.ndarray) -> np.ndarray:
    """Round to nearest integer, halves away from zero.

    This exact formula (floor of |x| + 0.5, sign restored) is documented so
    scalar oracles can reproduce the fast path bit for bit.
    """
    mag = np.floor(np.abs(values) + 0.5)
    return np.where(values < 0.0, -mag, mag)


def project(cloud: PointCloud, camera: VirtualCamera) -> ProjectedPoints:
    """Project a cloud to integer pixels for one camera.

    Points behind a pinhole camera (z <= 0 after float32 rounding) or
    landing outside the image are flagged out-of-frustum, never an error.

    Raises
    ------
    ValueError
        If the camera's image is taller than wide (the linear pixel index
        ``pixel_x * w + pixel_y`` is only injective for h <= w) or the cloud
        has 2**32 or more points.
    """
    w, h = camera.width, camera.height
    if h > w:
        raise ValueError(
            f"rendering requires height <= width for unique linear pixel "
            f"indices, got {w}x{h}"
        )
    if cloud.n_points >= _MAX_INDEX:
        raise ValueError("clouds with 2**32 or more points are not supported")
    u, v, z = camera.project_continuous(cloud.positions)
    depth = z.astype(np.float32)
    finite = np.isfinite(u) & np.isfinite(v)
    px = _round_half_away(np.where(finite, u, 0.0)).astype(np.int64)
    py = _round_half_away(np.where(finite, v, 0.0)).astype(np.int64)
    if isinstance(camera.projection, Pinhole):
        z_ok = depth > 0
    else:
        z_ok = depth >= 0
    in_frustum = z_ok & finite & (px >= 0) & (px < w) & (py >= 0) & (py < h)
    linear = np.where(in_frustum, px * w + py, -1)
    return ProjectedPoints(px, py, depth, linear, in_frustum)


def _scatter_min(
    buf: np.ndarray, lin: np.ndarray, packed: np.ndarray, workers: int
) -> None:
    if workers <= 1 or lin.size < 2:
        np.minimum.at(buf, lin, packed)
        return
    # Chunked scatter with a private buffer per worker, merged by minimum.
    # min is associative and commutative, so the result does not depend on
    # the chunk count or completion order.
    bounds = np.linspace(0, lin.size, workers + 1).astype(np.int64)

    def run(a: int, b: int) -> np.ndarray:
        local = np.full_like(buf, _EMPTY)
        np.minimum.at(local, lin[a:b], packed[a:b])
        return local

    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(run, int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])
        ]
        for fut in futures:
            np.minimum(buf, fut.result(), out=buf)


def z_order(
    proj: ProjectedPoints,
    cloud: PointCloud,
    camera: VirtualCamera,
    *,
    workers: int = 1,
) -> RenderedView:
    """Resolve occlusion per pixel and gather the survivor images.

    Two-phase structure: a scatter pass folds each in-frustum point's packed
    (depth, index) key into its pixel slot with an unsigned minimum, then a
    gather pass unpacks each pixel's winner into depth, feature, and hit
    buffers. Contested pixels keep the lowest depth; exact depth ties keep
    the lowest point index.
    """
    w, h = camera.width, camera.height
    buf = np.full(w * w, _EMPTY, dtype=np.uint64)  # h <= w, so x*w+y < w*w
    sel = np.flatnonzero(proj.in_frustum)
    if sel.size:
        packed = _pack_array(proj.depth[sel], sel)
        _scatter_min(buf, proj.linear_index[sel], packed, workers)

    grid = buf.reshape(w, w).T[:h]  # [y, x] layout
    valid = grid != _EMPTY
    depth = (grid >> np.uint64(32)).astype(np.uint32).view(np.float32)
    depth = np.where(valid, depth, BACKGROUND_DEPTH)
    features = np.zeros((h, w, cloud.n_channels), dtype=np.float64)
    if sel.size:
        idx = (grid & _INDEX_MASK).astype(np.int64)
        features[valid] = cloud.features[idx[valid]]
    return RenderedView(features, depth, valid, camera)


def _splat_window(view: RenderedView, cfg: SplatConfig) -> int:
    """Candidate window half-width: min(ceil(max screen radius), max_px)."""
    if cfg.radius == 0.0 or not bool(view.hit_mask.any()):
        return 0
    proj = view.camera.projection
    if isinstance(proj, Pinhole):
        dmin = float(view.depth[view.hit_mask].min())
        rho_max = (cfg.radius * proj.fx) / dmin if dmin > 0.0 else math.inf
    else:
        rho_max = cfg.radius * proj.scale
    if not math.isfinite(rho_max):
        return cfg.max_px
    return min(math.ceil(rho_max), cfg.max_px)


def splat(view: RenderedView, cfg: SplatConfig, *, workers: int = 1) -> RenderedView:
    """Widen each survivor pixel into a disc, reading pre-splat buffers only.

    For every pixel j (background included, at depth +inf), the candidates
    are the pixels k within Chebyshev distance W = min(ceil(max screen
    radius), max_px) satisfying depth(k) < depth(j) and
    ``sqrt(dy^2 + dx^2) <= rho(k)``; j adopts the candidate with the lowest
    depth, equal depths resolved to the lowest row-major pixel index. With
    radius 0 (or no hits) the view is returned unchanged. Splatting never
    increases a pixel's depth.
    """
    window = _splat_window(view, cfg)
    if window == 0:
        return view
    h, w = view.depth.shape
    proj = view.camera.projection
    depth64 = view.depth.astype(np.float64)
    if isinstance(proj, Pinhole):
        rf = cfg.radius * proj.fx
        with np.errstate(divide="ignore"):
            rho = rf / depth64  # background +inf yields rho 0
    else:
        rho = np.full((h, w), cfg.radius * proj.scale)

    pad_shape = (h + 2 * window, w + 2 * window)
    depth_pad = np.full(pad_shape, BACKGROUND_DEPTH, dtype=np.float32)
    depth_pad[window : window + h, window : window + w] = view.depth
    rho_pad = np.zeros(pad_shape)
    rho_pad[window : window + h, window : window + w] = rho
    packed_pad = np.full(pad_shape, _EMPTY, dtype=np.uint64)
    scan = np.arange(h * w, dtype=np.int64).reshape(h, w)
    packed_pad[window : window + h, window : window + w] = _pack_array(
        view.depth, scan
    ).reshape(h, w)

    offsets = [
        (dy, dx, math.sqrt(dy * dy + dx * dx))
        for dy in range(-window, window + 1)
        for dx in range(-window, window + 1)
        if (dy, dx) != (0, 0)
    ]
    best = np.full((h, w), _EMPTY, dtype=np.uint64)

    def run_band(y0: int, y1: int) -> None:
        center = view.depth[y0:y1]
        band = best[y0:y1]
        cand = np.empty_like(band)
        mask = np.empty(band.shape, dtype=bool)
        closer = np.empty(band.shape, dtype=bool)
        for dy, dx, dist in offsets:
            rows = slice(window + dy + y0, window + dy + y1)
            cols = slice(window + dx, window + dx + w)
            np.less(depth_pad[rows, cols], center, out=closer)
            np.greater_equal(rho_pad[rows, cols], dist, out=mask)
            mask &= closer
            cand.fill(_EMPTY)
            np.copyto(cand, packed_pad[rows, cols], where=mask)
            np.minimum(band, cand, out=band)

    if workers <= 1 or h < 2 * workers:
        run_band(0, h)
    else:
        bounds = np.linspace(0, h, workers + 1).astype(np.int64)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(
                pool.map(
                    run_band,
                    (int(a) for a in bounds[:-1]),
                    (int(b) for b in bounds[1:]),
                )
            )

    won = best != _EMPTY
    if not bool(won.any()):
        return view
    src = (best[won] & _INDEX_MASK).astype(np.int64)
    src_y, src_x = src // w, src % w
    features = view.features.copy()
    depth = view.depth.copy()
    hits = view.hit_mask.copy()
    features[won] = view.features[src_y, src_x]
    depth[won] = view.depth[src_y, src_x]
    hits[won] = True
    return RenderedView(features, depth, hits, view.camera)


def render(
    cloud: PointCloud,
    rig: CameraRig,
    cfg: SplatConfig | None = None,
    *,
    workers: int = 1,
) -> list[RenderedView]:
    """Render a cloud from every rig camera, in rig order.

    The composition project -> z_order -> splat per camera. ``workers``
    splits the scatter and splat passes; any value produces bitwise
    identical output.

    Raises
    ------
    ValueError
        If the cloud is empty. A nonempty cloud entirely outside a frustum
        is fine and renders to an all-background view.
    """
    if cloud.n_points == 0:
        raise ValueError("cannot render an empty cloud")
    if cfg is None:
        cfg = SplatConfig()
    views = []
    for _, camera in rig:
        proj = project(cloud, camera)
        view = z_order(proj, cloud, camera, workers=workers)
        views.append(splat(view, cfg, workers=workers))
    return views
