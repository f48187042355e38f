"""Scene geometry: point clouds, workspaces, virtual cameras, and camera rigs.

Coordinate conventions
----------------------
The world frame is right-handed with z up. A camera's extrinsics map world
points into the camera frame as ``R @ p + t``, with camera x to the right,
camera y down, and camera z forward into the scene, so depth is the camera-z
coordinate. Continuous pixel coordinates place pixel centers at integer
positions: column index u grows to the right, row index v grows downward.

Several downstream consumers require bit-exact agreement between vectorized
and scalar re-implementations of the projection math, so the evaluation
order of the floating-point expressions in :meth:`VirtualCamera.world_to_camera`
and :meth:`VirtualCamera.project_continuous` is part of the contract and must
not be "simplified".
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Union

import numpy as np

# Canonical view placement: unit view direction (toward the workspace center)
# and the image-up hint used to orient the camera. Exact integer components,
# so the derived rotations are exact.
_VIEW_AXES: dict[str, tuple[tuple[float, float, float], tuple[float, float, float]]] = {
    "front": ((0.0, 1.0, 0.0), (0.0, 0.0, 1.0)),
    "back": ((0.0, -1.0, 0.0), (0.0, 0.0, 1.0)),
    "left": ((1.0, 0.0, 0.0), (0.0, 0.0, 1.0)),
    "right": ((-1.0, 0.0, 0.0), (0.0, 0.0, 1.0)),
    "top": ((0.0, 0.0, -1.0), (0.0, 1.0, 0.0)),
}

CANONICAL_VIEW_ORDER = ("front", "back", "left", "right", "top")

# Cameras stand off one cube side beyond the near face, i.e. 1.5 sides from
# the center, and the cube occupies at most this fraction of the image.
_STANDOFF_SIDES = 1.0
_COVERAGE = 0.98

_ROTATION_TOL = 1e-9


def _as_array(values, shape: tuple[int, ...], name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


@dataclass(frozen=True)
class PointCloud:
    """Points in the world frame with per-point feature vectors.

    Parameters
    ----------
    positions : (N, 3) float array
        World coordinates in meters. Must be finite.
    features : (N, C) float array
        One feature vector per point (e.g. RGB in [0, 1]); C >= 1.

    Arrays are converted to float64 and treated as immutable after
    construction.
    """

    positions: np.ndarray
    features: np.ndarray

    def __post_init__(self) -> None:
        pos = np.asarray(self.positions, dtype=np.float64)
        feat = np.asarray(self.features, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ValueError(f"positions must have shape (N, 3), got {pos.shape}")
        if feat.ndim != 2 or feat.shape[0] != pos.shape[0]:
            raise ValueError(
                f"features must have shape ({pos.shape[0]}, C), got {feat.shape}"
            )
        if feat.shape[1] < 1:
            raise ValueError("features must have at least one channel")
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")
        if not np.all(np.isfinite(feat)):
            raise ValueError("features must be finite")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "features", feat)

    @property
    def n_points(self) -> int:
        return self.positions.shape[0]

    @property
    def n_channels(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class WorkspaceCube:
    """Axis-aligned cube delimiting the region of interest.

    ``center`` is a world-frame point and ``side`` the full edge length in
    meters (strictly positive).
    """

    center: np.ndarray
    side: float

    def __post_init__(self) -> None:
        center = _as_array(self.center, (3,), "center")
        side = float(self.side)
        if not np.isfinite(side) or side <= 0:
            raise ValueError(f"side must be a positive finite number, got {side}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "side", side)

    @property
    def min_corner(self) -> np.ndarray:
        return self.center - self.side / 2.0

    @property
    def max_corner(self) -> np.ndarray:
        return self.center + self.side / 2.0

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Inclusive containment test for an (N, 3) array; returns (N,) bool."""
        pts = np.asarray(points, dtype=np.float64)
        lo, hi = self.min_corner, self.max_corner
        return np.all((pts >= lo) & (pts <= hi), axis=-1)

    def corners(self) -> np.ndarray:
        """The 8 cube corners, shape (8, 3), in binary counting order."""
        lo, hi = self.min_corner, self.max_corner
        out = np.empty((8, 3))
        for i in range(8):
            out[i] = [hi[a] if (i >> (2 - a)) & 1 else lo[a] for a in range(3)]
        return out


@dataclass(frozen=True)
class Pinhole:
    """Perspective intrinsics: u = fx * X / Z + cx, v = fy * Y / Z + cy."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self) -> None:
        for name in ("fx", "fy", "cx", "cy"):
            v = float(getattr(self, name))
            if not np.isfinite(v):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, v)
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")


@dataclass(frozen=True)
class Orthographic:
    """Parallel-projection intrinsics: u = scale * X + cx, in px per meter."""

    scale: float
    cx: float
    cy: float

    def __post_init__(self) -> None:
        for name in ("scale", "cx", "cy"):
            v = float(getattr(self, name))
            if not np.isfinite(v):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, v)
        if self.scale <= 0:
            raise ValueError("scale must be positive")


Projection = Union[Pinhole, Orthographic]


@dataclass(frozen=True)
class VirtualCamera:
    """A posed camera with either pinhole or orthographic projection.

    Parameters
    ----------
    rotation : (3, 3) float array
        World-to-camera rotation; must be orthonormal with determinant +1
        to within 1e-9.
    translation : (3,) float array
        World-to-camera translation, i.e. camera coords are ``R @ p + t``.
    projection : Pinhole or Orthographic
    width, height : int
        Image dimensions in pixels.
    """

    rotation: np.ndarray
    translation: np.ndarray
    projection: Projection
    width: int
    height: int

    def __post_init__(self) -> None:
        rot = _as_array(self.rotation, (3, 3), "rotation")
        t = _as_array(self.translation, (3,), "translation")
        err = np.abs(rot @ rot.T - np.eye(3)).max()
        if err > _ROTATION_TOL:
            raise ValueError(f"rotation is not orthonormal (|R R^T - I| = {err:.3e})")
        det = float(np.linalg.det(rot))
        if abs(det - 1.0) > _ROTATION_TOL:
            raise ValueError(f"rotation must have determinant +1, got {det!r}")
        if not isinstance(self.projection, (Pinhole, Orthographic)):
            raise ValueError("projection must be Pinhole or Orthographic")
        w, h = int(self.width), int(self.height)
        if w < 1 or h < 1:
            raise ValueError("image dimensions must be positive")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "width", w)
        object.__setattr__(self, "height", h)

    @property
    def position(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.rotation.T @ self.translation

    @property
    def view_direction(self) -> np.ndarray:
        """Unit optical axis in world coordinates (camera +z)."""
        return self.rotation[2].copy()

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        """Map (N, 3) world points into the camera frame.

        Written as explicit row expressions (not a matmul) so the per-element
        operation order matches a scalar re-implementation bit for bit.
        """
        pts = np.asarray(points, dtype=np.float64)
        r, t = self.rotation, self.translation
        x, y, z = pts[..., 0], pts[..., 1], pts[..., 2]
        xc = r[0, 0] * x + r[0, 1] * y + r[0, 2] * z + t[0]
        yc = r[1, 0] * x + r[1, 1] * y + r[1, 2] * z + t[1]
        zc = r[2, 0] * x + r[2, 1] * y + r[2, 2] * z + t[2]
        return np.stack([xc, yc, zc], axis=-1)

    def project_continuous(
        self, points: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Project (N, 3) world points to continuous pixel coordinates.

        Returns
        -------
        u, v, z : (N,) float64 arrays
            Column and row coordinates plus camera-frame depth. For pinhole
            cameras, points at z <= 0 produce non-finite u/v; callers must
            gate on :meth:`in_view` (or on z) before using them.
        """
        cam = self.world_to_camera(points)
        xc, yc, zc = cam[..., 0], cam[..., 1], cam[..., 2]
        proj = self.projection
        if isinstance(proj, Pinhole):
            with np.errstate(divide="ignore", invalid="ignore"):
                u = (proj.fx * xc) / zc + proj.cx
                v = (proj.fy * yc) / zc + proj.cy
        else:
            u = proj.scale * xc + proj.cx
            v = proj.scale * yc + proj.cy
        return u, v, zc

    def in_view(self, u: np.ndarray, v: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Frustum test on continuous projections.

        A point is in view when its continuous coordinates are sampleable
        without extrapolation (0 <= u <= w-1, 0 <= v <= h-1) and it lies in
        front of the camera (z > 0 for pinhole, z >= 0 for orthographic).
        """
        if isinstance(self.projection, Pinhole):
            ok = z > 0.0
        else:
            ok = z >= 0.0
        return (
            ok
            & (u >= 0.0)
            & (u <= self.width - 1.0)
            & (v >= 0.0)
            & (v <= self.height - 1.0)
        )


@dataclass(frozen=True)
class CameraRig:
    """An ordered set of named cameras sharing one image resolution.

    Names come from the canonical set front/back/left/right/top and appear
    in canonical order. Iterating the rig yields (name, camera) pairs.
    """

    names: tuple[str, ...]
    cameras: tuple[VirtualCamera, ...]

    def __post_init__(self) -> None:
        names = tuple(self.names)
        cameras = tuple(self.cameras)
        if len(names) == 0:
            raise ValueError("a rig needs at least one view")
        if len(names) != len(cameras):
            raise ValueError("names and cameras must have the same length")
        unknown = [n for n in names if n not in _VIEW_AXES]
        if unknown:
            raise ValueError(
                f"unknown view names {unknown}; valid names are {sorted(_VIEW_AXES)}"
            )
        if len(set(names)) != len(names):
            raise ValueError("view names must be unique")
        w, h = cameras[0].width, cameras[0].height
        for cam in cameras[1:]:
            if cam.width != w or cam.height != h:
                raise ValueError("all rig cameras must share one image resolution")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "cameras", cameras)

    def __len__(self) -> int:
        return len(self.cameras)

    def __iter__(self) -> Iterator[tuple[str, VirtualCamera]]:
        return iter(zip(self.names, self.cameras))

    @property
    def width(self) -> int:
        return self.cameras[0].width

    @property
    def height(self) -> int:
        return self.cameras[0].height

    @property
    def projection_kind(self) -> str:
        return "pinhole" if isinstance(self.cameras[0].projection, Pinhole) else "orthographic"


def _look_rotation(direction: np.ndarray, up_hint: np.ndarray) -> np.ndarray:
    # direction and up_hint are exact unit axis vectors, so the cross
    # products below are exact and already normalized.
    f = direction
    r = np.cross(f, up_hint)
    d = np.cross(f, r)
    return np.stack([r, d, f])


def make_rig(
    workspace: WorkspaceCube,
    views: Iterable[str],
    image_width: int = 224,
    image_height: int = 224,
    projection: str = "orthographic",
) -> CameraRig:
    """Build the canonical outward camera rig around a workspace cube.

    Each requested view places a camera on the cube's face normal, one cube
    side beyond the face (1.5 sides from the center), looking at the center.
    Intrinsics are sized so the whole cube projects inside the image with a
    2% margin on the limiting axis.

    Parameters
    ----------
    workspace : WorkspaceCube
    views : iterable of str
        Any subset of {"front", "back", "left", "right", "top"}; the rig
        orders them canonically regardless of input order.
    image_width, image_height : int
    projection : {"orthographic", "pinhole"}

    Returns
    -------
    CameraRig

    Notes
    -----
    Identical inputs produce bitwise-identical camera parameters; there is
    no randomness and no iteration-order dependence anywhere in the
    construction.
    """
    requested = set(views)
    if not requested:
        raise ValueError("views must name at least one view")
    unknown = sorted(requested - set(_VIEW_AXES))
    if unknown:
        raise ValueError(
            f"unknown view names {unknown}; valid names are {sorted(_VIEW_AXES)}"
        )
    if projection not in ("orthographic", "pinhole"):
        raise ValueError(f"projection must be 'orthographic' or 'pinhole', got {projection!r}")
    w, h = int(image_width), int(image_height)
    if w < 2 or h < 2:
        raise ValueError("image dimensions must be at least 2 pixels")

    side = workspace.side
    center = workspace.center
    standoff = _STANDOFF_SIDES * side
    half_extent = side / 2.0
    limit = float(min(w, h))
    cx, cy = w / 2.0, h / 2.0

    names = tuple(n for n in CANONICAL_VIEW_ORDER if n in requested)
    cameras = []
    for name in names:
        direction, up_hint = _VIEW_AXES[name]
        f = np.array(direction, dtype=np.float64)
        rot = _look_rotation(f, np.array(up_hint, dtype=np.float64))
        eye = center - f * (half_extent + standoff)
        t = -(rot @ eye)
        if projection == "orthographic":
            intr: Projection = Orthographic(scale=_COVERAGE * limit / side, cx=cx, cy=cy)
        else:
            # Worst-case lateral/depth ratio is at the near face:
            # (side/2) / standoff, so this focal puts the near-face corners
            # exactly on the 2% margin.
            fl = _COVERAGE * limit / 2.0 * standoff / half_extent
            intr = Pinhole(fx=fl, fy=fl, cx=cx, cy=cy)
        cameras.append(VirtualCamera(rot, t, intr, w, h))
    return CameraRig(names, tuple(cameras))


def roi_cube(workspace: WorkspaceCube, center: np.ndarray, zoom: float) -> WorkspaceCube:
    """The zoomed-in region of interest: a cube of side ``workspace.side / zoom``.

    The requested center is clamped (per axis) so the returned cube lies
    entirely inside the workspace. ``zoom`` must be >= 1; at zoom == 1 the
    only admissible cube is the workspace itself.
    """
    zoom = float(zoom)
    if not np.isfinite(zoom) or zoom < 1.0:
        raise ValueError(f"zoom must be >= 1, got {zoom}")
    center = _as_array(center, (3,), "center")
    fine_side = workspace.side / zoom
    lo = workspace.min_corner + fine_side / 2.0
    hi = workspace.max_corner - fine_side / 2.0
    return WorkspaceCube(np.clip(center, lo, hi), fine_side)


def zoom_rig(
    rig: CameraRig,
    roi_center: np.ndarray,
    zoom: float,
    workspace: WorkspaceCube,
) -> CameraRig:
    """Refit a rig around the zoomed region of interest.

    Returns a rig with the same view names, resolution, and projection kind
    whose cameras cover a cube of side ``workspace.side / zoom`` centered at
    ``roi_center`` (clamped to stay inside the workspace). For orthographic
    rigs this multiplies the pixel scale by ``zoom``; for pinhole rigs the
    focal length is unchanged and the cameras move closer.

    Raises
    ------
    ValueError
        If ``zoom <= 1`` or ``roi_center`` lies outside the workspace.
    """
    zoom = float(zoom)
    if not np.isfinite(zoom) or zoom <= 1.0:
        raise ValueError(f"zoom must be > 1, got {zoom}")
    center = _as_array(roi_center, (3,), "roi_center")
    if not bool(workspace.contains(center)):
        raise ValueError(f"roi center {center.tolist()} is outside the workspace")
    fine = roi_cube(workspace, center, zoom)
    return make_rig(fine, rig.names, rig.width, rig.height, rig.projection_kind)
