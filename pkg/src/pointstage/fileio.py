"""On-disk formats: PLY clouds, PPM/PGM images, raw tensors, configs, logs.

All parsers raise format-specific ValueError subclasses carrying 1-based
line numbers (or byte positions for binary payloads) so CLI users can find
the offending input. Writers are deterministic: the same data produces the
same bytes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geom import PointCloud
from .pipeline import TrajectoryLog


class PlyError(ValueError):
    """Malformed or unsupported PLY content."""


class TensorFileError(ValueError):
    """Malformed tensor file content."""


class ConfigError(ValueError):
    """Malformed scene configuration or trajectory log."""


# ---------------------------------------------------------------------------
# PLY point clouds.
#
# Supported layout: ascii or binary_little_endian 1.0, one vertex element
# with float x, y, z and optionally uchar red, green, blue. Colors map to
# features in [0, 1]; clouds without colors read back with all-ones RGB
# features. Any other element or property is an error, not a silent skip.
# ---------------------------------------------------------------------------

_FLOAT_TYPES = {"float", "float32"}
_UCHAR_TYPES = {"uchar", "uint8"}


def write_ply(path: str | Path, cloud: PointCloud, binary: bool = True) -> None:
    """Write a cloud as PLY; 3-channel features are stored as RGB colors.

    Positions round to float32 and colors to uint8 (features are clamped to
    [0, 1] first). Feature layouts other than 3 channels are not
    representable in this format and raise ValueError.
    """
    path = Path(path)
    n = cloud.n_points
    has_colors = cloud.n_channels == 3
    if not has_colors:
        raise ValueError(
            f"PLY stores RGB colors; got {cloud.n_channels} feature channels"
        )
    pos = cloud.positions.astype(np.float32)
    rgb = np.rint(np.clip(cloud.features, 0.0, 1.0) * 255.0).astype(np.uint8)

    fmt = "binary_little_endian" if binary else "ascii"
    header = [
        "ply",
        f"format {fmt} 1.0",
        f"element vertex {n}",
        "property float x",
        "property float y",
        "property float z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
        "end_header",
    ]
    header_bytes = ("\n".join(header) + "\n").encode("ascii")
    if binary:
        rec = np.empty(
            n,
            dtype=[
                ("x", "<f4"),
                ("y", "<f4"),
                ("z", "<f4"),
                ("red", "u1"),
                ("green", "u1"),
                ("blue", "u1"),
            ],
        )
        for i, f in enumerate(("x", "y", "z")):
            rec[f] = pos[:, i]
        for i, f in enumerate(("red", "green", "blue")):
            rec[f] = rgb[:, i]
        path.write_bytes(header_bytes + rec.tobytes())
    else:
        lines = []
        for i in range(n):
            x, y, z = (float(pos[i, a]) for a in range(3))
            r, g, b = (int(rgb[i, a]) for a in range(3))
            lines.append(f"{x:.9g} {y:.9g} {z:.9g} {r} {g} {b}")
        path.write_bytes(header_bytes + ("\n".join(lines) + "\n" if n else "").encode("ascii"))


def _parse_ply_header(raw: bytes) -> tuple[str, int, bool, int, int]:
    """Returns (format, n_vertices, has_colors, header_lines, header_bytes)."""
    end = raw.find(b"end_header\n")
    if end < 0:
        raise PlyError("missing end_header line")
    header_bytes = end + len(b"end_header\n")
    try:
        text = raw[:header_bytes].decode("ascii")
    except UnicodeDecodeError as exc:
        raise PlyError(f"header is not ascii: {exc}") from None
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise PlyError("line 1: file does not start with 'ply'")

    fmt = None
    n_vertices = None
    props: list[tuple[str, str]] = []
    in_vertex = False
    for lineno, line in enumerate(lines[1:], start=2):
        tokens = line.split()
        if not tokens or tokens[0] == "comment":
            continue
        if tokens[0] == "format":
            if len(tokens) != 3 or tokens[2] != "1.0":
                raise PlyError(f"line {lineno}: unsupported format declaration {line!r}")
            if tokens[1] not in ("ascii", "binary_little_endian"):
                raise PlyError(
                    f"line {lineno}: unsupported format {tokens[1]!r} "
                    "(expected ascii or binary_little_endian)"
                )
            fmt = tokens[1]
        elif tokens[0] == "element":
            if len(tokens) != 3:
                raise PlyError(f"line {lineno}: malformed element declaration {line!r}")
            if tokens[1] != "vertex":
                raise PlyError(f"line {lineno}: unsupported element {tokens[1]!r}")
            if n_vertices is not None:
                raise PlyError(f"line {lineno}: duplicate vertex element")
            try:
                n_vertices = int(tokens[2])
            except ValueError:
                raise PlyError(f"line {lineno}: bad vertex count {tokens[2]!r}") from None
            if n_vertices < 0:
                raise PlyError(f"line {lineno}: bad vertex count {n_vertices}")
            in_vertex = True
        elif tokens[0] == "property":
            if not in_vertex:
                raise PlyError(f"line {lineno}: property outside the vertex element")
            if len(tokens) != 3:
                raise PlyError(f"line {lineno}: unsupported property {line!r}")
            props.append((tokens[1], tokens[2]))
            ptype, pname = tokens[1], tokens[2]
            if pname in ("x", "y", "z"):
                if ptype not in _FLOAT_TYPES:
                    raise PlyError(
                        f"line {lineno}: property {pname!r} must be float, got {ptype!r}"
                    )
            elif pname in ("red", "green", "blue"):
                if ptype not in _UCHAR_TYPES:
                    raise PlyError(
                        f"line {lineno}: property {pname!r} must be uchar, got {ptype!r}"
                    )
            else:
                raise PlyError(f"line {lineno}: unsupported property {pname!r}")
        elif tokens[0] == "end_header":
            break
        else:
            raise PlyError(f"line {lineno}: unrecognized header line {line!r}")

    if fmt is None:
        raise PlyError("header has no format declaration")
    if n_vertices is None:
        raise PlyError("header has no vertex element")
    names = [p[1] for p in props]
    if names[:3] != ["x", "y", "z"]:
        raise PlyError(f"vertex properties must start with x, y, z; got {names}")
    if names[3:] not in ([], ["red", "green", "blue"]):
        raise PlyError(f"color properties must be red, green, blue in order; got {names[3:]}")
    return fmt, n_vertices, len(names) == 6, len(lines), header_bytes


def read_ply(path: str | Path) -> PointCloud:
    """Read a PLY cloud; clouds without colors get all-ones RGB features."""
    path = Path(path)
    raw = path.read_bytes()
    fmt, n, has_colors, header_lines, header_bytes = _parse_ply_header(raw)
    if n == 0:
        raise PlyError("cloud has no vertices")

    if fmt == "ascii":
        try:
            text = raw[header_bytes:].decode("ascii")
        except UnicodeDecodeError as exc:
            raise PlyError(f"vertex data is not ascii: {exc}") from None
        data_lines = text.splitlines()
        want = 6 if has_colors else 3
        pos = np.empty((n, 3), dtype=np.float64)
        rgb = np.empty((n, 3), dtype=np.float64)
        for i in range(n):
            lineno = header_lines + 1 + i
            if i >= len(data_lines):
                raise PlyError(f"line {lineno}: expected {n} vertices, file ends after {i}")
            tokens = data_lines[i].split()
            if len(tokens) != want:
                raise PlyError(
                    f"line {lineno}: expected {want} values per vertex, got {len(tokens)}"
                )
            try:
                vals = [float(t) for t in tokens[:3]]
            except ValueError:
                raise PlyError(f"line {lineno}: bad coordinate in {data_lines[i]!r}") from None
            pos[i] = np.asarray(vals, dtype=np.float32).astype(np.float64)
            if has_colors:
                try:
                    cols = [int(t) for t in tokens[3:]]
                except ValueError:
                    raise PlyError(f"line {lineno}: bad color in {data_lines[i]!r}") from None
                if any(c < 0 or c > 255 for c in cols):
                    raise PlyError(f"line {lineno}: color out of range in {data_lines[i]!r}")
                rgb[i] = cols
        features = rgb / 255.0 if has_colors else np.ones((n, 3))
    else:
        dtype = [("x", "<f4"), ("y", "<f4"), ("z", "<f4")]
        if has_colors:
            dtype += [("red", "u1"), ("green", "u1"), ("blue", "u1")]
        stride = 15 if has_colors else 12
        payload = raw[header_bytes:]
        if len(payload) < n * stride:
            raise PlyError(
                f"vertex payload truncated: need {n * stride} bytes, have {len(payload)}"
            )
        if len(payload) > n * stride:
            raise PlyError(
                f"trailing data after vertex payload ({len(payload) - n * stride} bytes)"
            )
        rec = np.frombuffer(payload, dtype=dtype, count=n)
        pos = np.stack(
            [rec["x"], rec["y"], rec["z"]], axis=1
        ).astype(np.float64)
        if has_colors:
            features = np.stack(
                [rec["red"], rec["green"], rec["blue"]], axis=1
            ).astype(np.float64) / 255.0
        else:
            features = np.ones((n, 3))

    if not np.all(np.isfinite(pos)):
        raise PlyError("cloud contains non-finite coordinates")
    return PointCloud(pos, features)


# ---------------------------------------------------------------------------
# PPM (P6) / PGM (P5) images.
# ---------------------------------------------------------------------------


def write_image(path: str | Path, image: np.ndarray) -> None:
    """Write an image as binary PPM (color) or PGM (grayscale).

    (h, w, 3) arrays are treated as colors in [0, 1]: clamped, scaled to
    0..255, and written as P6. (h, w) arrays are treated as measurements
    (e.g. depth with +inf background): non-finite values become 0, the rest
    min-max normalize to 0..255, written as P5. A constant image writes as
    all zeros.
    """
    path = Path(path)
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 3 and img.shape[2] == 3:
        data = np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
        magic = b"P6"
    elif img.ndim == 2:
        vals = np.where(np.isfinite(img), img, 0.0)
        lo, hi = float(vals.min()), float(vals.max())
        if hi > lo:
            norm = (vals - lo) / (hi - lo)
        else:
            norm = np.zeros_like(vals)
        data = np.rint(norm * 255.0).astype(np.uint8)
        magic = b"P5"
    else:
        raise ValueError(f"image must be (h, w) or (h, w, 3), got shape {img.shape}")
    h, w = img.shape[0], img.shape[1]
    path.write_bytes(magic + f"\n{w} {h}\n255\n".encode("ascii") + data.tobytes())


# ---------------------------------------------------------------------------
# Raw tensor files: magic PSTN, version, rank, dims, dtype tag, payload.
# ---------------------------------------------------------------------------

_TENSOR_MAGIC = b"PSTN"
_TENSOR_VERSION = 1
_DTYPE_F32 = 1


def write_tensor(path: str | Path, array: np.ndarray) -> None:
    """Write an array as a raw little-endian float32 tensor file.

    Layout: magic "PSTN", version byte, rank byte, rank u32 little-endian
    dims, a dtype tag byte (1 = float32), then the row-major payload.
    """
    arr = np.ascontiguousarray(array, dtype="<f4")
    if arr.ndim < 1 or arr.ndim > 255:
        raise ValueError(f"tensor rank must be 1..255, got {arr.ndim}")
    if any(d >= 1 << 32 for d in arr.shape):
        raise ValueError("tensor dimensions must fit in 32 bits")
    header = bytearray(_TENSOR_MAGIC)
    header.append(_TENSOR_VERSION)
    header.append(arr.ndim)
    header += np.asarray(arr.shape, dtype="<u4").tobytes()
    header.append(_DTYPE_F32)
    Path(path).write_bytes(bytes(header) + arr.tobytes())


def read_tensor(path: str | Path) -> np.ndarray:
    """Read a tensor file back as a float32 array."""
    raw = Path(path).read_bytes()
    if len(raw) < 6:
        raise TensorFileError("file too short for a tensor header")
    if raw[:4] != _TENSOR_MAGIC:
        raise TensorFileError(f"bad magic {raw[:4]!r}, expected {_TENSOR_MAGIC!r}")
    version, rank = raw[4], raw[5]
    if version != _TENSOR_VERSION:
        raise TensorFileError(f"unsupported version {version}")
    if rank < 1:
        raise TensorFileError("tensor rank must be >= 1")
    dims_end = 6 + 4 * rank
    if len(raw) < dims_end + 1:
        raise TensorFileError("file too short for the declared rank")
    dims = tuple(int(d) for d in np.frombuffer(raw[6:dims_end], dtype="<u4"))
    tag = raw[dims_end]
    if tag != _DTYPE_F32:
        raise TensorFileError(f"unsupported dtype tag {tag}")
    count = 1
    for d in dims:
        count *= d
    payload = raw[dims_end + 1 :]
    if len(payload) != 4 * count:
        raise TensorFileError(
            f"payload has {len(payload)} bytes, expected {4 * count} for shape {dims}"
        )
    return np.frombuffer(payload, dtype="<f4").reshape(dims).copy()


# ---------------------------------------------------------------------------
# Scene configuration (key = value lines) and trajectory logs.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SceneConfig:
    """A renderable scene: cloud file, workspace cube, rig and splat knobs."""

    cloud_path: Path
    center: tuple[float, float, float]
    side: float
    views: tuple[str, ...] = ("front", "top", "right")
    image_size: int = 224
    projection: str = "orthographic"
    radius: float = 0.0
    max_px: int = 5
    zoom: float = 4.0
    coarse_resolution: int = 32
    fine_resolution: int = 32
    seed: int = 0


_SCENE_KEYS = {
    "cloud",
    "center",
    "side",
    "views",
    "image_size",
    "projection",
    "radius",
    "max_px",
    "zoom",
    "coarse_resolution",
    "fine_resolution",
    "seed",
}


def _parse_floats(raw: str, count: int, lineno: int, key: str) -> tuple[float, ...]:
    parts = [p.strip() for p in raw.split(",")]
    if len(parts) != count:
        raise ConfigError(f"line {lineno}: {key} needs {count} comma-separated values")
    try:
        vals = tuple(float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"line {lineno}: bad number in {key} = {raw!r}") from None
    if not all(math.isfinite(v) for v in vals):
        raise ConfigError(f"line {lineno}: {key} must be finite")
    return vals


def load_scene_config(path: str | Path) -> SceneConfig:
    """Parse a key = value scene file.

    Lines are ``key = value``; blank lines and # comments are skipped.
    Unknown keys are errors. Required keys: cloud, center (x,y,z), side.
    The cloud path resolves relative to the config file's directory.
    ``image_size`` is a single integer; images are square.
    """
    path = Path(path)
    values: dict[str, tuple[str, int]] = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, raw = body.partition("=")
        key, raw = key.strip(), raw.strip()
        if key not in _SCENE_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        if not raw:
            raise ConfigError(f"line {lineno}: empty value for {key!r}")
        values[key] = (raw, lineno)

    for required in ("cloud", "center", "side"):
        if required not in values:
            raise ConfigError(f"missing required key {required!r}")

    def take(key: str) -> tuple[str, int] | None:
        return values.get(key)

    raw, lineno = values["cloud"]
    cloud_path = (path.parent / raw).resolve() if not Path(raw).is_absolute() else Path(raw)
    if not cloud_path.is_file():
        raise ConfigError(f"line {lineno}: cloud file does not exist: {cloud_path}")

    raw, lineno = values["center"]
    center = _parse_floats(raw, 3, lineno, "center")

    raw, lineno = values["side"]
    (side,) = _parse_floats(raw, 1, lineno, "side")
    if side <= 0:
        raise ConfigError(f"line {lineno}: side must be positive")

    kwargs: dict = {}
    if (item := take("views")) is not None:
        raw, lineno = item
        views = tuple(v.strip() for v in raw.split(","))
        if not all(views):
            raise ConfigError(f"line {lineno}: empty view name in {raw!r}")
        kwargs["views"] = views
    if (item := take("image_size")) is not None:
        raw, lineno = item
        try:
            size = int(raw)
        except ValueError:
            raise ConfigError(f"line {lineno}: image_size must be an integer") from None
        if size < 2:
            raise ConfigError(f"line {lineno}: image_size must be >= 2")
        kwargs["image_size"] = size
    if (item := take("projection")) is not None:
        raw, lineno = item
        if raw not in ("orthographic", "pinhole"):
            raise ConfigError(f"line {lineno}: unknown projection {raw!r}")
        kwargs["projection"] = raw
    if (item := take("radius")) is not None:
        raw, lineno = item
        (radius,) = _parse_floats(raw, 1, lineno, "radius")
        if radius < 0:
            raise ConfigError(f"line {lineno}: radius must be >= 0")
        kwargs["radius"] = radius
    if (item := take("max_px")) is not None:
        raw, lineno = item
        try:
            max_px = int(raw)
        except ValueError:
            raise ConfigError(f"line {lineno}: max_px must be an integer") from None
        if max_px < 1:
            raise ConfigError(f"line {lineno}: max_px must be >= 1")
        kwargs["max_px"] = max_px
    if (item := take("zoom")) is not None:
        raw, lineno = item
        (zoom,) = _parse_floats(raw, 1, lineno, "zoom")
        if zoom < 1.0:
            raise ConfigError(f"line {lineno}: zoom must be >= 1")
        kwargs["zoom"] = zoom
    for key in ("coarse_resolution", "fine_resolution"):
        if (item := take(key)) is not None:
            raw, lineno = item
            try:
                res = int(raw)
            except ValueError:
                raise ConfigError(f"line {lineno}: {key} must be an integer") from None
            if res < 1:
                raise ConfigError(f"line {lineno}: {key} must be >= 1")
            kwargs[key] = res
    if (item := take("seed")) is not None:
        raw, lineno = item
        try:
            kwargs["seed"] = int(raw)
        except ValueError:
            raise ConfigError(f"line {lineno}: seed must be an integer") from None

    return SceneConfig(cloud_path=cloud_path, center=center, side=side, **kwargs)


def load_trajectory(path: str | Path) -> TrajectoryLog:
    """Parse a trajectory log.

    Each data line is ``t x y z qw qx qy qz open`` with integer t, floats
    for position and quaternion, and open in {0, 1}. Blank lines and #
    comments are skipped.
    """
    path = Path(path)
    ts: list[int] = []
    pos: list[list[float]] = []
    quat: list[list[float]] = []
    grip: list[bool] = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        tokens = body.split()
        if len(tokens) != 9:
            raise ConfigError(
                f"line {lineno}: expected 9 fields (t x y z qw qx qy qz open), "
                f"got {len(tokens)}"
            )
        try:
            t = int(tokens[0])
            nums = [float(tok) for tok in tokens[1:8]]
        except ValueError:
            raise ConfigError(f"line {lineno}: bad number in {line!r}") from None
        if tokens[8] not in ("0", "1"):
            raise ConfigError(f"line {lineno}: open must be 0 or 1, got {tokens[8]!r}")
        ts.append(t)
        pos.append(nums[0:3])
        quat.append(nums[3:7])
        grip.append(tokens[8] == "1")
    try:
        return TrajectoryLog(
            np.asarray(ts, dtype=np.int64),
            np.asarray(pos, dtype=np.float64).reshape(len(ts), 3),
            np.asarray(quat, dtype=np.float64).reshape(len(ts), 4),
            np.asarray(grip, dtype=bool),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def write_report(path: str | Path, payload: dict) -> None:
    """Write a versioned JSON report: {"v": 1, ...payload}."""
    doc = {"v": 1, **payload}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
