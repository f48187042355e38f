"""Convex combination upsampling of coarse feature grids.

Each fine pixel is a convex combination of the 3x3 coarse neighborhood
around its parent cell. Weight index k = (dy + 1) * 3 + (dx + 1) for the
offset (dy, dx) in {-1, 0, 1}^2; neighborhoods clamp at grid edges.

The hot loop allocates its float64 work buffers through :func:`_alloc` so
tests can meter peak usage: the (h, w, C) output, one (h, gw) row-gather
buffer, and one (h, w) tap buffer, all reused across the 9 taps. The rest
is np.take with an out= target plus in-place multiply-accumulate; only
O(h + w) index vectors live outside the metered set.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class CoarseFeatureGrid:
    """A (gh, gw, C) float64 feature grid at coarse resolution."""

    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 3:
            raise ValueError(f"grid must be (gh, gw, C), got shape {vals.shape}")
        if 0 in vals.shape:
            raise ValueError("grid dimensions must be positive")
        object.__setattr__(self, "values", vals)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def n_channels(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class ConvexWeights:
    """Per-fine-pixel 3x3 mixing weights, shape (h, w, 9).

    Weights must be nonnegative and each pixel's 9 weights must sum to 1
    within 1e-6. Use :func:`normalize_to_convex` to produce them from raw
    logits.
    """

    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 3 or vals.shape[2] != 9:
            raise ValueError(f"weights must be (h, w, 9), got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("weights must be finite")
        if vals.size and float(vals.min()) < 0:
            raise ValueError("weights must be >= 0")
        totals = vals.sum(axis=2)
        err = float(np.abs(totals - 1.0).max()) if vals.size else 0.0
        if err > 1e-6:
            raise ValueError(f"weights must sum to 1 per pixel (max |sum-1| = {err:g})")
        object.__setattr__(self, "values", vals)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


_allocation_hook: Callable[[int], None] | None = None


def set_allocation_hook(hook: Callable[[int], None] | None) -> None:
    """Install a callback receiving the byte size of each work buffer.

    Test instrumentation only; pass None to remove.
    """
    global _allocation_hook
    _allocation_hook = hook


def _alloc(shape: tuple[int, ...]) -> np.ndarray:
    out = np.empty(shape, dtype=np.float64)
    if _allocation_hook is not None:
        _allocation_hook(out.nbytes)
    return out


def normalize_to_convex(logits: np.ndarray) -> ConvexWeights:
    """Softmax raw (h, w, 9) logits into valid convex weights.

    Max-subtracted for stability; an all-equal pixel (e.g. all zeros) maps
    to the uniform 1/9 stencil.
    """
    raw = np.asarray(logits, dtype=np.float64)
    if raw.ndim != 3 or raw.shape[2] != 9:
        raise ValueError(f"logits must be (h, w, 9), got shape {raw.shape}")
    if not np.all(np.isfinite(raw)):
        raise ValueError("logits must be finite")
    shifted = raw - raw.max(axis=2, keepdims=True)
    np.exp(shifted, out=shifted)
    shifted /= shifted.sum(axis=2, keepdims=True)
    return ConvexWeights(shifted)


def convex_upsample(
    grid: CoarseFeatureGrid, weights: ConvexWeights, factor: int = 14
) -> np.ndarray:
    """Upsample a coarse grid by an integer factor with per-pixel convex mixes.

    fine[y, x, c] = sum_k w[y, x, k] * grid[clamp(y//f + dy_k), clamp(x//f + dx_k), c]

    Weight shape must be exactly (gh * factor, gw * factor, 9). Returns a
    float64 (h, w, C) array. Constant grids reproduce the constant up to
    the weights' own rounding; exactly representable weights (one-hot,
    dyadic) reproduce it bit-for-bit.
    """
    f = int(factor)
    if f < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    gh, gw, nc = grid.values.shape
    h, w = gh * f, gw * f
    if weights.values.shape != (h, w, 9):
        raise ValueError(
            f"weights shape {weights.values.shape} does not match "
            f"({h}, {w}, 9) for a {gh}x{gw} grid upsampled {f}x"
        )

    # Tap k reads coarse cell (clamp(y//f + dy), clamp(x//f + dx)): a
    # separable gather, done as a row take then a column take.
    cy = np.arange(h) // f
    cx = np.arange(w) // f

    vals = grid.values
    wts = weights.values
    out = _alloc((h, w, nc))
    out[:] = 0.0
    buf_rows = _alloc((h, gw))
    buf = _alloc((h, w))
    for k in range(9):
        dy, dx = k // 3 - 1, k % 3 - 1
        ry = np.clip(cy + dy, 0, gh - 1)
        rx = np.clip(cx + dx, 0, gw - 1)
        for c in range(nc):
            np.take(vals[:, :, c], ry, axis=0, out=buf_rows)
            np.take(buf_rows, rx, axis=1, out=buf)
            np.multiply(buf, wts[:, :, k], out=buf)
            out[:, :, c] += buf
    return out
