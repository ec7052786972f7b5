"""Depth slicing, per-layer patch scale, layer counts and occlusion masks.

Layer ``i`` (1-based) sits at depth ``i * d_step``. A base pixel maps to a
``p_i x p_i`` block of the layer raster, with ``p_i = min(i, p_max)`` so that
farther layers are averaged over larger areas.

All depth comparisons are made against the products ``i * d_step`` as
floats, so that ``layer_count`` and ``build_mask`` agree exactly even when
``d / d_step`` is not representable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scene_io import DepthMap


@dataclass(frozen=True)
class SliceConfig:
    d_step: float
    d_max: float
    p_max: int = 8

    def __post_init__(self):
        if not (self.d_step > 0 and math.isfinite(self.d_step)):
            raise ValueError(f"d_step must be positive and finite, got {self.d_step}")
        if not (self.d_max >= 0 and math.isfinite(self.d_max)):
            raise ValueError(f"d_max must be finite and >= 0, got {self.d_max}")
        if int(self.p_max) != self.p_max or self.p_max < 1:
            raise ValueError(f"p_max must be an integer >= 1, got {self.p_max}")

    @classmethod
    def for_depth(cls, depth: DepthMap, d_step: float, p_max: int = 8,
                  truncate: float | None = None) -> "SliceConfig":
        d_max = depth.max_depth if truncate is None else min(depth.max_depth, truncate)
        return cls(d_step=d_step, d_max=d_max, p_max=p_max)

    @property
    def k(self) -> int:
        """Number of slices: the smallest k with k * d_step >= d_max."""
        k = math.ceil(self.d_max / self.d_step)
        while k > 0 and (k - 1) * self.d_step >= self.d_max:
            k -= 1
        while k * self.d_step < self.d_max:
            k += 1
        return k


@dataclass(frozen=True)
class LayerGeometry:
    index: int
    depth: float
    patch: int
    base_height: int
    base_width: int

    def __post_init__(self):
        if self.index < 1 or self.patch < 1:
            raise ValueError("layer index and patch size must be >= 1")

    @property
    def height(self) -> int:
        return self.base_height * self.patch

    @property
    def width(self) -> int:
        return self.base_width * self.patch

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def patch_origin(self, row: int, col: int) -> tuple[int, int]:
        return (row * self.patch, col * self.patch)


@dataclass(frozen=True)
class RainMask:
    geometry: LayerGeometry
    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.uint8)
        if arr.shape != self.geometry.shape:
            raise ValueError(f"mask shape {arr.shape} does not match layer {self.geometry.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)


def patch_size(index: int, p_max: int) -> int:
    return min(index, p_max)


def layer_geometry(index: int, cfg: SliceConfig, base_shape: tuple[int, int]) -> LayerGeometry:
    h, w = base_shape
    return LayerGeometry(index, index * cfg.d_step, patch_size(index, cfg.p_max), h, w)


def slice_geometries(cfg: SliceConfig, base_shape: tuple[int, int]) -> list[LayerGeometry]:
    return [layer_geometry(i, cfg, base_shape) for i in range(1, cfg.k + 1)]


def layer_count(d, cfg: SliceConfig):
    """floor(d / d_step) clamped to [0, k]; works on scalars and arrays.

    The result satisfies ``n * d_step <= d < (n + 1) * d_step`` in float
    arithmetic (before the clamp), so a pixel whose depth equals a layer
    depth counts that layer, and the mask for it is zero.
    """
    d_arr = np.asarray(d, dtype=np.float64)
    if np.any(d_arr < 0):
        raise ValueError("depth must be >= 0")
    step = cfg.d_step
    n = np.floor(d_arr / step)
    n = np.where((n + 1) * step <= d_arr, n + 1, n)
    n = np.where((n > 0) & (n * step > d_arr), n - 1, n)
    n = np.clip(n, 0, cfg.k).astype(np.int64)
    return int(n) if n.ndim == 0 else n


def visible(depth: DepthMap, geom: LayerGeometry) -> np.ndarray:
    """Base-resolution boolean map of pixels not occluding this layer."""
    if depth.shape != (geom.base_height, geom.base_width):
        raise ValueError(
            f"depth map {depth.shape} does not match layer base {(geom.base_height, geom.base_width)}"
        )
    return depth.data > geom.depth


def build_mask(depth: DepthMap, geom: LayerGeometry) -> RainMask:
    vis = visible(depth, geom).astype(np.uint8)
    p = geom.patch
    return RainMask(geom, np.kron(vis, np.ones((p, p), dtype=np.uint8)))
