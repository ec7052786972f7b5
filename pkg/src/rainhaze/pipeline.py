"""End-to-end rain synthesis from a clear image and its depth map."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import _raster
from .fusion import ClampStats, FusionParams, IntensityField, _finish, fuse_rain_raw
from .layering import LayerGeometry, SliceConfig, layer_count, slice_geometries, visible
from .scene_io import ClearImage, DepthMap, GrayRaster, check_pair
from .streaks import (KernelRuns, RainKernelParams, StreakProcessParams, as_runs,
                      raster_order, render_layer, sample_points)

DEFAULT_D_STEP = 0.5
DEFAULT_P_MAX = 8
DEFAULT_TRUNCATE = 100.0


@dataclass(frozen=True)
class RainParams:
    """Everything needed to reproduce one unified-model synthesis."""

    mu: float
    length: float
    width: float
    direction: float
    A: float
    alpha: float
    seed: int
    d_step: float = DEFAULT_D_STEP
    p_max: int = DEFAULT_P_MAX
    truncate: float | None = DEFAULT_TRUNCATE

    def __post_init__(self):
        # validate eagerly so bad bundles fail before any rendering
        self.kernel
        self.fusion
        StreakProcessParams(self.mu, self.seed, 1)

    @property
    def kernel(self) -> RainKernelParams:
        return RainKernelParams(self.length, self.width, self.direction)

    @property
    def fusion(self) -> FusionParams:
        return FusionParams(alpha=self.alpha, A=self.A)

    def process(self, layer_index: int) -> StreakProcessParams:
        return StreakProcessParams(self.mu, self.seed, layer_index)

    def slice_config(self, depth: DepthMap) -> SliceConfig:
        return SliceConfig.for_depth(depth, self.d_step, self.p_max, self.truncate)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RainParams":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


def _any_in_rect(sat: np.ndarray, r0, r1, c0, c1) -> np.ndarray:
    """Whether any cell in [r0, r1] x [c0, c1] is set, from a summed-area table."""
    total = sat[r1 + 1, c1 + 1] - sat[r0, c1 + 1] - sat[r1 + 1, c0] + sat[r0, c0]
    return total > 0


def masked_intensity(depth: DepthMap, geom: LayerGeometry, proc: StreakProcessParams,
                     kern: RainKernelParams | KernelRuns) -> IntensityField:
    """Rain intensity of one layer, rendering only where the layer is visible.

    Equal bit for bit to ``rain_intensity(render_layer(...), build_mask(...))``:
    impulses whose footprint touches no visible patch are skipped and the
    raster is only allocated over the band of rows that has visible pixels.
    """
    vis = visible(depth, geom)
    q = np.zeros(vis.shape)
    rows_any = np.flatnonzero(vis.any(axis=1))
    if rows_any.size == 0 or proc.mu == 0:
        return IntensityField(geom.index, q)
    runs = as_runs(kern)
    p = geom.patch
    bh, bw = vis.shape
    points = sample_points(geom, proc)
    if len(points):
        rows, cols = raster_order(points, geom.width)
        (dr0, dr1), (dc0, dc1) = runs.row_span, runs.col_span
        r0 = np.clip((rows + dr0) // p, 0, bh - 1)
        r1 = np.clip((rows + dr1) // p, 0, bh - 1)
        c0 = np.clip((cols + dc0) // p, 0, bw - 1)
        c1 = np.clip((cols + dc1) // p, 0, bw - 1)
        sat = np.zeros((bh + 1, bw + 1), dtype=np.int64)
        sat[1:, 1:] = vis.cumsum(axis=0).cumsum(axis=1)
        keep = _any_in_rect(sat, r0, r1, c0, c1)
        rows, cols = rows[keep], cols[keep]
    else:
        rows = cols = np.zeros(0, dtype=np.int64)
    lo, hi = int(rows_any[0]), int(rows_any[-1]) + 1
    buf = np.zeros(((hi - lo) * p, geom.width), dtype=np.float32)
    _raster.stamp_runs(buf, lo * p, rows, cols, runs.dr, runs.dc, runs.start,
                       runs.length, runs.values)
    q[lo:hi] = _raster.patch_mean(buf, p, vis[lo:hi])
    return IntensityField(geom.index, q)


def rain_intensities(depth: DepthMap, params: RainParams, workers: int = 1) -> list[IntensityField]:
    """Intensity fields for every layer any pixel can see, nearest first."""
    cfg = params.slice_config(depth)
    needed = int(layer_count(cfg.d_max, cfg))
    geoms = slice_geometries(cfg, depth.shape)[:needed]
    runs = as_runs(params.kernel)

    def one(g: LayerGeometry) -> IntensityField:
        return masked_intensity(depth, g, params.process(g.index), runs)

    if workers > 1 and len(geoms) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, geoms))
    return [one(g) for g in geoms]


def synthesize_raw(B: ClearImage, depth: DepthMap, params: RainParams, workers: int = 1) -> np.ndarray:
    check_pair(B, depth)
    q = rain_intensities(depth, params, workers)
    return fuse_rain_raw(B, depth, q, params.fusion, params.slice_config(depth))


def synthesize(B: ClearImage, depth: DepthMap, params: RainParams, workers: int = 1,
               stats: ClampStats | None = None) -> ClearImage:
    """Render a rainy version of ``B`` with the depth-aware unified model."""
    return _finish(synthesize_raw(B, depth, params, workers), stats)


def legacy_layers(shape: tuple[int, int], params: RainParams, count: int) -> list[GrayRaster]:
    """Base-resolution streak layers (patch size 1) for the legacy models."""
    h, w = shape
    out = []
    for i in range(1, count + 1):
        geom = LayerGeometry(i, i * params.d_step, 1, h, w)
        out.append(GrayRaster(render_layer(geom, params.process(i), params.kernel).data))
    return out
