"""Rain intensities, depth-aware rain fusion, haze, and the legacy models.

The unified model attenuates the background through every streak layer in
front of a pixel and adds each layer's own emission, attenuated by the
layers ahead of it::

    R = B * prod_i (1 - a q_i) + sum_i A a q_i prod_{j<i} (1 - a q_j)

It is evaluated in one front-to-back pass keeping the running transmittance.
Every model clamps once, at the end; the ``*_raw`` variants return the
pre-clamp values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _raster
from .layering import RainMask, SliceConfig, layer_count
from .scene_io import ClearImage, DepthMap, GrayRaster, check_pair
from .streaks import StreakLayer

# pre-clamp excursions beyond this are reported; rounding noise is not
CLAMP_SLACK = 1e-12


@dataclass(frozen=True)
class FusionParams:
    alpha: float
    A: float

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if not 0.0 <= self.A <= 1.0:
            raise ValueError(f"A must be in [0, 1], got {self.A}")


@dataclass(frozen=True)
class HazeParams:
    beta: float
    A: float

    def __post_init__(self):
        if not (self.beta >= 0 and math.isfinite(self.beta)):
            raise ValueError(f"beta must be finite and >= 0, got {self.beta}")
        if not 0.0 <= self.A <= 1.0:
            raise ValueError(f"A must be in [0, 1], got {self.A}")


@dataclass(frozen=True)
class IntensityField:
    layer_index: int
    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError("intensity field must be 2-D")
        if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
            raise ValueError("rain intensity must lie in [0, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)


class ClampStats:
    """Counts output values the final clamp had to move."""

    def __init__(self):
        self.activations = 0

    def record(self, raw: np.ndarray) -> None:
        self.activations += int(np.count_nonzero((raw < -CLAMP_SLACK) | (raw > 1.0 + CLAMP_SLACK)))


def _finish(raw: np.ndarray, stats: ClampStats | None) -> ClearImage:
    if stats is not None:
        stats.record(raw)
    return ClearImage(np.clip(raw, 0.0, 1.0))


def rain_intensity(layer: StreakLayer, mask: RainMask) -> IntensityField:
    """Box-filter the masked layer down to base resolution."""
    g = layer.geometry
    if mask.geometry.shape != g.shape or mask.geometry.patch != g.patch:
        raise ValueError("streak layer and mask geometries differ")
    masked = layer.data * mask.data
    everywhere = np.ones((g.base_height, g.base_width), dtype=np.bool_)
    return IntensityField(g.index, _raster.patch_mean(masked, g.patch, everywhere))


def transmittance_emission(aq_layers, shape, k: np.ndarray | None = None):
    """Front-to-back pass over per-layer attenuations ``alpha * q_i``.

    ``aq_layers`` yields one array of ``shape`` per layer, nearest first.
    ``k`` gives the number of layers that apply at each site (all of them
    when omitted). Returns ``(T, E)`` with ``T = prod (1 - aq_i)`` and
    ``E = sum aq_i prod_{j<i} (1 - aq_j)``; E is not yet scaled by the
    atmospheric light.
    """
    T = np.ones(shape)
    E = np.zeros(shape)
    for i, aq in enumerate(aq_layers):
        step = np.asarray(aq, dtype=np.float64)
        if k is not None:
            step = np.where(k > i, step, 0.0)
        E += step * T
        T *= 1.0 - step
    return T, E


def _attenuations(q: Sequence[IntensityField], count: int, shape, alpha: float):
    for i in range(count):
        field = q[i]
        if field.layer_index != i + 1:
            raise ValueError(f"intensity field {i} is for layer {field.layer_index}, expected {i + 1}")
        if field.data.shape != shape:
            raise ValueError("intensity field does not match the image size")
        yield alpha * field.data


def fuse_rain_raw(B: ClearImage, depth: DepthMap, q: Sequence[IntensityField],
                  fp: FusionParams, cfg: SliceConfig) -> np.ndarray:
    check_pair(B, depth)
    k = layer_count(depth.data, cfg)
    needed = int(k.max(initial=0))
    if len(q) < needed:
        raise ValueError(f"{len(q)} intensity layers supplied but {needed} are needed")
    T, E = transmittance_emission(_attenuations(q, needed, B.shape, fp.alpha), B.shape, k)
    return B.data * T[..., None] + (fp.A * E)[..., None]


def fuse_rain(B: ClearImage, depth: DepthMap, q: Sequence[IntensityField],
              fp: FusionParams, cfg: SliceConfig, stats: ClampStats | None = None) -> ClearImage:
    return _finish(fuse_rain_raw(B, depth, q, fp, cfg), stats)


def transmission(depth: DepthMap, beta: float) -> np.ndarray:
    return np.exp(-beta * depth.data)


def asm_haze(B: ClearImage, depth: DepthMap, hp: HazeParams,
             stats: ClampStats | None = None) -> ClearImage:
    check_pair(B, depth)
    t = transmission(depth, hp.beta)[..., None]
    return _finish(B.data * t + hp.A * (1.0 - t), stats)


def homogeneous_transmittance(d, beta: float, d_step: float):
    """(1 - beta d_step)^floor(d / d_step), the discrete analogue of exp(-beta d)."""
    if not d_step > 0:
        raise ValueError(f"d_step must be positive, got {d_step}")
    if beta * d_step >= 1.0:
        raise ValueError(
            f"beta * d_step = {beta * d_step:g} >= 1: each slice would block all light"
        )
    d_arr = np.asarray(d, dtype=np.float64)
    cfg = SliceConfig(d_step=d_step, d_max=float(d_arr.max(initial=0.0)))
    return (1.0 - beta * d_step) ** layer_count(d_arr, cfg)


def homogeneous_discrete(B: ClearImage, depth: DepthMap, hp: HazeParams, d_step: float,
                         stats: ClampStats | None = None) -> ClearImage:
    check_pair(B, depth)
    T = homogeneous_transmittance(depth.data, hp.beta, d_step)[..., None]
    return _finish(B.data * T + hp.A * (1.0 - T), stats)


def _check_streaks(B: ClearImage, rasters: Sequence[GrayRaster]) -> np.ndarray:
    total = np.zeros(B.shape)
    for s in rasters:
        if s.shape != B.shape:
            raise ValueError(f"streak raster {s.shape} does not match image {B.shape}")
        total = total + s.data
    return total


def legacy_additive(B: ClearImage, S: GrayRaster, stats: ClampStats | None = None) -> ClearImage:
    S_total = _check_streaks(B, [S])
    return _finish(B.data + S_total[..., None], stats)


def legacy_multilayer(B: ClearImage, layers: Sequence[GrayRaster],
                      stats: ClampStats | None = None) -> ClearImage:
    S_total = _check_streaks(B, layers)
    return _finish(B.data + S_total[..., None], stats)


def legacy_haze_first(B: ClearImage, depth: DepthMap, hp: HazeParams, S: GrayRaster,
                      stats: ClampStats | None = None) -> ClearImage:
    check_pair(B, depth)
    S_total = _check_streaks(B, [S])
    t = transmission(depth, hp.beta)[..., None]
    return _finish(B.data * t + hp.A * (1.0 - t) + S_total[..., None], stats)


def legacy_rain_first(B: ClearImage, depth: DepthMap, hp: HazeParams,
                      layers: Sequence[GrayRaster], stats: ClampStats | None = None) -> ClearImage:
    check_pair(B, depth)
    S_total = _check_streaks(B, layers)
    t = transmission(depth, hp.beta)[..., None]
    return _finish((B.data + S_total[..., None]) * t + hp.A * (1.0 - t), stats)


def limit_table(beta: float, d: float, steps) -> list[dict]:
    """Discrete vs continuous transmittance for a sequence of slice steps.

    ``order`` is the observed convergence order against the previous
    accepted row; rows with ``beta * d_step >= 1`` are marked rejected.
    """
    t = math.exp(-beta * d)
    rows = []
    prev = None
    for h in steps:
        row = {"d_step": h, "discrete_T": None, "asm_t": t, "abs_err": None,
               "order": None, "status": "ok"}
        try:
            T = float(homogeneous_transmittance(d, beta, h))
        except ValueError as exc:
            row["status"] = f"rejected: {exc}"
            rows.append(row)
            continue
        err = abs(T - t)
        row.update(discrete_T=T, abs_err=err)
        if prev is not None and prev[1] > 0 and err > 0 and prev[0] != h:
            row["order"] = math.log(prev[1] / err) / math.log(prev[0] / h)
        prev = (h, err)
        rows.append(row)
    return rows
