"""Rain-streak layers: Poisson impulses convolved with a rain kernel.

Each layer draws from its own random stream, keyed by a 64-bit mix of the
master seed and the layer index, so layers can be rendered in any order or
concurrently with identical results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _raster
from .layering import LayerGeometry
from .scene_io import GrayRaster

MASK64 = (1 << 64) - 1
SUPERSAMPLE = 4


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def mix64(*words: int) -> int:
    """Fold integers into one 64-bit seed with splitmix64 steps."""
    h = 0
    for w in words:
        h = _splitmix64(h ^ (int(w) & MASK64))
    return h


@dataclass(frozen=True)
class RainKernelParams:
    """Streak length, stroke width (layer pixels) and tilt from vertical (degrees)."""

    length: float
    width: float
    direction: float = 0.0

    def __post_init__(self):
        if not (self.length > 0 and self.width > 0):
            raise ValueError("streak length and width must be positive")
        if not (math.isfinite(self.length) and math.isfinite(self.width)):
            raise ValueError("streak length and width must be finite")
        if self.width > self.length:
            raise ValueError(f"streak width {self.width} exceeds length {self.length}")
        if not -90.0 <= self.direction <= 90.0:
            raise ValueError(f"direction must be in [-90, 90] degrees, got {self.direction}")


@dataclass(frozen=True)
class StreakProcessParams:
    mu: float
    seed: int
    layer_index: int

    def __post_init__(self):
        if not (self.mu >= 0 and math.isfinite(self.mu)):
            raise ValueError(f"mu must be finite and >= 0, got {self.mu}")


@dataclass(frozen=True)
class StreakLayer:
    geometry: LayerGeometry
    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.shape != self.geometry.shape:
            raise ValueError(f"layer shape {arr.shape} does not match {self.geometry.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)


@dataclass(frozen=True)
class KernelRuns:
    """Row-wise run-length form of a kernel, offsets relative to its anchor."""

    dr: np.ndarray
    dc: np.ndarray
    start: np.ndarray
    length: np.ndarray
    values: np.ndarray

    @property
    def row_span(self) -> tuple[int, int]:
        return int(self.dr.min()), int(self.dr.max())

    @property
    def col_span(self) -> tuple[int, int]:
        return int(self.dc.min()), int((self.dc + self.length).max() - 1)


def _kernel_side(p: RainKernelParams) -> int:
    theta = math.radians(p.direction)
    c, s = abs(math.cos(theta)), abs(math.sin(theta))
    extent = max(0.5 * p.length * c + 0.5 * p.width * s,
                 0.5 * p.length * s + 0.5 * p.width * c)
    n = math.ceil(p.length) + 2
    # grow in steps of 2 to keep the centre where it was
    while extent > n / 2:
        n += 2
    return n


def coverage(length: float, width: float, direction: float, n: int) -> np.ndarray:
    """Fraction of 4x4 sub-samples per pixel inside the rotated rectangle.

    The rectangle is centred in an n x n grid; direction is measured from
    the vertical (row) axis.
    """
    theta = math.radians(direction)
    ct, st = math.cos(theta), math.sin(theta)
    sub = (np.arange(n * SUPERSAMPLE) + 0.5) / SUPERSAMPLE - n / 2
    y = sub[:, None]
    x = sub[None, :]
    along = np.abs(y * ct + x * st)
    across = np.abs(x * ct - y * st)
    inside = (along <= length / 2) & (across <= width / 2)
    counts = inside.reshape(n, SUPERSAMPLE, n, SUPERSAMPLE).sum(axis=(1, 3))
    return counts / float(SUPERSAMPLE * SUPERSAMPLE)


def rasterize_kernel(p: RainKernelParams) -> GrayRaster:
    n = _kernel_side(p)
    cov = coverage(p.length, p.width, p.direction, n)
    peak = cov.max()
    if peak == 0:
        # stroke thinner than the sub-sample spacing: fall back to a dot
        cov[n // 2, n // 2] = 1.0
        peak = 1.0
    return GrayRaster((cov / peak).astype(np.float32))


def kernel_runs(kernel: GrayRaster) -> KernelRuns:
    k = np.asarray(kernel.data, dtype=np.float32)
    n_rows, n_cols = k.shape
    anchor_r, anchor_c = n_rows // 2, n_cols // 2
    dr, dc, start, length, chunks = [], [], [], [], []
    offset = 0
    for r in range(n_rows):
        nz = np.flatnonzero(k[r])
        if nz.size == 0:
            continue
        lo, hi = nz[0], nz[-1] + 1
        dr.append(r - anchor_r)
        dc.append(lo - anchor_c)
        start.append(offset)
        length.append(hi - lo)
        chunks.append(k[r, lo:hi])
        offset += hi - lo
    as_i64 = lambda v: np.asarray(v, dtype=np.int64)
    return KernelRuns(as_i64(dr), as_i64(dc), as_i64(start), as_i64(length),
                      np.concatenate(chunks).astype(np.float32))


def layer_rng(seed: int, layer_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(mix64(seed, layer_index)))


def sample_points(geom: LayerGeometry, proc: StreakProcessParams) -> np.ndarray:
    """Poisson(mu * pixels) impulse positions as an (N, 2) array of (row, col)."""
    rng = layer_rng(proc.seed, proc.layer_index)
    h, w = geom.shape
    count = rng.poisson(proc.mu * h * w) if proc.mu > 0 else 0
    rows = rng.integers(0, h, size=count, dtype=np.int64)
    cols = rng.integers(0, w, size=count, dtype=np.int64)
    return np.stack([rows, cols], axis=1)


def raster_order(points: np.ndarray, width: int) -> tuple[np.ndarray, np.ndarray]:
    """Rows and cols sorted row-major; the stamping order for a layer."""
    lin = np.sort(points[:, 0] * width + points[:, 1])
    return lin // width, lin % width


def render_layer(geom: LayerGeometry, proc: StreakProcessParams,
                 kern: RainKernelParams | GrayRaster | KernelRuns) -> StreakLayer:
    """Stamp the kernel at every sampled impulse and clamp to [0, 1]."""
    runs = as_runs(kern)
    h, w = geom.shape
    buf = np.zeros((h, w), dtype=np.float32)
    points = sample_points(geom, proc)
    if len(points):
        rows, cols = raster_order(points, w)
        _raster.stamp_runs(buf, 0, rows, cols, runs.dr, runs.dc, runs.start,
                           runs.length, runs.values)
        np.minimum(buf, 1.0, out=buf)
    return StreakLayer(geom, buf)


def as_runs(kern: RainKernelParams | GrayRaster | KernelRuns) -> KernelRuns:
    if isinstance(kern, KernelRuns):
        return kern
    if isinstance(kern, RainKernelParams):
        kern = rasterize_kernel(kern)
    return kernel_runs(kern)
