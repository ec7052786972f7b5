"""Raster containers and PNG/PFM readers and writers.

Intensities are stored code values divided by the format's maximum code,
with no gamma or sRGB linearization. Depth is in meters.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ClearImage:
    """H x W x 3 RGB intensities in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"expected an H x W x 3 array, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("image must be at least 1 x 1")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image contains non-finite intensities")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError(
                f"intensities must lie in [0, 1], got [{arr.min():g}, {arr.max():g}]"
            )
        object.__setattr__(self, "data", _frozen(arr))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[:2]


@dataclass(frozen=True)
class DepthMap:
    """H x W scene depth in meters."""

    data: np.ndarray
    max_depth: float = field(init=False)

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"expected a non-empty H x W array, got shape {arr.shape}")
        bad = ~np.isfinite(arr)
        if bad.any():
            r, c = np.argwhere(bad)[0]
            raise ValueError(f"non-finite depth at pixel (row={r}, col={c})")
        if arr.min() < 0.0:
            r, c = np.unravel_index(np.argmin(arr), arr.shape)
            raise ValueError(f"negative depth {arr[r, c]:g} at pixel (row={r}, col={c})")
        object.__setattr__(self, "data", _frozen(arr))
        object.__setattr__(self, "max_depth", float(arr.max()))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


@dataclass(frozen=True)
class GrayRaster:
    """Single-channel raster; the producer decides what the values mean."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise ValueError(f"expected a 2-D array, got shape {arr.shape}")
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        if not np.all(np.isfinite(arr)):
            raise ValueError("raster contains non-finite values")
        object.__setattr__(self, "data", _frozen(arr))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


def check_pair(image: ClearImage, depth: DepthMap) -> None:
    if image.shape != depth.shape:
        raise ValueError(
            f"depth map is {depth.width}x{depth.height} but image is {image.width}x{image.height}"
        )


def _read_png(path: Path) -> np.ndarray:
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise ValueError(f"could not decode image: {path}")
    return raw


def load_image(path) -> ClearImage:
    path = Path(path)
    raw = _read_png(path)
    if raw.dtype == np.uint8:
        scale = 255.0
    elif raw.dtype == np.uint16:
        scale = 65535.0
    else:
        raise ValueError(f"unsupported bit depth ({raw.dtype}) in {path}")
    if raw.ndim != 3 or raw.shape[2] != 3:
        channels = 1 if raw.ndim == 2 else raw.shape[2]
        raise ValueError(f"{path} has {channels} channel(s); an RGB image is required")
    rgb = raw[:, :, ::-1]
    return ClearImage(rgb.astype(np.float64) / scale)


def read_pfm(path) -> np.ndarray:
    """Read a PFM file into a top-to-bottom float32 array (H x W or H x W x 3)."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    with open(path, "rb") as f:
        header = f.readline().decode("latin-1").rstrip()
        if header == "PF":
            channels = 3
        elif header == "Pf":
            channels = 1
        else:
            raise ValueError(f"not a PFM file: {path}")
        dims = f.readline().decode("latin-1")
        m = re.match(r"^\s*(\d+)\s+(\d+)\s*$", dims)
        if not m:
            raise ValueError(f"malformed PFM header in {path}")
        width, height = int(m.group(1)), int(m.group(2))
        scale = float(f.readline().decode("latin-1").strip())
        if scale == 0:
            raise ValueError(f"PFM scale must be non-zero in {path}")
        endian = "<" if scale < 0 else ">"
        count = width * height * channels
        data = np.fromfile(f, dtype=endian + "f4", count=count)
    if data.size != count:
        raise ValueError(f"truncated PFM data in {path}")
    shape = (height, width, 3) if channels == 3 else (height, width)
    # scanlines are stored bottom to top
    return np.flipud(data.reshape(shape)).astype(np.float32)


def write_pfm(path, data: np.ndarray, little_endian: bool = True) -> None:
    arr = np.asarray(data, dtype=np.float32)
    if arr.ndim == 2:
        header = "Pf"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        header = "PF"
    else:
        raise ValueError(f"cannot write array of shape {arr.shape} as PFM")
    height, width = arr.shape[:2]
    dtype = "<f4" if little_endian else ">f4"
    scale = -1.0 if little_endian else 1.0
    with open(path, "wb") as f:
        f.write(f"{header}\n{width} {height}\n{scale}\n".encode("latin-1"))
        f.write(np.ascontiguousarray(np.flipud(arr), dtype=dtype).tobytes())


def load_depth(path, scale: float | None = None) -> DepthMap:
    """Load a 16-bit grayscale PNG or a single-channel PFM depth map.

    ``scale`` is meters per stored unit. When omitted it defaults to 0.001
    for PNG (millimeter codes) and 1.0 for PFM.
    """
    path = Path(path)
    if scale is not None and not scale > 0:
        raise ValueError(f"depth scale must be positive, got {scale}")
    suffix = path.suffix.lower()
    if suffix == ".pfm":
        raw = read_pfm(path)
        if raw.ndim != 2:
            raise ValueError(f"{path}: depth PFM must be single-channel (Pf)")
        bad = ~np.isfinite(raw)
        if bad.any():
            r, c = np.argwhere(bad)[0]
            raise ValueError(f"{path}: non-finite depth at pixel (row={r}, col={c})")
        scale = 1.0 if scale is None else scale
    elif suffix == ".png":
        raw = _read_png(path)
        if raw.ndim != 2:
            raise ValueError(f"{path}: depth PNG must be single-channel grayscale")
        if raw.dtype != np.uint16:
            raise ValueError(f"{path}: depth PNG must be 16-bit, got {raw.dtype}")
        scale = 0.001 if scale is None else scale
    else:
        raise ValueError(f"unsupported depth format: {path.suffix or path.name}")
    return DepthMap(raw.astype(np.float64) * scale)


def to_codes(data: np.ndarray, max_code: int = 255) -> np.ndarray:
    """Clamp to [0, 1] and round half away from zero to integer codes."""
    arr = np.asarray(data, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("refusing to encode non-finite intensities")
    scaled = np.clip(arr, 0.0, 1.0) * max_code
    # values are non-negative, so floor(x + 0.5) is half-away-from-zero
    return np.floor(scaled + 0.5).astype(np.uint8 if max_code == 255 else np.uint16)


def _write_png(path: Path, codes: np.ndarray) -> None:
    parent = path.parent
    if not parent.is_dir():
        raise OSError(f"output directory does not exist: {parent}")
    try:
        ok = cv2.imwrite(str(path), codes)
    except cv2.error as exc:
        raise OSError(f"could not write {path}: {exc}") from exc
    if not ok:
        raise OSError(f"could not write {path}")


def save_image(img: ClearImage | np.ndarray, path) -> None:
    """Write an 8-bit RGB PNG."""
    data = img.data if isinstance(img, ClearImage) else img
    codes = to_codes(data)
    _write_png(Path(path), np.ascontiguousarray(codes[:, :, ::-1]))


def save_gray(data: np.ndarray, path) -> None:
    """Write a single-channel 8-bit PNG (used for debug dumps of layers and masks)."""
    _write_png(Path(path), to_codes(data))


def save_depth_png(depth: DepthMap | np.ndarray, path, scale: float = 0.001) -> None:
    """Write depth as a 16-bit PNG with ``scale`` meters per code."""
    data = depth.data if isinstance(depth, DepthMap) else np.asarray(depth, dtype=np.float64)
    codes = np.floor(data / scale + 0.5)
    if codes.max(initial=0) > 65535:
        raise ValueError("depth exceeds the 16-bit range at this scale")
    _write_png(Path(path), codes.astype(np.uint16))
