"""Batch generation of rainy variants with a provenance manifest.

Directory conventions: every ``<stem>.png`` in the clear directory pairs
with ``<stem>.png`` (16-bit) or ``<stem>.pfm`` in the depth directory.
Outputs are ``<stem>_<variant>.png`` in the output directory next to
``manifest.json``.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .metrics import psnr, ssim
from .pipeline import DEFAULT_D_STEP, DEFAULT_P_MAX, DEFAULT_TRUNCATE, RainParams, synthesize
from .scene_io import load_depth, load_image, save_image
from .streaks import mix64

log = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
DEPTH_SUFFIXES = (".png", ".pfm")


@dataclass(frozen=True)
class SamplingRanges:
    """Uniform sampling ranges for one rainy variant.

    Streak length and width are fractions of ``s``, the shorter image side.
    """

    mu_range: tuple[float, float] = (0.005, 0.05)
    l_s_range: tuple[float, float] = (0.05, 0.2)
    w_s_range: tuple[float, float] = (0.005, 0.025)
    d_s_range: tuple[float, float] = (-30.0, 30.0)
    A_range: tuple[float, float] = (0.7, 1.0)
    alpha_range: tuple[float, float] = (0.6, 0.9)
    variants_per_image: int = 14
    s: int | None = None

    def __post_init__(self):
        for name in ("mu_range", "l_s_range", "w_s_range", "d_s_range", "A_range", "alpha_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name}: low {lo} exceeds high {hi}")
            object.__setattr__(self, name, (float(lo), float(hi)))
        if self.variants_per_image < 1:
            raise ValueError("variants_per_image must be >= 1")

    def for_image(self, height: int, width: int) -> "SamplingRanges":
        return replace(self, s=min(height, width))

    def echo(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        d["l_s_units"] = d["w_s_units"] = "fraction of s"
        return d


def sample_params(ranges: SamplingRanges, seed: int, d_step: float = DEFAULT_D_STEP,
                  p_max: int = DEFAULT_P_MAX, truncate: float | None = DEFAULT_TRUNCATE) -> RainParams:
    """Draw every parameter independently and uniformly; deterministic in ``seed``."""
    if ranges.s is None:
        raise ValueError("ranges.s is unset; call ranges.for_image(h, w) first")
    rng = np.random.Generator(np.random.PCG64(seed))
    u = lambda r: float(rng.uniform(r[0], r[1]))
    mu = u(ranges.mu_range)
    length = u(ranges.l_s_range) * ranges.s
    width = u(ranges.w_s_range) * ranges.s
    direction = u(ranges.d_s_range)
    A = u(ranges.A_range)
    alpha = u(ranges.alpha_range)
    return RainParams(mu=mu, length=length, width=min(width, length), direction=direction,
                      A=A, alpha=alpha, seed=seed, d_step=d_step, p_max=p_max, truncate=truncate)


@dataclass
class SynthesisRecord:
    source_path: str
    depth_path: str
    depth_scale: float | None
    output_path: str
    model_variant: str
    image_index: int
    variant_index: int
    seed: int
    params: dict
    d_step: float
    p_max: int
    software_version: str = __version__

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Manifest:
    records: list[SynthesisRecord] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    skipped: list[dict] = field(default_factory=list)
    created: str = ""

    def to_dict(self) -> dict:
        return {
            "created": self.created,
            "config": self.config,
            "records": [r.to_dict() for r in self.records],
            "skipped": self.skipped,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def read(cls, path) -> "Manifest":
        d = json.loads(Path(path).read_text())
        return cls(records=[SynthesisRecord(**r) for r in d["records"]],
                   config=d.get("config", {}), skipped=d.get("skipped", []),
                   created=d.get("created", ""))


def find_depth(depth_dir: Path, stem: str) -> Path | None:
    for suffix in DEPTH_SUFFIXES:
        p = depth_dir / f"{stem}{suffix}"
        if p.is_file():
            return p
    return None


def variant_seed(master_seed: int, image_index: int, variant_index: int) -> int:
    return mix64(master_seed, image_index, variant_index)


def _render_image(idx: int, clear: Path, depth_path: Path, out_dir: Path, ranges: SamplingRanges,
                  master_seed: int, d_step: float, p_max: int, truncate: float | None,
                  depth_scale: float | None) -> list[SynthesisRecord]:
    B = load_image(clear)
    depth = load_depth(depth_path, depth_scale)
    img_ranges = ranges.for_image(B.height, B.width)
    records = []
    for v in range(ranges.variants_per_image):
        seed = variant_seed(master_seed, idx, v)
        params = sample_params(img_ranges, seed, d_step, p_max, truncate)
        name = f"{clear.stem}_{v:02d}.png"
        save_image(synthesize(B, depth, params), out_dir / name)
        records.append(SynthesisRecord(
            source_path=str(clear), depth_path=str(depth_path), depth_scale=depth_scale,
            output_path=name, model_variant="unified", image_index=idx, variant_index=v,
            seed=seed, params=params.to_dict(), d_step=d_step, p_max=p_max,
        ))
        log.info("wrote %s", name)
    return records


def build_dataset(clear_dir, depth_dir, out_dir, ranges: SamplingRanges | None = None,
                  master_seed: int = 0, d_step: float = DEFAULT_D_STEP, p_max: int = DEFAULT_P_MAX,
                  truncate: float | None = DEFAULT_TRUNCATE, depth_scale: float | None = None,
                  workers: int = 1) -> Manifest:
    """Synthesize ``variants_per_image`` rainy versions of every clear image."""
    ranges = ranges or SamplingRanges()
    clear_dir, depth_dir, out_dir = Path(clear_dir), Path(depth_dir), Path(out_dir)
    if not clear_dir.is_dir():
        raise FileNotFoundError(f"clear image directory not found: {clear_dir}")
    out_dir.mkdir(parents=True, exist_ok=True)

    manifest = Manifest(config={
        "ranges": ranges.echo(),
        "master_seed": master_seed,
        "d_step": d_step,
        "p_max": p_max,
        "truncate": truncate,
        "depth_scale": depth_scale,
        "software_version": __version__,
    })
    jobs = []
    for idx, clear in enumerate(sorted(clear_dir.glob("*.png"))):
        depth_path = find_depth(depth_dir, clear.stem)
        if depth_path is None:
            log.warning("no depth map for %s; skipping", clear.name)
            manifest.skipped.append({"source_path": str(clear), "reason": "missing depth map"})
            continue
        jobs.append((idx, clear, depth_path))

    def run(job):
        idx, clear, depth_path = job
        return _render_image(idx, clear, depth_path, out_dir, ranges, master_seed,
                             d_step, p_max, truncate, depth_scale)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    records = [r for rs in results for r in rs]
    records.sort(key=lambda r: (r.source_path, r.variant_index))
    manifest.records = records
    manifest.created = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    manifest.write(out_dir / MANIFEST_NAME)
    return manifest


def replay(record: SynthesisRecord):
    """Re-run one record's synthesis; the result matches the saved file exactly."""
    B = load_image(record.source_path)
    depth = load_depth(record.depth_path, record.depth_scale)
    return synthesize(B, depth, RainParams.from_dict(record.params))


METRIC_COLUMNS = ("source", "variant", "model", "PSNR_dB", "SSIM")


def metrics_report(manifest_path, out_csv=None) -> list[dict]:
    """PSNR/SSIM of every manifest output against its clear source."""
    manifest_path = Path(manifest_path)
    manifest = Manifest.read(manifest_path)
    rows = []
    for rec in manifest.records:
        clear = load_image(rec.source_path)
        out = load_image(manifest_path.parent / rec.output_path)
        rows.append({
            "source": rec.source_path,
            "variant": rec.variant_index,
            "model": rec.model_variant,
            "PSNR_dB": f"{psnr(clear, out):.4f}",
            "SSIM": f"{ssim(clear, out):.6f}",
        })
    if out_csv is not None:
        with open(out_csv, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=METRIC_COLUMNS)
            writer.writeheader()
            writer.writerows(rows)
    return rows
