"""Command-line interface.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .dataset import SamplingRanges, build_dataset, metrics_report
from .fusion import (ClampStats, HazeParams, asm_haze, homogeneous_discrete, legacy_additive,
                     legacy_haze_first, legacy_multilayer, legacy_rain_first, limit_table,
                     rain_intensity)
from .layering import build_mask, layer_count, slice_geometries
from .metrics import psnr, ssim
from .pipeline import (DEFAULT_D_STEP, DEFAULT_P_MAX, DEFAULT_TRUNCATE, RainParams,
                       legacy_layers, synthesize)
from .scene_io import check_pair, load_depth, load_image, save_gray, save_image
from .streaks import render_layer

log = logging.getLogger("rainhaze")

# midpoints of the default sampling ranges
DEFAULT_MU = 0.0275
DEFAULT_LENGTH_FRAC = 0.125
DEFAULT_WIDTH_FRAC = 0.015
DEFAULT_A = 0.85
DEFAULT_ALPHA = 0.75
DEFAULT_BETA = 0.1

LEGACY_MODELS = ("eq2", "eq3", "eq4", "eq5")


class UsageError(Exception):
    pass


def _scene_flags(p: argparse.ArgumentParser, depth_required: bool = True) -> None:
    p.add_argument("--clear", required=True, type=Path, help="clear RGB PNG")
    p.add_argument("--depth", required=depth_required, type=Path,
                   help="depth map: 16-bit PNG or PFM")
    p.add_argument("--depth-scale", type=float, default=None,
                   help="meters per stored depth unit (default 0.001 for PNG, 1.0 for PFM)")


def _rain_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("rain streaks")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--mu", type=float, default=DEFAULT_MU,
                   help="expected impulses per layer pixel (default %(default)s)")
    g.add_argument("--length", type=float, default=None,
                   help=f"streak length in layer pixels (default {DEFAULT_LENGTH_FRAC} * shorter side)")
    g.add_argument("--width", type=float, default=None,
                   help=f"streak width in layer pixels (default {DEFAULT_WIDTH_FRAC} * shorter side)")
    g.add_argument("--direction", type=float, default=0.0, help="degrees from vertical")
    g.add_argument("--alpha", type=float, default=DEFAULT_ALPHA, help="attenuation ratio")
    g.add_argument("--A", "--airlight", dest="A", type=float, default=DEFAULT_A,
                   help="global atmospheric light")
    g.add_argument("--d-step", type=float, default=DEFAULT_D_STEP, help="slice thickness in meters")
    g.add_argument("--p-max", type=int, default=DEFAULT_P_MAX, help="largest patch size")
    g.add_argument("--truncate", type=float, default=DEFAULT_TRUNCATE,
                   help="ignore depth beyond this many meters when counting slices")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("-v", "--verbose", action="store_true", help="log progress and echo config as JSON")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rainhaze", allow_abbrev=False,
                                     description="Depth-aware rain and haze synthesis.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rain", help="render one rainy image with the unified model", allow_abbrev=False)
    _scene_flags(p)
    _rain_flags(p)
    p.add_argument("-o", "--output", required=True, type=Path)
    p.add_argument("--dump-layers", type=Path, default=None,
                   help="directory for per-layer streak and intensity PNGs")
    _common(p)

    p = sub.add_parser("haze", help="render a hazy image", allow_abbrev=False)
    _scene_flags(p)
    p.add_argument("--beta", type=float, default=DEFAULT_BETA, help="scattering coefficient per meter")
    p.add_argument("--A", "--airlight", dest="A", type=float, default=DEFAULT_A)
    p.add_argument("--discrete", action="store_true",
                   help="use the sliced homogeneous-rain form instead of exp(-beta d)")
    p.add_argument("--d-step", type=float, default=DEFAULT_D_STEP)
    p.add_argument("-o", "--output", required=True, type=Path)
    _common(p)

    p = sub.add_parser("legacy", help="render with one of the additive baseline models", allow_abbrev=False)
    _scene_flags(p, depth_required=False)
    _rain_flags(p)
    p.add_argument("--model", choices=LEGACY_MODELS, required=True,
                   help="eq2 additive, eq3 multi-layer, eq4 haze first, eq5 rain first")
    p.add_argument("--layers", type=int, default=3, help="streak layers for eq3/eq5")
    p.add_argument("--beta", type=float, default=DEFAULT_BETA)
    p.add_argument("-o", "--output", required=True, type=Path)
    _common(p)

    p = sub.add_parser("compare", help="render all five models from one streak field", allow_abbrev=False)
    _scene_flags(p)
    _rain_flags(p)
    p.add_argument("--layers", type=int, default=3)
    p.add_argument("--beta", type=float, default=DEFAULT_BETA)
    p.add_argument("--out-dir", required=True, type=Path)
    _common(p)

    p = sub.add_parser("dataset", help="build a rainy dataset with a manifest", allow_abbrev=False)
    p.add_argument("--clear-dir", required=True, type=Path)
    p.add_argument("--depth-dir", required=True, type=Path)
    p.add_argument("--out-dir", required=True, type=Path)
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--variants", type=int, default=14, help="rainy versions per clear image")
    p.add_argument("--depth-scale", type=float, default=None)
    p.add_argument("--d-step", type=float, default=DEFAULT_D_STEP)
    p.add_argument("--p-max", type=int, default=DEFAULT_P_MAX)
    p.add_argument("--truncate", type=float, default=DEFAULT_TRUNCATE)
    p.add_argument("--workers", type=int, default=1)
    _common(p)

    p = sub.add_parser("verify-limit", help="check convergence of sliced rain to exp(-beta d)",
                       allow_abbrev=False)
    p.add_argument("--beta", type=float, default=0.1)
    p.add_argument("--depth", type=float, default=10.0, help="scene depth in meters")
    p.add_argument("--d-step", type=float, nargs="+", default=[0.1, 0.05, 0.025])
    p.add_argument("--min-order", type=float, default=0.8)
    p.add_argument("--max-order", type=float, default=1.2)
    p.add_argument("-o", "--output", type=Path, default=None, help="CSV path (default stdout)")
    _common(p)

    p = sub.add_parser("metrics", help="PSNR/SSIM report", allow_abbrev=False)
    p.add_argument("--manifest", type=Path, help="dataset manifest to score against its sources")
    p.add_argument("--reference", type=Path, help="reference image (pairs with --test)")
    p.add_argument("--test", type=Path, help="image to score")
    p.add_argument("-o", "--output", type=Path, default=None, help="CSV path (default stdout)")
    _common(p)
    return parser


def _echo(args: argparse.Namespace, extra: dict | None = None) -> dict:
    cfg = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()}
    cfg["software_version"] = __version__
    if extra:
        cfg.update(extra)
    if args.verbose:
        print(json.dumps(cfg, indent=2, sort_keys=True))
    return cfg


def _write_sidecar(path: Path, cfg: dict) -> None:
    path.write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")


def _rain_params(args, shape) -> RainParams:
    s = min(shape)
    length = args.length if args.length is not None else DEFAULT_LENGTH_FRAC * s
    width = args.width if args.width is not None else DEFAULT_WIDTH_FRAC * s
    return RainParams(mu=args.mu, length=length, width=width, direction=args.direction,
                      A=args.A, alpha=args.alpha, seed=args.seed, d_step=args.d_step,
                      p_max=args.p_max, truncate=args.truncate)


def _load_scene(args, need_depth=True):
    B = load_image(args.clear)
    depth = None
    if args.depth is not None:
        depth = load_depth(args.depth, args.depth_scale)
        check_pair(B, depth)
    elif need_depth:
        raise UsageError("--depth is required")
    return B, depth


def cmd_rain(args) -> int:
    B, depth = _load_scene(args)
    params = _rain_params(args, B.shape)
    cfg = _echo(args, {"model": "unified", "params": params.to_dict()})
    stats = ClampStats()
    save_image(synthesize(B, depth, params, stats=stats), args.output)
    cfg["clamp_activations"] = stats.activations
    _write_sidecar(args.output.with_suffix(".json"), cfg)
    if args.dump_layers is not None:
        _dump_layers(args.dump_layers, depth, params)
    return 0


def _dump_layers(out: Path, depth, params: RainParams) -> None:
    out.mkdir(parents=True, exist_ok=True)
    cfg = params.slice_config(depth)
    needed = int(layer_count(cfg.d_max, cfg))
    for g in slice_geometries(cfg, depth.shape)[:needed]:
        layer = render_layer(g, params.process(g.index), params.kernel)
        q = rain_intensity(layer, build_mask(depth, g))
        save_gray(layer.data, out / f"streak_{g.index:03d}.png")
        save_gray(q.data, out / f"intensity_{g.index:03d}.png")


def cmd_haze(args) -> int:
    B, depth = _load_scene(args)
    hp = HazeParams(beta=args.beta, A=args.A)
    model = "homogeneous" if args.discrete else "asm"
    cfg = _echo(args, {"model": model})
    if args.discrete:
        out = homogeneous_discrete(B, depth, hp, args.d_step)
    else:
        out = asm_haze(B, depth, hp)
    save_image(out, args.output)
    _write_sidecar(args.output.with_suffix(".json"), cfg)
    return 0


def _legacy_outputs(B, depth, params: RainParams, beta: float, n_layers: int, models):
    layers = legacy_layers(B.shape, params, max(n_layers, 1))
    hp = HazeParams(beta=beta, A=params.A) if depth is not None else None
    out = {}
    for m in models:
        if m in ("eq4", "eq5") and depth is None:
            raise UsageError(f"--depth is required for {m}")
        if m == "eq2":
            out[m] = legacy_additive(B, layers[0])
        elif m == "eq3":
            out[m] = legacy_multilayer(B, layers[:n_layers])
        elif m == "eq4":
            out[m] = legacy_haze_first(B, depth, hp, layers[0])
        elif m == "eq5":
            out[m] = legacy_rain_first(B, depth, hp, layers[:n_layers])
    return out


def cmd_legacy(args) -> int:
    B, depth = _load_scene(args, need_depth=False)
    params = _rain_params(args, B.shape)
    cfg = _echo(args, {"model": f"legacy-{args.model}", "params": params.to_dict()})
    out = _legacy_outputs(B, depth, params, args.beta, args.layers, [args.model])[args.model]
    save_image(out, args.output)
    _write_sidecar(args.output.with_suffix(".json"), cfg)
    return 0


def cmd_compare(args) -> int:
    B, depth = _load_scene(args)
    params = _rain_params(args, B.shape)
    cfg = _echo(args, {"params": params.to_dict()})
    outputs = {"unified": synthesize(B, depth, params)}
    for m, img in _legacy_outputs(B, depth, params, args.beta, args.layers, LEGACY_MODELS).items():
        outputs[f"legacy_{m}"] = img
    args.out_dir.mkdir(parents=True, exist_ok=True)
    for name, img in outputs.items():
        save_image(img, args.out_dir / f"{name}.png")
    with open(args.out_dir / "pairwise_psnr.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["model_a", "model_b", "PSNR_dB"])
        for a, b in itertools.combinations(["clear", *outputs], 2):
            ia = B if a == "clear" else outputs[a]
            writer.writerow([a, b, f"{psnr(ia, outputs[b]):.4f}"])
    _write_sidecar(args.out_dir / "compare.json", cfg)
    return 0


def cmd_dataset(args) -> int:
    ranges = SamplingRanges(variants_per_image=args.variants)
    _echo(args, {"ranges": ranges.echo()})
    manifest = build_dataset(args.clear_dir, args.depth_dir, args.out_dir, ranges,
                             master_seed=args.seed, d_step=args.d_step, p_max=args.p_max,
                             truncate=args.truncate, depth_scale=args.depth_scale,
                             workers=args.workers)
    log.info("%d outputs, %d skipped", len(manifest.records), len(manifest.skipped))
    return 0


def _open_out(path: Path | None):
    return open(path, "w", newline="") if path is not None else None


def cmd_verify_limit(args) -> int:
    _echo(args)
    rows = limit_table(args.beta, args.depth, args.d_step)
    fh = _open_out(args.output)
    writer = csv.writer(fh or sys.stdout)
    writer.writerow(["d_step", "discrete_T", "asm_t", "abs_err", "order", "status"])
    fmt = lambda v: "" if v is None else f"{v:.9g}"
    ok = True
    for r in rows:
        writer.writerow([fmt(r["d_step"]), fmt(r["discrete_T"]), fmt(r["asm_t"]),
                         fmt(r["abs_err"]), fmt(r["order"]), r["status"]])
        if r["status"] != "ok":
            ok = False
        elif r["order"] is not None and not args.min_order <= r["order"] <= args.max_order:
            ok = False
    if fh:
        fh.close()
    return 0 if ok else 1


def cmd_metrics(args) -> int:
    _echo(args)
    if args.manifest is not None:
        rows = metrics_report(args.manifest, args.output)
        if args.output is None:
            writer = csv.DictWriter(sys.stdout, fieldnames=list(rows[0]) if rows else
                                    ["source", "variant", "model", "PSNR_dB", "SSIM"])
            writer.writeheader()
            writer.writerows(rows)
        return 0
    if args.reference is None or args.test is None:
        raise UsageError("give --manifest, or both --reference and --test")
    a, b = load_image(args.reference), load_image(args.test)
    fh = _open_out(args.output)
    writer = csv.writer(fh or sys.stdout)
    writer.writerow(["source", "variant", "model", "PSNR_dB", "SSIM"])
    writer.writerow([str(args.reference), "", str(args.test), f"{psnr(a, b):.4f}", f"{ssim(a, b):.6f}"])
    if fh:
        fh.close()
    return 0


COMMANDS = {
    "rain": cmd_rain,
    "haze": cmd_haze,
    "legacy": cmd_legacy,
    "compare": cmd_compare,
    "dataset": cmd_dataset,
    "verify-limit": cmd_verify_limit,
    "metrics": cmd_metrics,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"rainhaze {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # reported as a runtime failure
        print(f"rainhaze {args.command}: error: {exc}", file=sys.stderr)
        return 1
