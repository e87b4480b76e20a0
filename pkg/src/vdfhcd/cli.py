"""Command-line front end: ``detect``, ``evaluate``, ``synth`` and ``sweep``.

Every subcommand reads optional ``key=value`` config files (``--config``),
applies command-line flags on top, rejects unknown keys and writes a
``manifest.json`` with the fully resolved settings into ``--out``.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .detection import (
    DetectionResult,
    SegmentationError,
    VdfConfig,
    iterate_detection,
    map_to_pixels,
    preprocess,
    run_vdf_hcd,
)
from .imaging import (
    ImageFormatError,
    RasterImage,
    load_image,
    load_mask,
    read_matrix,
    write_change_map,
    write_difference_image,
    write_mask,
)
from .metrics import confusion, oa_fm_kc, roc_pr_curves, score_report, write_report
from .synthgen import SceneSpec, generate_pair, write_pair

logger = logging.getLogger("vdfhcd")

# Short flag names mapped onto config fields.
ALIASES = {"m": "order", "iter": "iterations", "p": "patch_size"}
PATH_KEYS = ("t1", "t2", "gt", "out", "scores", "cm")
SWEEP_KEYS = ("sweep_m", "sweep_cutoff", "sweep_k")
BAND_KEYS = {"bands_t1", "bands_t2"}
SCENE_FIELDS = {f.name: f for f in dataclasses.fields(SceneSpec)}
VDF_FIELDS = {f.name: f for f in dataclasses.fields(VdfConfig)}


class ConfigError(ValueError):
    pass


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse ``key=value`` lines; blank lines and ``#`` comments are skipped."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        out[ALIASES.get(key, key)] = value
    return out


def _coerce(name: str, value, annotation: str):
    if value is None or not isinstance(value, str):
        return value
    if value.lower() in ("none", "auto", "") and "None" in annotation:
        return None
    if annotation.startswith("int"):
        return int(value)
    if annotation.startswith("float"):
        return float(value)
    if annotation.startswith("bool"):
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {value!r}")
    return value


def _float_list(value) -> list[float]:
    return [float(v) for v in str(value).replace(",", " ").split()]


def _int_list(value) -> list[int]:
    return [int(v) for v in str(value).replace(",", " ").split()]


def resolve_settings(config_paths, overrides: dict, allowed: set) -> dict:
    """Merge config files (in order) and flag overrides, rejecting unknown keys."""
    merged = {}
    for cfg_path in config_paths or ():
        path = Path(cfg_path)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        merged.update(parse_config_text(path.read_text(), str(path)))
    merged.update({ALIASES.get(k, k): v for k, v in overrides.items() if v is not None})
    unknown = sorted(set(merged) - allowed)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    return merged


def build_vdf_config(settings: dict) -> VdfConfig:
    kwargs = {}
    for name, value in settings.items():
        if name in VDF_FIELDS:
            kwargs[name] = _coerce(name, value, str(VDF_FIELDS[name].type))
    try:
        return VdfConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def build_scene_spec(settings: dict) -> SceneSpec:
    kwargs = {}
    for name, value in settings.items():
        if name in SCENE_FIELDS:
            kwargs[name] = _coerce(name, value, str(SCENE_FIELDS[name].type))
    try:
        return SceneSpec(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def write_manifest(out: Path, command: str, settings: dict, **extra) -> Path:
    manifest = {"command": command, "version": __version__, "settings": settings}
    manifest.update(extra)
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str))
    return path


def _require_file(path, what: str) -> Path:
    if path is None:
        raise ConfigError(f"missing required input: {what}")
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


def _output_dir(path) -> Path:
    if path is None:
        raise ConfigError("missing required option: --out")
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_scores(path: Path) -> np.ndarray:
    if path.suffix.lower() in (".fmat", ".mat64"):
        return read_matrix(path)[:, :, 0]
    return load_image(path).data[:, :, 0]


def _write_levels(directory: Path, res_levels, seg, changed, gt) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    write_difference_image(map_to_pixels(seg, res_levels.forward), directory / "fX.png")
    write_difference_image(map_to_pixels(seg, res_levels.backward), directory / "fY.png")
    write_difference_image(map_to_pixels(seg, res_levels.fused), directory / "fused.png")
    cm = map_to_pixels(seg, changed)
    if gt is not None:
        write_change_map(cm, gt, directory / "cm.png")
    else:
        write_mask(cm, directory / "cm.png")


def evaluate_outputs(scores, cm, gt, out: Path, prefix: str = "") -> dict:
    """Write ROC/PR CSVs for ``scores`` and a metrics report for ``cm``; returns the report."""
    report = {}
    if cm is not None:
        counts = confusion(cm, gt)
        report.update(score_report(oa_fm_kc(counts), counts))
    if scores is not None:
        curves = roc_pr_curves(scores, gt)
        curves.write_csv(out / f"{prefix}roc.csv", out / f"{prefix}pr.csv")
        report["aur"] = curves.aur
        report["aup"] = curves.aup
    write_report(report, out / f"{prefix}metrics.txt")
    return report


def detection_report(res: DetectionResult) -> dict:
    n = res.seg.segment_count
    return {
        "vertices": n,
        "k": res.config.resolved_k(n),
        "iterations_run": len(res.history),
        "converged": bool(res.history[-1].converged),
        "collapsed": bool(res.history[-1].collapsed),
        "iterations": [
            {
                "iteration": st.iteration,
                "threshold": st.threshold,
                "changed": int(st.changed.size),
                "unchanged": int(st.unchanged.size),
                "converged": bool(st.converged),
                "collapsed": bool(st.collapsed),
            }
            for st in res.history
        ],
    }


def _load_input(path: Path, bands) -> RasterImage:
    img = load_image(path)
    if bands in (None, ""):
        return img
    idx = _int_list(bands)
    if min(idx) < 0 or max(idx) >= img.channels:
        raise ValueError(f"bands {idx} out of range for {path} with {img.channels} channels")
    return img.select_bands(idx)


def cmd_detect(settings: dict) -> int:
    t1 = _require_file(settings.get("t1"), "--t1 image")
    t2 = _require_file(settings.get("t2"), "--t2 image")
    gt_path = settings.get("gt")
    gt = load_mask(_require_file(gt_path, "--gt mask")) if gt_path else None
    out = _output_dir(settings.get("out"))
    cfg = build_vdf_config(settings)
    write_manifest(out, "detect", settings, config=dataclasses.asdict(cfg))

    img_x, img_y = _load_input(t1, settings.get("bands_t1")), _load_input(t2, settings.get("bands_t2"))
    start = time.perf_counter()
    res = run_vdf_hcd(img_x, img_y, cfg)
    elapsed = time.perf_counter() - start

    for st in res.history:
        _write_levels(out / f"iter_{st.iteration:02d}", st.levels, res.seg, st.changed, gt)
    _write_levels(out, res.levels, res.seg, res.changed, gt)
    state = detection_report(res)
    state["seconds"] = elapsed
    (out / "state.json").write_text(json.dumps(state, indent=2))
    if gt is not None:
        if gt.shape != res.change_map.shape:
            raise ValueError(f"ground truth {gt.shape} does not match images {res.change_map.shape}")
        fused = map_to_pixels(res.seg, res.levels.fused)
        report = evaluate_outputs(fused, res.change_map, gt, out)
        logger.info("OA=%.4f Fm=%.4f Kc=%.4f AUR=%.4f", report["oa"], report["fm"], report["kc"], report["aur"])
    logger.info("detect finished in %.1f s; outputs in %s", elapsed, out)
    return 0


def cmd_evaluate(settings: dict) -> int:
    gt = load_mask(_require_file(settings.get("gt"), "--gt mask"))
    out = _output_dir(settings.get("out"))
    if settings.get("scores") is None and settings.get("cm") is None:
        raise ConfigError("evaluate needs --scores (a difference image) and/or --cm (a change mask)")
    write_manifest(out, "evaluate", settings)
    scores = _load_scores(_require_file(settings["scores"], "--scores")) if settings.get("scores") else None
    cm = load_mask(_require_file(settings["cm"], "--cm")) if settings.get("cm") else None
    for name, arr in (("scores", scores), ("cm", cm)):
        if arr is not None and arr.shape != gt.shape:
            raise ValueError(f"{name} {arr.shape} and ground truth {gt.shape} differ in size")
    report = evaluate_outputs(scores, cm, gt, out)
    logger.info("evaluate: %s", ", ".join(f"{k}={v}" for k, v in report.items()))
    return 0


def cmd_synth(settings: dict) -> int:
    out = _output_dir(settings.get("out"))
    spec = build_scene_spec(settings)
    write_pair(generate_pair(spec), out)
    logger.info("synthetic pair written to %s", out)
    return 0


def run_sweep(img_x, img_y, gt, base: VdfConfig, orders, cutoffs, ks, out: Path | None = None) -> list[dict]:
    """Detection over the grid ``orders x cutoffs x ks``; one result row per point.

    Segmentation and features are shared by every point; graphs are rebuilt
    once per K.
    """
    rows = []
    for k in ks:
        cfg_k = dataclasses.replace(base, k=k)
        pre = preprocess(img_x, img_y, cfg_k)
        for order in orders:
            for cutoff in cutoffs:
                cfg = dataclasses.replace(cfg_k, order=order, cutoff=cutoff)
                history = iterate_detection(pre, cfg)
                cm = map_to_pixels(pre.seg, history[-1].changed)
                fused = map_to_pixels(pre.seg, history[-1].levels.fused)
                scores = oa_fm_kc(confusion(cm, gt))
                row = {
                    "M": order,
                    "cutoff": cutoff,
                    "K": cfg.resolved_k(pre.seg.segment_count),
                    "OA": scores.oa,
                    "Fm": scores.fm,
                    "Kc": scores.kc,
                    "AUR": roc_pr_curves(fused, gt).aur,
                }
                rows.append(row)
                if out is not None:
                    point = out / f"M{order}_cf{cutoff:g}_K{row['K']}"
                    point.mkdir(parents=True, exist_ok=True)
                    write_report(row, point / "metrics.txt")
                logger.info("sweep %s", row)
    return rows


def write_sweep_csv(rows: list[dict], path: Path) -> Path:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["M", "cutoff", "K", "OA", "Fm", "Kc", "AUR"])
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return path


def cmd_sweep(settings: dict) -> int:
    t1 = _require_file(settings.get("t1"), "--t1 image")
    t2 = _require_file(settings.get("t2"), "--t2 image")
    gt = load_mask(_require_file(settings.get("gt"), "--gt mask"))
    out = _output_dir(settings.get("out"))
    base = build_vdf_config(settings)
    orders = _int_list(settings.get("sweep_m", base.order))
    cutoffs = _float_list(settings.get("sweep_cutoff", base.cutoff))
    ks = _int_list(settings["sweep_k"]) if settings.get("sweep_k") else [base.k]
    write_manifest(out, "sweep", settings, config=dataclasses.asdict(base),
                   grid={"M": orders, "cutoff": cutoffs, "K": ks})
    img_x, img_y = _load_input(t1, settings.get("bands_t1")), _load_input(t2, settings.get("bands_t2"))
    rows = run_sweep(img_x, img_y, gt, base, orders, cutoffs, ks, out)
    write_sweep_csv(rows, out / "sweep.csv")
    return 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", help="output directory")
    p.add_argument("--config", action="append", help="key=value config file (repeatable)")
    p.add_argument("--seed", type=int)


def _add_detection_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--t1", help="pre-event image")
    p.add_argument("--t2", help="post-event image")
    p.add_argument("--gt", help="ground-truth change mask")
    p.add_argument("--n", type=int, help="target vertex count")
    p.add_argument("--k", type=int, help="neighbors per vertex (default floor(sqrt(N)))")
    p.add_argument("--m", type=int, help="filter order")
    p.add_argument("--cutoff", type=float, help="cut-off of the low-pass target")
    p.add_argument("--iter", type=int, help="maximum iterations")
    p.add_argument("--segmentation", choices=["patch", "superpixel"])
    p.add_argument("--p", type=int, help="patch size for --segmentation patch")
    p.add_argument("--threshold", choices=["otsu", "kmeans"])
    p.add_argument("--operator", choices=["wavg", "p", "lrw"])
    p.add_argument("--workers", type=int, help="threads for the operator powers")
    p.add_argument("--bands-t1", dest="bands_t1", help="comma-separated 0-based bands of --t1 to use")
    p.add_argument("--bands-t2", dest="bands_t2", help="comma-separated 0-based bands of --t2 to use")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vdfhcd", description="Graph-filter change detection on heterogeneous image pairs.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    detect = sub.add_parser("detect", help="detect changes between two images")
    _add_common(detect)
    _add_detection_flags(detect)

    evaluate = sub.add_parser("evaluate", help="score a difference image and/or change mask")
    _add_common(evaluate)
    evaluate.add_argument("--gt", help="ground-truth change mask")
    evaluate.add_argument("--scores", help="difference image (PNG/TIFF or .fmat)")
    evaluate.add_argument("--cm", help="binary change mask")

    synth = sub.add_parser("synth", help="write a synthetic image pair with ground truth")
    _add_common(synth)
    synth.add_argument("--height", type=int)
    synth.add_argument("--width", type=int)
    synth.add_argument("--n-classes", dest="n_classes", type=int)
    synth.add_argument("--change-fraction", dest="change_fraction", type=float)
    synth.add_argument("--noise-sigma", dest="noise_sigma", type=float)

    sweep = sub.add_parser("sweep", help="grid over filter order, cut-off and K")
    _add_common(sweep)
    _add_detection_flags(sweep)
    sweep.add_argument("--sweep-m", dest="sweep_m", help="comma-separated filter orders")
    sweep.add_argument("--sweep-cutoff", dest="sweep_cutoff", help="comma-separated cut-offs")
    sweep.add_argument("--sweep-k", dest="sweep_k", help="comma-separated K values")
    return parser


ALLOWED_KEYS = {
    "detect": set(VDF_FIELDS) | {"t1", "t2", "gt", "out"} | BAND_KEYS,
    "evaluate": {"gt", "out", "scores", "cm", "seed"},
    "synth": set(SCENE_FIELDS) | {"out"},
    "sweep": set(VDF_FIELDS) | {"t1", "t2", "gt", "out"} | set(SWEEP_KEYS) | BAND_KEYS,
}
COMMANDS = {"detect": cmd_detect, "evaluate": cmd_evaluate, "synth": cmd_synth, "sweep": cmd_sweep}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    try:
        settings = resolve_settings(args.config, overrides, ALLOWED_KEYS[args.command])
        return COMMANDS[args.command](settings)
    except (ConfigError, FileNotFoundError, ImageFormatError, SegmentationError, ValueError) as exc:
        print(f"vdfhcd {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
