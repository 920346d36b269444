"""Command line interface.

Subcommands::

    camoflow register SEQUENCE_DIR   fit per-pair background homographies
    camoflow segment  SEQUENCE_DIR   full moving-object segmentation
    camoflow synth                   generate a ground-truthed sequence
    camoflow eval     PRED_DIR       score masks against annotations
    camoflow flow-vis FLOW.flo       render a flow field as a color wheel

Exit codes: 0 on success, 1 on internal failure, 2 on invalid input or
configuration.  Errors are reported as a single JSON object on stderr.
A sequence directory holds ``frame_%04d.png`` plus ``flow_%04d.flo`` per
consecutive pair (exactly what ``camoflow synth`` writes).
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import PipelineConfig, dump_config, load_config
from .errors import CamoflowError, ConfigError, PipelineError
from .evaluation import densify_annotations, evaluate_masks, read_annotations
from .flow import flow_to_color, flow_to_correspondences, read_flo
from .geometry import corner_transfer_error
from .imgio import read_image, read_mask, write_image, write_mask
from .registration import RegistrationResult, estimate
from .segmentation import segment_sequence
from .synthgen import generate_sequence, save_sequence

_FRAME_RE = re.compile(r"frame_(\d{4})\.png$")
_MASK_RE = re.compile(r"mask_(\d{4})\.png$")


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="camoflow",
        description="Camouflage-breaking motion segmentation pipeline.",
    )
    parser.add_argument("--version", action="version", version=f"camoflow {__version__}")
    parser.add_argument(
        "--print-config",
        action="store_true",
        help="print the effective configuration as YAML and exit",
    )
    parser.add_argument("--config", metavar="FILE", help="YAML configuration file")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="FILE", help="YAML configuration file")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--jobs", type=int, default=1, help="worker threads (default 1)")
    common.add_argument("--output", metavar="DIR", help="output directory")

    estimator = argparse.ArgumentParser(add_help=False)
    estimator.add_argument(
        "--estimator",
        choices=("ransac", "irls"),
        default="irls",
        help="homography estimator (default irls)",
    )

    sub = parser.add_subparsers(dest="command")

    p_register = sub.add_parser(
        "register",
        parents=[common, estimator],
        help="fit background homographies for every consecutive frame pair",
    )
    p_register.add_argument("sequence", help="sequence directory")

    p_segment = sub.add_parser(
        "segment",
        parents=[common, estimator],
        help="segment the independently moving object in a sequence",
    )
    p_segment.add_argument("sequence", help="sequence directory")
    p_segment.add_argument(
        "--panels",
        action="store_true",
        help="also write side-by-side diagnostic panels per pair",
    )

    p_synth = sub.add_parser(
        "synth",
        parents=[common],
        help="generate a synthetic sequence with ground truth",
    )
    p_synth.add_argument("--mode", choices=("continuous", "random"))
    p_synth.add_argument("--length", type=int)
    p_synth.add_argument("--jitter", type=float)
    p_synth.add_argument(
        "--static", metavar="A:B", help="freeze the sprite over frames A..B inclusive"
    )
    p_synth.add_argument(
        "--brightness", metavar="F0:F1", help="linear brightness drift factors"
    )
    p_synth.add_argument("--sprite", choices=("ellipse", "polygon", "none"))
    p_synth.add_argument("--sprite-size", type=float)

    p_eval = sub.add_parser(
        "eval",
        parents=[common],
        help="score predicted masks against keyframe annotations",
    )
    p_eval.add_argument("predictions", help="directory of predicted mask_%04d.png files")
    p_eval.add_argument(
        "--annotations",
        required=True,
        metavar="CSV",
        help="keyframe boxes: frame,x_min,y_min,x_max,y_max,label",
    )
    p_eval.add_argument(
        "--gt-masks", metavar="DIR", help="directory of ground-truth pixel masks"
    )

    p_vis = sub.add_parser(
        "flow-vis",
        parents=[common],
        help="render a .flo file with the direction-as-hue color wheel",
    )
    p_vis.add_argument("flow", help=".flo file")
    p_vis.add_argument(
        "--max-magnitude", type=float, help="saturation scale (default: field maximum)"
    )

    return parser


def _load_pipeline_config(args) -> PipelineConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else PipelineConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    return cfg


def _resolve_output(args, cfg: PipelineConfig, default_name: str) -> Path:
    if getattr(args, "output", None):
        return Path(args.output)
    return cfg.output_root() / default_name


# ---------------------------------------------------------------------------
# Sequence directory I/O
# ---------------------------------------------------------------------------

def _indexed_files(directory: Path, pattern: re.Pattern) -> list[Path]:
    found = {}
    for path in directory.iterdir():
        match = pattern.search(path.name)
        if match:
            found[int(match.group(1))] = path
    return [found[i] for i in sorted(found)]


def _load_sequence_dir(directory: str | Path):
    root = Path(directory)
    if not root.is_dir():
        raise ConfigError(f"{root} is not a directory")
    frame_paths = _indexed_files(root, _FRAME_RE)
    if len(frame_paths) < 2:
        raise ConfigError(f"{root}: need at least 2 frame_NNNN.png files")
    missing = [
        i for i in range(len(frame_paths) - 1) if not (root / f"flow_{i:04d}.flo").exists()
    ]
    if missing:
        raise ConfigError(
            f"{root}: missing flow files for pair indices {missing}"
        )
    frames = [read_image(p) for p in frame_paths]
    flows = [read_flo(root / f"flow_{i:04d}.flo") for i in range(len(frame_paths) - 1)]
    return root, frames, flows


def _load_gt_homographies(root: Path):
    path = root / "homographies.json"
    if not path.exists():
        return None
    with open(path) as fh:
        data = json.load(fh)
    matrices = [np.asarray(m, dtype=np.float64).reshape(3, 3) for m in data["matrices"]]
    return matrices, tuple(data["frame_size"])


def _gt_pair_labels(root: Path, n_pairs: int) -> list[str]:
    """Motion labels per frame pair, honouring a recorded static interval."""
    labels = ["locomotion"] * n_pairs
    meta_path = root / "meta.json"
    if meta_path.exists():
        with open(meta_path) as fh:
            meta = json.load(fh)
        interval = meta.get("config", {}).get("static_interval")
        if interval:
            a, b = int(interval[0]), int(interval[1])
            for t in range(n_pairs):
                if a <= t and t + 1 <= b:
                    labels[t] = "static"
    return labels


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_register(args) -> int:
    cfg = _load_pipeline_config(args)
    root, frames, flows = _load_sequence_dir(args.sequence)
    outdir = _resolve_output(args, cfg, f"register-{root.name}")
    outdir.mkdir(parents=True, exist_ok=True)
    reg_cfg = cfg.registration

    def run(i: int) -> RegistrationResult:
        try:
            corr = flow_to_correspondences(flows[i], reg_cfg.grid_m, reg_cfg.grid_n)
            return estimate(corr, estimator=args.estimator, config=reg_cfg, seed=cfg.seed + i)
        except CamoflowError as exc:
            raise PipelineError(f"frame pair {i}: {exc}", frame_index=i) from exc

    indices = range(len(flows))
    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(run, indices))
    else:
        results = [run(i) for i in indices]

    for i, result in enumerate(results):
        payload = result.to_dict()
        payload["pair"] = i
        payload["estimator"] = args.estimator
        with open(outdir / f"registration_{i:04d}.json", "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
        weights_img = result.weights.reshape(reg_cfg.grid_m, reg_cfg.grid_n)
        write_image(weights_img, outdir / f"inliers_{i:04d}.png")

    summary = {
        "sequence": str(root),
        "pairs": len(results),
        "estimator": args.estimator,
        "mean_loss": float(np.mean([r.loss for r in results])),
        "converged": int(sum(r.converged for r in results)),
    }
    gt = _load_gt_homographies(root)
    if gt is not None:
        matrices, (width, height) = gt
        errors = [
            corner_transfer_error(r.homography, h, width, height)
            for r, h in zip(results, matrices)
        ]
        summary["corner_error_px"] = {
            "mean": float(np.mean(errors)),
            "max": float(np.max(errors)),
            "per_pair": [float(e) for e in errors],
        }
    with open(outdir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    print(json.dumps({k: v for k, v in summary.items() if k != "corner_error_px"}
                     | ({"corner_error_px_mean": summary["corner_error_px"]["mean"]}
                        if "corner_error_px" in summary else {})))
    return 0


def cmd_segment(args) -> int:
    cfg = _load_pipeline_config(args)
    root, frames, flows = _load_sequence_dir(args.sequence)
    outdir = _resolve_output(args, cfg, f"segment-{root.name}")
    outdir.mkdir(parents=True, exist_ok=True)

    pairs = segment_sequence(
        frames,
        flows,
        cfg.registration,
        cfg.segmentation,
        estimator=args.estimator,
        seed=cfg.seed,
        jobs=args.jobs,
    )
    for i, pair in enumerate(pairs):
        write_mask(pair.mask, outdir / f"mask_{i:04d}.png")
        if args.panels:
            write_image(_panel(frames[i], frames[i + 1], flows[i], pair), outdir / f"panel_{i:04d}.png")

    summary: dict = {"sequence": str(root), "pairs": len(pairs), "output": str(outdir)}
    gt_masks = _indexed_files(root, _MASK_RE)
    if len(gt_masks) >= len(pairs) + 1:
        gt = [read_mask(gt_masks[i]) for i in range(len(pairs))]
        labels = _gt_pair_labels(root, len(pairs))
        report = evaluate_masks(
            [p.mask for p in pairs],
            gt_masks=gt,
            gt_boxes=None,
            labels=labels,
            tolerance=cfg.eval.contour_tolerance,
            rule=cfg.eval.aggregation,
        )
        with open(outdir / "report.json", "w") as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        summary["region_mean"] = report.region.mean if report.region else None
        summary["contour_mean"] = report.contour.mean if report.contour else None
    print(json.dumps(summary))
    return 0


def _panel(frame_t, frame_t1, flow, pair) -> np.ndarray:
    """Side-by-side diagnostic: frames, flow wheel, diff, saliency, mask."""
    def as_rgb(img):
        arr = np.asarray(img, dtype=np.float64)
        if arr.ndim == 2:
            arr = np.repeat(arr[:, :, None], 3, axis=2)
        return arr

    lo, hi = float(pair.saliency.min()), float(pair.saliency.max())
    saliency = (pair.saliency - lo) / (hi - lo) if hi > lo else pair.saliency
    columns = [
        as_rgb(frame_t),
        as_rgb(frame_t1),
        flow_to_color(flow),
        as_rgb(pair.diff / max(pair.diff.max(), 1e-12)),
        as_rgb(saliency),
        as_rgb(pair.mask.astype(np.float64)),
    ]
    return np.concatenate(columns, axis=1)


def _parse_pair(text: str, name: str, cast) -> tuple:
    parts = text.split(":")
    if len(parts) != 2:
        raise ConfigError(f"{name} must look like A:B, got {text!r}")
    try:
        return cast(parts[0]), cast(parts[1])
    except ValueError as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def cmd_synth(args) -> int:
    cfg = _load_pipeline_config(args)
    synth = cfg.synth
    overrides = {}
    if args.mode:
        overrides["mode"] = args.mode
    if args.length is not None:
        overrides["length"] = args.length
    if args.jitter is not None:
        overrides["jitter"] = args.jitter
    if args.static:
        overrides["static_interval"] = _parse_pair(args.static, "--static", int)
    if args.brightness:
        overrides["brightness"] = _parse_pair(args.brightness, "--brightness", float)
    if args.seed is not None:
        overrides["seed"] = args.seed
    sprite_overrides = {}
    if args.sprite:
        sprite_overrides["shape"] = args.sprite
    if args.sprite_size is not None:
        sprite_overrides["size"] = args.sprite_size
    if sprite_overrides:
        overrides["sprite"] = replace(synth.sprite, **sprite_overrides)
    if overrides:
        synth = replace(synth, **overrides)

    sequence = generate_sequence(synth)
    outdir = _resolve_output(args, cfg, f"synth-seed{synth.seed}")
    save_sequence(sequence, outdir)
    print(
        json.dumps(
            {
                "output": str(outdir),
                "frames": synth.length,
                "mode": synth.mode,
                "seed": synth.seed,
                "sprite": synth.sprite.shape,
            }
        )
    )
    return 0


def cmd_eval(args) -> int:
    cfg = _load_pipeline_config(args)
    pred_dir = Path(args.predictions)
    if not pred_dir.is_dir():
        raise ConfigError(f"{pred_dir} is not a directory")
    mask_paths = _indexed_files(pred_dir, _MASK_RE)
    if not mask_paths:
        raise ConfigError(f"{pred_dir}: no mask_NNNN.png files found")
    preds = [read_mask(p) for p in mask_paths]
    n = len(preds)

    rows = read_annotations(args.annotations)
    out_of_range = [f for f, _, _ in rows if f >= n]
    if out_of_range:
        raise ConfigError(
            f"annotation frames {out_of_range} exceed the {n} available masks"
        )
    boxes, labels = densify_annotations(rows, n)

    gt_masks = None
    if args.gt_masks:
        gt_dir = Path(args.gt_masks)
        missing = [i for i in range(n) if not (gt_dir / f"mask_{i:04d}.png").exists()]
        if missing:
            raise ConfigError(f"{gt_dir}: missing GT masks for frames {missing}")
        gt_masks = [read_mask(gt_dir / f"mask_{i:04d}.png") for i in range(n)]

    report = evaluate_masks(
        preds,
        gt_masks=gt_masks,
        gt_boxes=boxes,
        labels=labels,
        tolerance=cfg.eval.contour_tolerance,
        rule=cfg.eval.aggregation,
    )
    payload = report.to_dict()
    if args.output:
        out = Path(args.output)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "report.json", "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
    print(json.dumps(payload))
    return 0


def cmd_flow_vis(args) -> int:
    flow_path = Path(args.flow)
    flow = read_flo(flow_path)
    rgb = flow_to_color(flow, max_magnitude=args.max_magnitude)
    if args.output:
        out = Path(args.output)
        if out.suffix.lower() != ".png":
            out = out / (flow_path.stem + ".png")
            out.parent.mkdir(parents=True, exist_ok=True)
    else:
        out = flow_path.with_suffix(".png")
    write_image(rgb, out)
    print(json.dumps({"output": str(out)}))
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

_HANDLERS = {
    "register": cmd_register,
    "segment": cmd_segment,
    "synth": cmd_synth,
    "eval": cmd_eval,
    "flow-vis": cmd_flow_vis,
}


def _emit_error(exc: Exception) -> None:
    payload = {"error": type(exc).__name__, "message": str(exc)}
    frame_index = getattr(exc, "frame_index", None)
    if frame_index is not None:
        payload["frame_index"] = frame_index
    print(json.dumps(payload), file=sys.stderr)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.print_config:
        try:
            cfg = load_config(args.config) if args.config else PipelineConfig()
        except (CamoflowError, OSError) as exc:
            _emit_error(exc)
            return 2
        sys.stdout.write(dump_config(cfg))
        return 0

    if not args.command:
        parser.print_usage(sys.stderr)
        return 2

    handler = _HANDLERS[args.command]
    try:
        return handler(args)
    except (CamoflowError, OSError, ValueError) as exc:
        _emit_error(exc)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        _emit_error(exc)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
