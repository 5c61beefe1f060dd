"""Command-line entry point: ``vidbound <command> [options]``.

Exit status is 0 on success, 2 for invalid input or configuration and 3 when
a processing stage fails.
"""
from __future__ import annotations

import argparse
import contextlib
import logging
import sys
from pathlib import Path

import numpy as np

from . import fileio
from .config import PipelineConfig, load_config
from .detect import detect_boundaries, detect_flow_boundaries
from .evaluation import GroundTruth, boundary_pr, volume_pr, segmentation_bpr
from .flowtools import FlowPair, estimate_flow, temporal_smooth
from .globalize import spectral_boundaries
from .hierarchy import build_ucm, extract_superpixels, partition_closest_count
from .merge import merge_cues
from .pipeline import StageError, forbid_rng, run_pipeline
from .proposals import ProposalSet, average_contours, generate_proposals
from .raster import LabelMap, RasterError, VideoSegmentation, validate
from .videoseg import propagate_segmentation

EXIT_OK, EXIT_INVALID, EXIT_STAGE = 0, 2, 3

log = logging.getLogger("vidbound")


def _config(args) -> PipelineConfig:
    return load_config(args.config) if args.config else PipelineConfig()


def _out(args, default: str | None = None) -> Path:
    if args.out is None and default is None:
        raise RasterError("--out is required for this command")
    return Path(args.out if args.out is not None else default)


def _indexed(d: Path, pattern: str) -> list[Path]:
    out = []
    while (d / pattern.format(len(out))).exists():
        out.append(d / pattern.format(len(out)))
    return out


def _load_any_map(path: Path):
    if path.suffix.lower() in (".flo",):
        raise RasterError(f"{path}: expected a boundary map")
    return fileio.load_map(path)


# ---------------------------------------------------------------------------
# commands


def cmd_detect(args):
    cfg = _config(args)
    if args.input.suffix.lower() == ".flo":
        m = detect_flow_boundaries(fileio.load_flow(args.input), cfg.detector)
    else:
        img = fileio.load_frame(args.input)
        validate(img)
        m = detect_boundaries(img, cfg.detector)
    fileio.save_map(_out(args), m)


def cmd_flow(args):
    cfg = _config(args)
    a, b = fileio.load_frame(args.first), fileio.load_frame(args.second)
    if a.data.shape[:2] != b.data.shape[:2]:
        raise RasterError("frames differ in size")
    f = estimate_flow(a, b, cfg.flow_levels, cfg.flow_iters, cfg.flow_alpha)
    fileio.save_flow(_out(args), f)


def cmd_spb(args):
    cfg = _config(args)
    fileio.save_map(_out(args), spectral_boundaries(_load_any_map(args.input), cfg.spectral))


def cmd_proposals(args):
    cfg = _config(args)
    u = build_ucm(_load_any_map(args.input))
    props = generate_proposals(u, cfg.proposal_thresholds, cfg.proposal_seeds, cfg.proposal_depth)
    out = _out(args)
    if out.suffix.lower() in (".tif", ".tiff"):
        fileio.save_proposal_masks(out, props.masks)
    else:
        fileio.save_map(out, average_contours(props))


def cmd_merge(args):
    cues = []
    for item in args.maps:
        path, weight = item, 1.0
        head, sep, tail = item.rpartition(":")
        if sep:
            try:
                path, weight = head, float(tail)
            except ValueError:
                pass
        p = Path(path)
        if p.suffix.lower() in (".tif", ".tiff"):
            m = average_contours(ProposalSet.from_masks(fileio.load_proposal_masks(p)))
        else:
            m = _load_any_map(p)
        cues.append((m, weight))
    fileio.save_map(_out(args), merge_cues(cues))


def _flows_in(d: Path, n: int) -> list[FlowPair]:
    fwd = _indexed(d, "flow_fwd_{:05d}.flo")
    bwd = _indexed(d, "flow_bwd_{:05d}.flo")
    if len(fwd) < n - 1 or len(bwd) < n - 1:
        raise RasterError(f"{d}: need flow_fwd/flow_bwd files for {n - 1} frame pairs")
    return [FlowPair(fileio.load_flow(f, "forward"), fileio.load_flow(b, "backward"))
            for f, b in zip(fwd[:n - 1], bwd[:n - 1])]


def cmd_smooth(args):
    cfg = _config(args)
    paths = _indexed(args.video_dir, "boundary_{:05d}.pfm") or _indexed(args.video_dir, "boundary_{:05d}.png")
    if not paths:
        raise RasterError(f"{args.video_dir}: no boundary_%05d maps")
    maps = [fileio.load_map(p) for p in paths]
    out = _out(args)
    out.mkdir(parents=True, exist_ok=True)
    smoothed = temporal_smooth(maps, _flows_in(args.video_dir, len(maps)), cfg.smoothing) \
        if len(maps) > 1 else maps
    for t, m in enumerate(smoothed):
        fileio.save_map(out / f"smooth_{t:05d}.pfm", m)


def cmd_ucm(args):
    u = build_ucm(_load_any_map(args.input))
    out = _out(args)
    prefix = out.with_suffix("") if out.suffix else out
    fileio.save_ucm(prefix, u)


def cmd_spx(args):
    cfg = _config(args)
    u = fileio.load_ucm(args.ucm)
    if args.count is not None:
        labels = LabelMap(partition_closest_count(u, args.count))
    else:
        t = cfg.spx_threshold if args.threshold is None else args.threshold
        if not 0 <= t <= 1:
            raise RasterError("threshold must lie in [0, 1]")
        labels = extract_superpixels(u, t)
    fileio.save_labels(_out(args), labels)


def cmd_propagate(args):
    cfg = _config(args)
    paths = _indexed(args.video_dir, "spx_{:05d}.png")
    if not paths:
        raise RasterError(f"{args.video_dir}: no spx_%05d.png label maps")
    spx = [LabelMap(fileio.load_labels(p)) for p in paths]
    flows = _flows_in(args.video_dir, len(spx)) if len(spx) > 1 else []
    seg = propagate_segmentation(spx, [f.forward for f in flows], cfg.propagation)
    out = _out(args)
    out.mkdir(parents=True, exist_ok=True)
    for t in range(seg.n_frames):
        fileio.save_labels(out / f"video_{t:05d}.png", seg.frame(t))


def cmd_eval(args):
    cfg = _config(args)
    gts = _indexed(args.gt, "gt_{:05d}.png")
    if not gts:
        raise RasterError(f"{args.gt}: no gt_%05d.png annotations")
    gt = GroundTruth.single(np.stack([fileio.load_labels(p) for p in gts]))
    d = args.results
    out = _out(args, str(d))
    out.mkdir(parents=True, exist_ok=True)
    curves = {}
    trees = _indexed(d, "ucm_{:05d}_tree.txt")
    maps = _indexed(d, "merged_{:05d}.pfm")
    if trees:
        preds = [fileio.load_ucm(d / f"ucm_{t:05d}") for t in range(len(trees))]
        curves["bpr_boundaries"] = boundary_pr(preds, gt, cfg.eval_thresholds, cfg.eval_tol)
    elif maps:
        curves["bpr_boundaries"] = boundary_pr([fileio.load_map(p) for p in maps], gt,
                                               cfg.eval_thresholds, cfg.eval_tol)
    videos = _indexed(d, "video_{:05d}.png")
    if videos:
        seg = VideoSegmentation(np.stack([fileio.load_labels(p) for p in videos]))
        curves["bpr"] = segmentation_bpr([seg], gt, cfg.eval_tol)
        curves["vpr"] = volume_pr([seg], gt)
    if not curves:
        raise RasterError(f"{d}: nothing to evaluate")
    lines = []
    for name, c in curves.items():
        fileio.write_curve_csv(out / f"{name}.csv", c)
        lines += fileio.summary_lines(name, c)
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    if cfg.svg:
        fileio.write_pr_svg(out / "pr.svg", curves)
    print("\n".join(lines))


def cmd_pipeline(args):
    cfg = _config(args)
    m = run_pipeline(cfg, args.video_dir, _out(args), jobs=args.jobs, resume=args.resume)
    for k, v in sorted(m["summary"].items()):
        print(f"{k} = {v!r}")


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", type=Path, help="key = value pipeline configuration")
    common.add_argument("--jobs", type=int, help="worker processes for per-frame work")
    common.add_argument("--seedless", action="store_true", help="fail if any random generator is used")
    common.add_argument("--out", "-o", help="output file or directory")
    common.add_argument("--verbose", "-v", action="store_true")

    p = argparse.ArgumentParser(prog="vidbound", description="Video boundary detection and segmentation.")
    p.add_argument("--config", type=Path, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seedless", action="store_true", default=False)
    p.add_argument("--out", "-o", default=None)
    p.add_argument("--verbose", "-v", action="store_true", default=False)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        s = sub.add_parser(name, parents=[common], help=help_)
        s.set_defaults(func=fn)
        return s

    s = add("detect", cmd_detect, "boundary map of an image (or of a .flo magnitude)")
    s.add_argument("input", type=Path)
    s = add("flow", cmd_flow, "optical flow from FIRST to SECOND (.flo)")
    s.add_argument("first", type=Path)
    s.add_argument("second", type=Path)
    s = add("spb", cmd_spb, "spectral globalisation of a boundary map")
    s.add_argument("input", type=Path)
    s = add("proposals", cmd_proposals, "segment proposals (.tif masks) or their contour average")
    s.add_argument("input", type=Path)
    s = add("merge", cmd_merge, "hierarchy-level merge of boundary maps, each given as PATH[:WEIGHT]")
    s.add_argument("maps", nargs="+")
    s = add("smooth", cmd_smooth, "temporal smoothing of boundary_%%05d maps along flow")
    s.add_argument("video_dir", type=Path)
    s = add("ucm", cmd_ucm, "hierarchy of a boundary map (writes PREFIX.pfm, _base.png, _tree.txt)")
    s.add_argument("input", type=Path)
    s = add("spx", cmd_spx, "superpixels from a saved hierarchy prefix")
    s.add_argument("ucm", type=Path)
    g = s.add_mutually_exclusive_group()
    g.add_argument("--threshold", "-t", type=float, default=None)
    g.add_argument("--count", type=int, default=None)
    s = add("propagate", cmd_propagate, "label propagation over spx_%%05d.png along forward flow")
    s.add_argument("video_dir", type=Path)
    s = add("eval", cmd_eval, "BPR/VPR of a results directory against gt_%%05d.png")
    s.add_argument("results", type=Path)
    s.add_argument("--gt", type=Path, required=True)
    s = add("pipeline", cmd_pipeline, "all stages over a video directory")
    s.add_argument("video_dir", type=Path)
    s.add_argument("--resume", action="store_true")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_INVALID
    guard = forbid_rng() if args.seedless else contextlib.nullcontext()
    try:
        with guard:
            args.func(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except (RasterError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # anything else is a failure inside a stage
        print(f"error: stage {args.command!r} failed: {exc}", file=sys.stderr)
        return EXIT_STAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
