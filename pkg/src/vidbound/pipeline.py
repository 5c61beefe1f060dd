"""End-to-end run over a directory of frames.

Input layout (``%05d`` frame index from 0)::

    frame_%05d.png              required
    flow_fwd_%05d.flo           optional, frame t -> t+1
    flow_bwd_%05d.flo           optional, frame t+1 -> t
    gt_%05d.png                 optional, 16-bit label annotation
    boundary_%05d.{pfm,png}     optional, replaces the image detector output
    proposals_%05d.tif          optional, multi-page masks replacing generated proposals
"""
from __future__ import annotations

import contextlib
import hashlib
import json
import logging
import random
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from pathlib import Path

import numpy as np

from . import fileio
from .config import PipelineConfig
from .detect import detect_boundaries, detect_flow_boundaries
from .evaluation import GroundTruth, boundary_pr, segmentation_bpr, volume_pr
from .flowtools import FlowPair, estimate_flow, temporal_smooth
from .globalize import spectral_boundaries
from .hierarchy import Ucm, build_ucm, extract_superpixels, partition_closest_count, ucm_to_boundary_map
from .merge import merge_cues, merge_cues_ucm
from .proposals import ProposalSet, average_contours, generate_proposals
from .raster import BoundaryMap, FlowField, LabelMap, RasterError, validate
from .videoseg import propagate_segmentation

log = logging.getLogger(__name__)


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage


@contextlib.contextmanager
def forbid_rng():
    """Make any use of the global random generators raise."""
    def boom(*_a, **_k):
        raise AssertionError("random number generator used in --seedless mode")

    targets = [(np.random, n) for n in ("default_rng", "seed", "rand", "randn", "random",
                                         "randint", "choice", "shuffle", "permutation",
                                         "uniform", "normal", "RandomState")]
    targets += [(random, n) for n in ("random", "seed", "randint", "choice", "shuffle", "uniform")]
    saved = [(mod, n, getattr(mod, n)) for mod, n in targets]
    try:
        for mod, n, _ in saved:
            setattr(mod, n, boom)
        yield
    finally:
        for mod, n, f in saved:
            setattr(mod, n, f)


def _map_frames(fn, items, jobs: int):
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


# ---------------------------------------------------------------------------
# per-frame work (module level so worker processes can pickle it)


def op_cue(b: BoundaryMap, cfg: PipelineConfig, external: ProposalSet | None = None) -> BoundaryMap:
    if external is not None and len(external):
        return average_contours(external)
    u = build_ucm(b)
    return average_contours(generate_proposals(u, cfg.proposal_thresholds, cfg.proposal_seeds,
                                               cfg.proposal_depth))


def _flow_pair(args):
    a, b, cfg = args
    return FlowPair(estimate_flow(a, b, cfg.flow_levels, cfg.flow_iters, cfg.flow_alpha),
                    estimate_flow(b, a, cfg.flow_levels, cfg.flow_iters, cfg.flow_alpha))


def _image_cues(args):
    se_i, se_f, cfg, ext = args
    names = {n for n, _ in cfg.cues}
    out = {}
    if "detector" in names:
        out["detector"] = se_i
    if "flow_boundaries" in names:
        out["flow_boundaries"] = se_f
    if "spb" in names:
        out["spb"] = spectral_boundaries(se_i, cfg.spectral)
    if "flow_spb" in names:
        out["flow_spb"] = spectral_boundaries(se_f, cfg.spectral)
    if "op_proposals" in names:
        out["op_proposals"] = op_cue(se_i, cfg, ext)
    if "flow_op_proposals" in names:
        out["flow_op_proposals"] = op_cue(se_f, cfg)
    return out


def _merge_frame(args):
    cues, cfg = args
    u = merge_cues_ucm([(cues[n], w) for n, w in cfg.cues])
    return ucm_to_boundary_map(u), u


def flow_boundaries_for_frame(t: int, flows: list[FlowPair], cfg: PipelineConfig) -> BoundaryMap:
    """Detector on the magnitude of flow leaving frame t (forward and backward)."""
    maps = []
    if t < len(flows):
        maps.append(detect_flow_boundaries(flows[t].forward, cfg.detector).data)
    if t > 0:
        maps.append(detect_flow_boundaries(flows[t - 1].backward, cfg.detector).data)
    return BoundaryMap(np.maximum.reduce(maps))


# ---------------------------------------------------------------------------


@dataclass
class VideoInput:
    frames: list
    flows: list[FlowPair] | None
    gt: GroundTruth | None
    boundaries: list[BoundaryMap] | None
    proposals: list[ProposalSet | None]


def read_video_dir(video_dir) -> VideoInput:
    d = Path(video_dir)
    if not d.is_dir():
        raise RasterError(f"{d}: not a directory")
    frames = []
    while (d / f"frame_{len(frames):05d}.png").exists():
        frames.append(fileio.load_frame(d / f"frame_{len(frames):05d}.png"))
    if not frames:
        raise RasterError(f"{d}: missing frames (expected frame_00000.png, ...)")
    stray = sorted(p.name for p in d.glob("frame_*.png")
                   if p.name >= f"frame_{len(frames):05d}.png")
    if stray:
        raise RasterError(f"{d}: missing frames before {stray[0]}")
    for f in frames:
        validate(f)
    if len({f.data.shape[:2] for f in frames}) > 1:
        raise RasterError("frames differ in size")
    n = len(frames)

    flows = None
    fwd = [d / f"flow_fwd_{t:05d}.flo" for t in range(n - 1)]
    bwd = [d / f"flow_bwd_{t:05d}.flo" for t in range(n - 1)]
    if n > 1 and all(p.exists() for p in fwd + bwd):
        flows = [FlowPair(fileio.load_flow(f, "forward"), fileio.load_flow(b, "backward"))
                 for f, b in zip(fwd, bwd)]
        for fp in flows:
            validate(fp.forward)
            validate(fp.backward)

    gt = None
    gts = [d / f"gt_{t:05d}.png" for t in range(n)]
    if all(p.exists() for p in gts):
        gt = GroundTruth.single(np.stack([fileio.load_labels(p) for p in gts]))

    boundaries = None
    bpaths = []
    for t in range(n):
        cands = [d / f"boundary_{t:05d}.pfm", d / f"boundary_{t:05d}.png"]
        bpaths.append(next((p for p in cands if p.exists()), None))
    if all(p is not None for p in bpaths):
        boundaries = [fileio.load_map(p) for p in bpaths]

    proposals = []
    for t in range(n):
        p = d / f"proposals_{t:05d}.tif"
        proposals.append(ProposalSet.from_masks(fileio.load_proposal_masks(p)) if p.exists() else None)
    return VideoInput(frames, flows, gt, boundaries, proposals)


def _sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class _Stages:
    def __init__(self):
        self.timings: dict[str, float] = {}

    @contextlib.contextmanager
    def __call__(self, name: str):
        t0 = time.perf_counter()
        log.info("stage %s", name)
        try:
            yield
        except (RasterError, StageError):
            raise
        except Exception as exc:
            raise StageError(name, exc) from exc
        finally:
            self.timings[name] = time.perf_counter() - t0


def run_pipeline(cfg: PipelineConfig, video_dir, out_dir, jobs: int = 1, resume: bool = False) -> dict:
    """Run every stage and write artifacts; returns the manifest dictionary.

    ``manifest.json`` lists the config digest and a SHA-256 of each artifact and
    is reproducible bit for bit; wall-clock timings go to ``timings.json``.
    With ``resume``, merged maps and hierarchies already present in ``out_dir``
    from a run with the same config are loaded instead of recomputed.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stage = _Stages()
    with stage("load"):
        vid = read_video_dir(video_dir)
    n = len(vid.frames)
    names = {c for c, _ in cfg.cues}
    artifacts: list[Path] = []

    old_manifest = out / "manifest.json"
    can_resume = resume and old_manifest.exists() and \
        json.loads(old_manifest.read_text()).get("config_sha256") == cfg.digest()
    merged_paths = [out / f"merged_{t:05d}.pfm" for t in range(n)]
    ucm_prefixes = [out / f"ucm_{t:05d}" for t in range(n)]
    resumed = can_resume and all(p.exists() for p in merged_paths) and \
        all(p.with_name(p.name + "_tree.txt").exists() for p in ucm_prefixes)

    flows = vid.flows
    if flows is None and n > 1:
        with stage("flow"):
            flows = _map_frames(_flow_pair, [(vid.frames[t], vid.frames[t + 1], cfg) for t in range(n - 1)], jobs)
    flows = flows or []

    if resumed:
        with stage("resume"):
            merged = [fileio.load_map(p) for p in merged_paths]
            ucms = [fileio.load_ucm(p) for p in ucm_prefixes]
    else:
        with stage("detect"):
            if vid.boundaries is not None:
                se_i = vid.boundaries
            else:
                se_i = _map_frames(partial(detect_boundaries, cfg=cfg.detector), vid.frames, jobs)
            needs_flow = names & {"flow_boundaries", "flow_spb", "flow_op_proposals"}
            if needs_flow and n < 2:
                raise RasterError("flow cues need at least two frames")
            se_f = [flow_boundaries_for_frame(t, flows, cfg) if needs_flow else None for t in range(n)]
        with stage("cues"):
            cues = _map_frames(_image_cues, [(se_i[t], se_f[t], cfg, vid.proposals[t]) for t in range(n)], jobs)
        if "temporal_smooth" in names:
            with stage("smooth"):
                if n > 1:
                    ts = temporal_smooth(se_i, flows, cfg.smoothing)
                else:
                    ts = [merge_cues([(se_i[0], 1.0)])]
                for t in range(n):
                    cues[t]["temporal_smooth"] = ts[t]
        with stage("merge"):
            res = _map_frames(_merge_frame, [(cues[t], cfg) for t in range(n)], jobs)
            merged = [r[0] for r in res]
            ucms = [r[1] for r in res]

    with stage("superpixels"):
        if cfg.spx_count is not None:
            spx = [LabelMap(partition_closest_count(u, cfg.spx_count)) for u in ucms]
        else:
            spx = [extract_superpixels(u, cfg.spx_threshold) for u in ucms]

    with stage("propagate"):
        fwd = [fp.forward for fp in flows]
        video = propagate_segmentation(spx, fwd, cfg.propagation)
        granular = [propagate_segmentation([extract_superpixels(u, g) for u in ucms], fwd, cfg.propagation)
                    for g in cfg.granularities]

    with stage("write"):
        for t in range(n):
            fileio.save_map(merged_paths[t], merged[t])
            artifacts.append(merged_paths[t])
            artifacts += fileio.save_ucm(ucm_prefixes[t], ucms[t])
            p = out / f"spx_{t:05d}.png"
            fileio.save_labels(p, spx[t])
            artifacts.append(p)
            p = out / f"video_{t:05d}.png"
            fileio.save_labels(p, video.frame(t))
            artifacts.append(p)

    summary: dict[str, float] = {}
    if vid.gt is not None:
        with stage("eval"):
            if vid.gt.n_frames != n:
                raise RasterError("frame count mismatch between frames and ground truth")
            bpr_ucm = boundary_pr(ucms, vid.gt, cfg.eval_thresholds, cfg.eval_tol)
            bpr_seg = segmentation_bpr(granular, vid.gt, cfg.eval_tol)
            vpr = volume_pr(granular, vid.gt)
            curves = {"bpr_boundaries": bpr_ucm, "bpr": bpr_seg, "vpr": vpr}
            for name, curve in curves.items():
                p = out / f"{name}.csv"
                header = ("threshold" if name == "bpr_boundaries" else "granularity",
                          "precision", "recall", "f_measure")
                fileio.write_curve_csv(p, curve, header)
                artifacts.append(p)
                summary.update({f"{name}.ods": curve.ods, f"{name}.oss": curve.oss, f"{name}.ap": curve.ap})
            p = out / "summary.txt"
            lines = []
            for name, curve in curves.items():
                lines += fileio.summary_lines(name, curve)
            p.write_text("\n".join(lines) + "\n")
            artifacts.append(p)
            if cfg.svg:
                p = out / "pr.svg"
                fileio.write_pr_svg(p, curves)
                artifacts.append(p)

    (out / "config.txt").write_text(cfg.dumps())
    manifest = {
        "config_sha256": cfg.digest(),
        "frames": n,
        "artifacts": {p.name: _sha(p) for p in sorted(artifacts)},
        "summary": summary,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    (out / "timings.json").write_text(json.dumps(stage.timings, indent=2) + "\n")
    return manifest
