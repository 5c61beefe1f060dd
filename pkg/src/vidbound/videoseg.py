"""Greedy propagation of superpixel labels along forward optical flow."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .raster import FlowField, LabelMap, RasterError, VideoSegmentation, relabel_array


@dataclass(frozen=True)
class PropagationConfig:
    overlap_threshold: float = 0.3
    allow_new_labels: bool = True

    def __post_init__(self):
        if not 0.0 <= self.overlap_threshold <= 1.0:
            raise ValueError("overlap_threshold must lie in [0, 1]")


def _votes(glob: np.ndarray, nxt: np.ndarray, flow: FlowField):
    """Vote counts ``(superpixel, global label) -> n`` from advected pixels."""
    h, w = glob.shape
    yy, xx = np.mgrid[0:h, 0:w]
    ty = np.rint(yy + flow.v.astype(np.float64)).astype(np.int64)
    tx = np.rint(xx + flow.u.astype(np.float64)).astype(np.int64)
    ok = (ty >= 0) & (ty < h) & (tx >= 0) & (tx < w)
    s = nxt[ty[ok], tx[ok]].astype(np.int64)
    g = glob[ok].astype(np.int64)
    ng = int(glob.max()) + 1
    keys, counts = np.unique(s * ng + g, return_counts=True)
    return keys // ng, keys % ng, counts


def _assign(glob: np.ndarray, nxt: np.ndarray, flow: FlowField, next_label: int,
            cfg: PropagationConfig) -> tuple[np.ndarray, int]:
    n_sp = int(nxt.max()) + 1
    area = np.bincount(nxt.ravel(), minlength=n_sp)
    sp, gl, cnt = _votes(glob, nxt, flow)
    best: dict[int, tuple[int, int]] = {}
    for s, g, c in zip(sp.tolist(), gl.tolist(), cnt.tolist()):
        cur = best.get(s)
        if cur is None or c > cur[0] or (c == cur[0] and g < cur[1]):
            best[s] = (c, g)
    order = sorted(best, key=lambda s: (-best[s][0], best[s][1], s))
    taken: set[int] = set()
    mapping = np.full(n_sp, -1, np.int64)
    for s in order:
        c, g = best[s]
        if c / area[s] >= cfg.overlap_threshold and g not in taken:
            mapping[s] = g
            taken.add(g)
        elif not cfg.allow_new_labels:
            mapping[s] = g
    for s in range(n_sp):
        if mapping[s] < 0:
            mapping[s] = next_label
            next_label += 1
    return mapping[nxt], next_label


def propagate_segmentation(spx: Sequence[LabelMap], flows: Sequence[FlowField],
                           cfg: PropagationConfig | None = None) -> VideoSegmentation:
    """Carry frame-0 labels forward; unmatched superpixels get fresh labels.

    Each superpixel of frame t+1 takes the global label that receives most of
    the advected votes, if those votes cover ``overlap_threshold`` of its area
    and no larger vote already claimed that label in this frame. Without
    ``allow_new_labels`` a failed match still adopts its best-voted label.
    """
    cfg = cfg or PropagationConfig()
    if not spx:
        return VideoSegmentation(np.zeros((0, 0, 0), np.int32))
    if len(flows) != len(spx) - 1:
        raise RasterError("need one forward flow per adjacent frame pair")
    shape = spx[0].shape
    if any(m.shape != shape for m in spx) or any(f.shape != shape for f in flows):
        raise RasterError("dimension mismatch")
    glob = relabel_array(spx[0].labels).astype(np.int64)
    frames = [glob]
    next_label = int(glob.max()) + 1
    for t, flow in enumerate(flows):
        glob, next_label = _assign(glob, spx[t + 1].labels, flow, next_label, cfg)
        frames.append(glob)
    return VideoSegmentation(relabel_array(np.stack(frames)))
