"""Boundary and volume precision/recall, under-segmentation error and
superpixel quality curves.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy.spatial import cKDTree
from skimage.morphology import thin

from .hierarchy import Ucm, partition_closest_count
from .raster import BoundaryMap, LabelMap, RasterError, VideoSegmentation

# ---------------------------------------------------------------------------
# data types


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Human annotations of one video: one ``(T, H, W)`` label volume per annotator."""

    annotations: tuple[np.ndarray, ...]

    def __post_init__(self):
        anns = tuple(np.asarray(a, dtype=np.int64) for a in self.annotations)
        anns = tuple(a[None] if a.ndim == 2 else a for a in anns)
        if not anns:
            raise RasterError("ground truth needs at least one annotator")
        if len({a.shape for a in anns}) > 1:
            raise RasterError("annotators disagree on dimensions")
        object.__setattr__(self, "annotations", anns)

    @property
    def n_frames(self) -> int:
        return self.annotations[0].shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.annotations[0].shape[1:]

    @classmethod
    def single(cls, labels) -> "GroundTruth":
        return cls((np.asarray(labels),))


@dataclass
class PrCurve:
    samples: list[tuple[float, float, float, float]]
    ods: float
    oss: float
    ap: float
    ods_threshold: float = math.nan
    per_item_best: list[float] = field(default_factory=list)


def f_measure(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def average_precision(recall: Sequence[float], precision: Sequence[float]) -> float:
    """Area under the precision envelope, integrated over recall from 0."""
    order = np.argsort(recall, kind="stable")
    r = np.asarray(recall, dtype=np.float64)[order]
    p = np.asarray(precision, dtype=np.float64)[order]
    env = np.maximum.accumulate(p[::-1])[::-1]
    prev = np.concatenate([[0.0], r[:-1]])
    return float(np.clip(np.sum((r - prev) * env), 0.0, 1.0))


def default_tolerance(shape) -> int:
    return int(math.ceil(0.0075 * math.hypot(*shape)))


def _curve(levels, counts) -> PrCurve:
    """Aggregate ``counts[item][level] = (cntP, sumP, [(cntR, sumR) per annotator])``."""
    n_items = len(counts)
    samples = []
    per_item_f = np.zeros((n_items, len(levels)))
    for k, lev in enumerate(levels):
        cp = sum(c[k][0] for c in counts)
        sp_ = sum(c[k][1] for c in counts)
        n_ann = len(counts[0][k][2])
        rs = []
        for a in range(n_ann):
            cr = sum(c[k][2][a][0] for c in counts)
            sr = sum(c[k][2][a][1] for c in counts)
            rs.append(cr / sr if sr else 0.0)
        p = cp / sp_ if sp_ else 1.0
        r = float(np.mean(rs))
        samples.append((float(lev), p, r, f_measure(p, r)))
        for i, c in enumerate(counts):
            pi = c[k][0] / c[k][1] if c[k][1] else 1.0
            ri = float(np.mean([cr / sr if sr else 0.0 for cr, sr in c[k][2]]))
            per_item_f[i, k] = f_measure(pi, ri)
    mean_f = per_item_f.mean(axis=0)
    best = int(np.argmax(mean_f))
    return PrCurve(
        samples=samples,
        ods=float(mean_f[best]),
        oss=float(per_item_f.max(axis=1).mean()),
        ap=average_precision([s[2] for s in samples], [s[1] for s in samples]),
        ods_threshold=float(levels[best]),
        per_item_best=[float(x) for x in per_item_f.max(axis=1)],
    )


# ---------------------------------------------------------------------------
# boundary matching


def seg_boundaries(labels: np.ndarray) -> np.ndarray:
    """One-pixel-wide boundary of a partition.

    A pixel is marked when its east, south or south-east neighbour carries a
    different label, so each region border is drawn once rather than on both
    sides. Finer partitions always mark a superset of pixels.
    """
    lab = np.asarray(labels)
    b = np.zeros(lab.shape, bool)
    b[:, :-1] |= lab[:, :-1] != lab[:, 1:]
    b[:-1, :] |= lab[:-1, :] != lab[1:, :]
    b[:-1, :-1] |= lab[:-1, :-1] != lab[1:, 1:]
    return b


def thin_boundary(mask: np.ndarray) -> np.ndarray:
    return thin(np.asarray(mask, bool))


def match_boundaries(pred: np.ndarray, gt: np.ndarray, tol: float):
    """Maximum one-to-one matching of boundary pixels within distance ``tol``.

    Pairs are first taken greedily, nearest first (ties by pixel order), then
    the matching is grown along augmenting paths until no unmatched predicted
    pixel can be served. Returns boolean masks of matched pred / gt pixels.
    """
    pp = np.argwhere(pred)
    gg = np.argwhere(gt)
    mp = np.zeros(pred.shape, bool)
    mg = np.zeros(gt.shape, bool)
    if len(pp) == 0 or len(gg) == 0:
        return mp, mg
    pairs = cKDTree(pp).sparse_distance_matrix(cKDTree(gg), tol, output_type="ndarray")
    if len(pairs) == 0:
        return mp, mg
    order = np.lexsort((pairs["j"], pairs["i"], pairs["v"]))
    pi, gj = pairs["i"][order], pairs["j"][order]
    match_p = np.full(len(pp), -1, np.int64)
    match_g = np.full(len(gg), -1, np.int64)
    for i, j in zip(pi.tolist(), gj.tolist()):
        if match_p[i] < 0 and match_g[j] < 0:
            match_p[i] = j
            match_g[j] = i
    adj: list[list[int]] = [[] for _ in range(len(pp))]
    for i, j in zip(pi.tolist(), gj.tolist()):
        adj[i].append(j)
    _augment(adj, match_p, match_g)
    mp[tuple(pp[match_p >= 0].T)] = True
    mg[tuple(gg[match_g >= 0].T)] = True
    return mp, mg


def _augment(adj, match_p, match_g):
    """Kuhn's augmenting paths from every free pred vertex (iterative DFS)."""
    for root in range(len(adj)):
        if match_p[root] >= 0 or not adj[root]:
            continue
        visited = set()
        stack = [(root, iter(adj[root]))]
        parent_g: dict[int, int] = {}
        found = -1
        while stack and found < 0:
            u, it = stack[-1]
            for j in it:
                if j in visited:
                    continue
                visited.add(j)
                parent_g[j] = u
                if match_g[j] < 0:
                    found = j
                    break
                nxt = int(match_g[j])
                stack.append((nxt, iter(adj[nxt])))
                break
            else:
                stack.pop()
        if found < 0:
            continue
        j = found
        while True:
            u = parent_g[j]
            prev = int(match_p[u])
            match_p[u] = j
            match_g[j] = u
            if u == root:
                break
            j = prev


def _frame_counts(pred_b: np.ndarray, gt_bs: Sequence[np.ndarray], tol: float):
    any_match = np.zeros(pred_b.shape, bool)
    per_ann = []
    for gb in gt_bs:
        mp, mg = match_boundaries(pred_b, gb, tol)
        any_match |= mp
        per_ann.append((int(mg.sum()), int(gb.sum())))
    return int(any_match.sum()), int(pred_b.sum()), per_ann


def _add_counts(acc, new):
    if acc is None:
        return new
    return (acc[0] + new[0], acc[1] + new[1],
            [(a[0] + b[0], a[1] + b[1]) for a, b in zip(acc[2], new[2])])


FramePred = Union[BoundaryMap, Ucm]


def _binarize(pred: FramePred, t: float) -> np.ndarray:
    if isinstance(pred, Ucm):
        return seg_boundaries(pred.partition_after(pred.n_merges_below(t)))
    return thin_boundary(np.asarray(pred.data) >= t)


def _as_items(pred, gt):
    if isinstance(gt, GroundTruth):
        return [pred], [gt]
    return list(pred), list(gt)


def boundary_pr(pred, gt, n_thresholds: int = 25, tol: float | None = None) -> PrCurve:
    """Boundary precision/recall of per-frame maps or hierarchies.

    ``pred`` is a list of frames (BoundaryMap or Ucm) for one video, matched
    with a single GroundTruth, or a list of such videos matched with a list of
    GroundTruth. Thresholds are ``k/(n+1)``, ``k = 1..n``.
    """
    preds, gts = _as_items(pred, gt)
    levels = [(k + 1) / (n_thresholds + 1) for k in range(n_thresholds)]
    counts = []
    for frames, g in zip(preds, gts):
        if len(frames) != g.n_frames:
            raise RasterError("frame count mismatch")
        tol_ = default_tolerance(g.shape) if tol is None else tol
        gt_b = [[seg_boundaries(a[f]) for a in g.annotations] for f in range(g.n_frames)]
        if sum(int(b.sum()) for fb in gt_b for b in fb) == 0:
            raise RasterError("ground truth has no boundary pixels")
        # thinned maps are scored against equally thinned annotations
        gt_thin = [[thin_boundary(b) for b in fb] for fb in gt_b]
        item = []
        for t in levels:
            acc = None
            for f, fp in enumerate(frames):
                if fp.shape != g.shape:
                    raise RasterError("dimension mismatch")
                ref = gt_b[f] if isinstance(fp, Ucm) else gt_thin[f]
                acc = _add_counts(acc, _frame_counts(_binarize(fp, t), ref, tol_))
            item.append(acc)
        counts.append(item)
    return _curve(levels, counts)


def segmentation_bpr(granularities, gt, tol: float | None = None) -> PrCurve:
    """Boundary PR of video segmentations, one sample per granularity."""
    preds, gts = _as_items(granularities, gt)
    counts = []
    for segs, g in zip(preds, gts):
        tol_ = default_tolerance(g.shape) if tol is None else tol
        gt_b = [[seg_boundaries(a[f]) for a in g.annotations] for f in range(g.n_frames)]
        item = []
        for seg in segs:
            if seg.n_frames != g.n_frames:
                raise RasterError("frame count mismatch")
            acc = None
            for f in range(g.n_frames):
                acc = _add_counts(acc, _frame_counts(seg_boundaries(seg.frame(f)), gt_b[f], tol_))
            item.append(acc)
        counts.append(item)
    return _curve(list(range(len(preds[0]))), counts)


# ---------------------------------------------------------------------------
# volumes


def _contingency(a: np.ndarray, b: np.ndarray):
    a = np.asarray(a, dtype=np.int64).ravel()
    b = np.asarray(b, dtype=np.int64).ravel()
    nb = int(b.max()) + 1
    keys, counts = np.unique(a * nb + b, return_counts=True)
    return keys // nb, keys % nb, counts


def _max_overlap(rows: np.ndarray, counts: np.ndarray) -> dict[int, int]:
    out: dict[int, int] = {}
    for r, c in zip(rows.tolist(), counts.tolist()):
        if c > out.get(r, 0):
            out[r] = c
    return out


def volume_counts(seg: np.ndarray, anns: Sequence[np.ndarray]):
    """``(sum_v max |v & g|, N, [(sum_g max |v & g|, N) per annotator])``.

    A predicted volume's overlap is its best over all annotators.
    """
    seg = np.asarray(seg)
    best_v: dict[int, int] = {}
    per_ann = []
    for g in anns:
        if g.shape != seg.shape:
            raise RasterError("frame count mismatch")
        v, gg, c = _contingency(seg, g)
        for k, x in _max_overlap(v, c).items():
            best_v[k] = max(best_v.get(k, 0), x)
        per_ann.append((sum(_max_overlap(gg, c).values()), seg.size))
    return sum(best_v.values()), seg.size, per_ann


def volume_pr(granularities, gt) -> PrCurve:
    """Volume PR over several granularities of a video segmentation.

    precision = sum_v max_g |v & g| / sum_v |v|; recall swaps the roles and is
    averaged over annotators.
    """
    preds, gts = _as_items(granularities, gt)
    counts = []
    for segs, g in zip(preds, gts):
        item = []
        for seg in segs:
            lab = seg.labels if isinstance(seg, VideoSegmentation) else np.asarray(seg)
            item.append(volume_counts(lab, g.annotations))
        counts.append(item)
    return _curve(list(range(len(preds[0]))), counts)


def undersegmentation_error(spx, gt) -> float:
    """Corrected under-segmentation error: (1/N) sum_g sum_s min(|s&g|, |s\\g|)."""
    s = spx.labels if isinstance(spx, LabelMap) else np.asarray(spx)
    g = gt.labels if isinstance(gt, LabelMap) else np.asarray(gt)
    if s.shape != g.shape:
        raise RasterError("dimension mismatch")
    sl, _, c = _contingency(s, g)
    size = np.bincount(sl, weights=c)
    return float(np.minimum(c, size[sl] - c).sum() / s.size)


def superpixel_curves(hierarchies: Sequence[Ucm], gts: Sequence, spx_counts: Sequence[int],
                      tol: float | None = None) -> list[tuple[float, float, float, float]]:
    """Rows ``(mean #superpixels, boundary recall, boundary precision, mean USE)``.

    For each target count every image uses the Ucm level whose region count
    is closest to the target. ``gts`` holds one label map (or a list of
    annotator label maps) per image.
    """
    rows = []
    for target in spx_counts:
        n_spx, use = [], []
        acc = None
        for u, g in zip(hierarchies, gts):
            anns = [np.asarray(a.labels if isinstance(a, LabelMap) else a)
                    for a in (g if isinstance(g, (list, tuple)) else [g])]
            part = partition_closest_count(u, target)
            n_spx.append(int(part.max()) + 1)
            tol_ = default_tolerance(part.shape) if tol is None else tol
            acc = _add_counts(acc, _frame_counts(seg_boundaries(part),
                                                 [seg_boundaries(a) for a in anns], tol_))
            use.append(float(np.mean([undersegmentation_error(part, a) for a in anns])))
        cp, sp_, per_ann = acc
        recall = float(np.mean([c / s if s else 0.0 for c, s in per_ann]))
        precision = cp / sp_ if sp_ else 1.0
        rows.append((float(np.mean(n_spx)), recall, precision, float(np.mean(use))))
    return rows
