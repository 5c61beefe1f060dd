"""Segment proposals sampled from a Ucm, and the contour-averaging boundary cue."""
from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .hierarchy import Ucm, adjacency
from .raster import BoundaryMap

_FOUR = ndimage.generate_binary_structure(2, 1)


@dataclass(frozen=True, eq=False)
class ProposalSet:
    """Boolean masks with one provenance tag per mask.

    Tags: ``hierarchy-level``, ``seeded-merge`` or ``external-file``.
    """

    masks: tuple[np.ndarray, ...]
    sources: tuple[str, ...]

    def __post_init__(self):
        if len(self.masks) != len(self.sources):
            raise ValueError("one source tag per mask")
        if len({m.shape for m in self.masks}) > 1:
            raise ValueError("proposal masks must share dimensions")

    def __len__(self):
        return len(self.masks)

    @classmethod
    def from_masks(cls, masks, source="external-file"):
        masks = tuple(np.asarray(m, bool) for m in masks)
        return cls(masks, (source,) * len(masks))

    def deduplicated(self) -> "ProposalSet":
        seen = set()
        keep_m, keep_s = [], []
        for m, s in zip(self.masks, self.sources):
            key = (m.shape, np.packbits(m).tobytes())
            if key in seen:
                continue
            seen.add(key)
            keep_m.append(m)
            keep_s.append(s)
        return ProposalSet(tuple(keep_m), tuple(keep_s))

    def __add__(self, other: "ProposalSet") -> "ProposalSet":
        return ProposalSet(self.masks + other.masks, self.sources + other.sources)


def _level_masks(u: Ucm, thresholds):
    out = []
    for t in thresholds:
        part = u.partition_after(u.n_merges_below(t))
        for r in range(int(part.max()) + 1):
            out.append(part == r)
    return out


def _seeded_masks(u: Ucm, n_seeds: int, depth: int):
    labels = u.base.labels
    areas = np.bincount(labels.ravel(), minlength=u.n_base)
    seeds = sorted(range(u.n_base), key=lambda r: (-areas[r], r))[:n_seeds]
    nbrs = adjacency(labels)
    arcs = u.arc_strength
    out = []
    for seed in seeds:
        grown = {seed}
        mask = labels == seed
        heap = [(arcs[(min(seed, c), max(seed, c))], c) for c in nbrs[seed]]
        heapq.heapify(heap)
        for _ in range(depth):
            while heap and heap[0][1] in grown:
                heapq.heappop(heap)
            if not heap:
                break
            _, r = heapq.heappop(heap)
            grown.add(r)
            mask = mask | (labels == r)
            out.append(mask)
            for c in nbrs[r]:
                if c not in grown:
                    heapq.heappush(heap, (arcs[(min(r, c), max(r, c))], c))
    return out


def generate_proposals(u: Ucm, n_thresholds: int = 10, n_seeds: int = 8,
                       max_merge_depth: int = 10) -> ProposalSet:
    """Regions of ``n_thresholds`` evenly spaced Ucm levels plus seeded growth.

    Seeds are the largest base regions; each grows by absorbing the adjacent
    base region behind the weakest arc, emitting one proposal per step.
    """
    thresholds = [(i + 1) / (n_thresholds + 1) for i in range(n_thresholds)]
    level = _level_masks(u, thresholds)
    seeded = _seeded_masks(u, n_seeds, max_merge_depth)
    ps = ProposalSet(tuple(level) + tuple(seeded),
                     ("hierarchy-level",) * len(level) + ("seeded-merge",) * len(seeded))
    return ps.deduplicated()


def contour(mask: np.ndarray) -> np.ndarray:
    """Mask pixels with a 4-neighbour outside the mask; the frame border counts as outside."""
    inner = ndimage.binary_erosion(mask, structure=_FOUR, border_value=0)
    return mask & ~inner


def average_contours(p: ProposalSet) -> BoundaryMap:
    if len(p) == 0:
        raise ValueError("empty proposal set")
    acc = np.zeros(p.masks[0].shape, np.int64)
    for m in p.masks:
        acc += contour(m)
    return BoundaryMap(acc / len(p))
