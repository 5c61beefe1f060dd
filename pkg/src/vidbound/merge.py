"""Merging boundary cues through their hierarchies instead of pixel by pixel.

Each cue is turned into a Ucm. The cues' base partitions are intersected into
a common base, and that base is agglomerated greedily. The distance between
two clusters is the weighted mean, over cues, of the ultrametric distance
between the cue regions that hold the majority of each cluster's pixels.
Snapping clusters to majority regions makes a boundary displaced by a pixel
or two between cues count as one boundary.
"""
from __future__ import annotations

import math
from collections import Counter
from fractions import Fraction
from typing import Sequence

import numpy as np

from .hierarchy import Ucm, Ultrametric, adjacency, agglomerate, build_ucm, f32, ucm_to_boundary_map
from .raster import BoundaryMap, LabelMap, RasterError, connected_components


def normalized_weights(weights: Sequence[float]) -> list[float]:
    """Weights divided by their sum, exactly invariant to a common scale factor."""
    if not weights:
        raise RasterError("empty cue list")
    if min(weights) <= 0:
        raise RasterError("cue weights must be positive")
    fr = [Fraction(w) for w in weights]
    total = sum(fr)
    return [float(w / total) for w in fr]


def common_base(bases: Sequence[np.ndarray]) -> np.ndarray:
    """4-connected pieces of the pixelwise intersection of all partitions."""
    combo = np.zeros(bases[0].shape, np.int64)
    for lab in bases:
        combo = combo * (int(lab.max()) + 1) + lab
        combo = np.unique(combo, return_inverse=True)[1].reshape(lab.shape)
    return connected_components(combo)


def _majority(c: Counter) -> int:
    return min(c.items(), key=lambda kv: (-kv[1], kv[0]))[0]


def merge_ucms(ucms: Sequence[Ucm], weights: Sequence[float]) -> Ucm:
    """Align and average several hierarchies on their common base."""
    if not ucms:
        raise RasterError("empty cue list")
    if len({u.base.shape for u in ucms}) > 1:
        raise RasterError("dimension mismatch between cues")
    w = normalized_weights(weights)
    base = common_base([u.base.labels for u in ucms])
    n = int(base.max()) + 1
    flat = base.ravel()
    # cue base region of every common region, and its area
    first = np.unique(flat, return_index=True)[1]
    area = np.bincount(flat, minlength=n)
    owner = [u.base.labels.ravel()[first] for u in ucms]
    dist = [Ultrametric(u) for u in ucms]
    votes: dict[int, list[Counter]] = {
        r: [Counter({int(o[r]): int(area[r])}) for o in owner] for r in range(n)}
    reps = {r: [int(o[r]) for o in owner] for r in range(n)}

    def strength(x, y):
        ds = [d(a, b) for d, a, b in zip(dist, reps[x], reps[y])]
        if min(ds) == max(ds):
            return ds[0]
        return f32(math.fsum(wi * di for wi, di in zip(w, ds)))

    def on_merge(a, c, m):
        votes[m] = [va + vc for va, vc in zip(votes.pop(a), votes.pop(c))]
        reps[m] = [_majority(v) for v in votes[m]]
        del reps[a], reps[c]

    merges = agglomerate(adjacency(base), strength, on_merge)
    return Ucm(LabelMap(base), merges)


def merge_cues_ucm(cues: Sequence[tuple[BoundaryMap, float]]) -> Ucm:
    """Merge weighted boundary maps into one hierarchy."""
    cues = list(cues)
    if not cues:
        raise RasterError("empty cue list")
    if len({b.shape for b, _ in cues}) > 1:
        raise RasterError("dimension mismatch between cues")
    ucms = [build_ucm(b) for b, _ in cues]
    return merge_ucms(ucms, [wt for _, wt in cues])


def merge_cues(cues: Sequence[tuple[BoundaryMap, float]]) -> BoundaryMap:
    """Merge weighted boundary maps; returns the merged hierarchy rasterised."""
    return ucm_to_boundary_map(merge_cues_ucm(cues))


def pixelwise_average(cues: Sequence[tuple[BoundaryMap, float]]) -> BoundaryMap:
    """Naive weighted per-pixel average; kept as a reference for comparisons."""
    w = normalized_weights([wt for _, wt in cues])
    return BoundaryMap(sum(wi * b.data.astype(np.float64) for wi, (b, _) in zip(w, cues)))
