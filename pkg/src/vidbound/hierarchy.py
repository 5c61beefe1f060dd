"""Ultrametric contour maps: watershed over-segmentation, greedy mean-boundary
agglomeration, thresholding into superpixels and rasterisation back to a map.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .raster import BoundaryMap, LabelMap, RasterError, relabel_array


def f32(x: float) -> float:
    """Round to the nearest float32 so strengths survive float32 maps exactly."""
    return float(np.float32(x))


# ---------------------------------------------------------------------------
# watershed


def _equal_plateaus(values: np.ndarray) -> np.ndarray:
    h, w = values.shape
    idx = np.arange(h * w).reshape(h, w)
    eh = values[:, 1:] == values[:, :-1]
    ev = values[1:, :] == values[:-1, :]
    rows = np.concatenate([idx[:, :-1][eh], idx[:-1, :][ev]])
    cols = np.concatenate([idx[:, 1:][eh], idx[1:, :][ev]])
    g = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(h * w, h * w))
    return connected_components(g, directed=False)[1]


def _has_lower_neighbour(values: np.ndarray) -> np.ndarray:
    low = np.zeros(values.shape, bool)
    low[:, 1:] |= values[:, :-1] < values[:, 1:]
    low[:, :-1] |= values[:, 1:] < values[:, :-1]
    low[1:, :] |= values[:-1, :] < values[1:, :]
    low[:-1, :] |= values[1:, :] < values[:-1, :]
    return low


def regional_minima(values: np.ndarray) -> np.ndarray:
    """Label each 4-connected regional-minimum plateau (0..M-1), -1 elsewhere."""
    comp = _equal_plateaus(values)
    lower = np.bincount(comp, weights=_has_lower_neighbour(values).ravel()) > 0
    seed = ~lower[comp]
    out = np.full(values.size, -1, np.int64)
    out[seed] = relabel_array(comp[seed])
    return out.reshape(values.shape)


def watershed_oversegment(b: BoundaryMap) -> LabelMap:
    """Meyer flooding from regional minima in (value, row-major index) order.

    A pixel reached by several basins at the same key joins the smallest
    basin label.
    """
    values = np.asarray(b.data, dtype=np.float64)
    h, w = values.shape
    labels = regional_minima(values).ravel()
    flat = values.ravel().tolist()
    lab = labels.tolist()
    heap = []
    for p in np.flatnonzero(labels >= 0).tolist():
        y, x = divmod(p, w)
        lp = lab[p]
        if x > 0 and lab[p - 1] < 0:
            heap.append((flat[p - 1], p - 1, lp))
        if x < w - 1 and lab[p + 1] < 0:
            heap.append((flat[p + 1], p + 1, lp))
        if y > 0 and lab[p - w] < 0:
            heap.append((flat[p - w], p - w, lp))
        if y < h - 1 and lab[p + w] < 0:
            heap.append((flat[p + w], p + w, lp))
    heapq.heapify(heap)
    push, pop = heapq.heappush, heapq.heappop
    while heap:
        _, p, lp = pop(heap)
        if lab[p] >= 0:
            continue
        lab[p] = lp
        y, x = divmod(p, w)
        if x > 0 and lab[p - 1] < 0:
            push(heap, (flat[p - 1], p - 1, lp))
        if x < w - 1 and lab[p + 1] < 0:
            push(heap, (flat[p + 1], p + 1, lp))
        if y > 0 and lab[p - w] < 0:
            push(heap, (flat[p - w], p - w, lp))
        if y < h - 1 and lab[p + w] < 0:
            push(heap, (flat[p + w], p + w, lp))
    return LabelMap(relabel_array(np.array(lab).reshape(h, w)))


# ---------------------------------------------------------------------------
# region adjacency


def interface_edges(labels: np.ndarray):
    """Flat index pairs ``(p, q)`` of 4-adjacent pixels with different labels."""
    h, w = labels.shape
    idx = np.arange(h * w).reshape(h, w)
    dh = labels[:, 1:] != labels[:, :-1]
    dv = labels[1:, :] != labels[:-1, :]
    p = np.concatenate([idx[:, :-1][dh], idx[:-1, :][dv]])
    q = np.concatenate([idx[:, 1:][dh], idx[1:, :][dv]])
    return p, q


def _single_foreign(labels: np.ndarray) -> np.ndarray:
    """True where all differently-labelled 4-neighbours share one label."""
    lab = labels.astype(np.int64)
    pad = np.pad(lab, 1, mode="edge")
    nb = np.stack([pad[:-2, 1:-1], pad[2:, 1:-1], pad[1:-1, :-2], pad[1:-1, 2:]])
    nb = np.where(nb != lab[None], nb, -1)
    nb.sort(axis=0)
    distinct = (nb[0] >= 0).astype(int)
    distinct += ((nb[1:] != nb[:-1]) & (nb[1:] >= 0)).sum(axis=0)
    return distinct == 1


@dataclass
class ArcStats:
    """Running statistics of boundary values along an arc.

    ``tier`` ranks edge reliability (0 best); combining arcs keeps only the
    statistics of the best tier present.
    """

    total: float = 0.0
    count: int = 0
    lo: float = np.inf
    hi: float = -np.inf
    tier: int = 3

    def __add__(self, other: "ArcStats") -> "ArcStats":
        if other.tier != self.tier:
            return self if self.tier < other.tier else other
        return ArcStats(self.total + other.total, self.count + other.count,
                        min(self.lo, other.lo), max(self.hi, other.hi), self.tier)

    @property
    def mean(self) -> float:
        if self.lo == self.hi:
            return self.lo
        return self.total / self.count


def base_arc_stats(b: np.ndarray, labels: np.ndarray) -> dict[tuple[int, int], ArcStats]:
    """Mean-boundary statistics of every arc between adjacent base regions.

    An interface edge ``(p, q)`` is scored ``max(b[p], b[q])``. Junction pixels
    (touching a third region) are ambiguous, so each arc averages only its
    best tier of edges: both endpoints clean, else one clean endpoint (scored
    by that endpoint), else all edges scored ``min(b[p], b[q])``.
    """
    p, q = interface_edges(labels)
    if len(p) == 0:
        return {}
    flat = labels.ravel().astype(np.int64)
    bv = np.asarray(b, dtype=np.float64).ravel()
    la, lb = flat[p], flat[q]
    a, c = np.minimum(la, lb), np.maximum(la, lb)
    n = int(flat.max()) + 1
    key = a * n + c
    clean = _single_foreign(labels).ravel()
    cp, cq = clean[p], clean[q]
    tier = np.where(cp & cq, 0, np.where(cp | cq, 1, 2))
    val = np.where(tier == 0, np.maximum(bv[p], bv[q]),
                   np.where(tier == 1, np.where(cp, bv[p], bv[q]), np.minimum(bv[p], bv[q])))

    ukey, inv = np.unique(key, return_inverse=True)
    m = len(ukey)
    best = np.full(m, 3)
    np.minimum.at(best, inv, tier)
    use = tier == best[inv]
    tot = np.bincount(inv[use], weights=val[use], minlength=m)
    cnt = np.bincount(inv[use], minlength=m)
    lo = np.full(m, np.inf)
    hi = np.full(m, -np.inf)
    np.minimum.at(lo, inv[use], val[use])
    np.maximum.at(hi, inv[use], val[use])
    out = {}
    for i, k in enumerate(ukey.tolist()):
        out[divmod(k, n)] = ArcStats(float(tot[i]), int(cnt[i]), float(lo[i]), float(hi[i]),
                                     int(best[i]))
    return out


def adjacency(labels: np.ndarray) -> dict[int, set[int]]:
    p, q = interface_edges(labels)
    flat = labels.ravel()
    nbrs: dict[int, set[int]] = {int(r): set() for r in np.unique(flat)}
    for a, c in set(zip(flat[p].tolist(), flat[q].tolist())):
        nbrs[a].add(c)
        nbrs[c].add(a)
    return nbrs


# ---------------------------------------------------------------------------
# greedy agglomeration


Merge = tuple[int, int, int, float]


def agglomerate(
    nbrs: dict[int, set[int]],
    strength: Callable[[int, int], float],
    on_merge: Callable[[int, int, int], None],
) -> list[Merge]:
    """Repeatedly merge the adjacent cluster pair of least ``strength``.

    Ties go to the smallest ``(a, b)`` id pair. New clusters get ids counting
    up from ``len(nbrs)``. Recorded strengths are clamped to be non-decreasing.
    ``nbrs`` is consumed.
    """
    heap = []
    for a, ns in nbrs.items():
        for c in ns:
            if a < c:
                heap.append((strength(a, c), a, c))
    heapq.heapify(heap)
    alive = set(nbrs)
    next_id = len(nbrs)
    merges: list[Merge] = []
    prev = -np.inf
    while heap:
        s, a, c = heapq.heappop(heap)
        if a not in alive or c not in alive:
            continue
        m = next_id
        next_id += 1
        alive.discard(a)
        alive.discard(c)
        alive.add(m)
        on_merge(a, c, m)
        ns = (nbrs.pop(a) | nbrs.pop(c)) - {a, c}
        nbrs[m] = ns
        for d in ns:
            nbrs[d].discard(a)
            nbrs[d].discard(c)
            nbrs[d].add(m)
        prev = max(s, prev)
        merges.append((a, c, m, prev))
        for d in sorted(ns):
            heapq.heappush(heap, (strength(d, m), d, m))
    return merges


# ---------------------------------------------------------------------------
# Ucm


@dataclass(frozen=True, eq=False)
class Ucm:
    """Base over-segmentation plus a merge sequence with non-decreasing strengths.

    ``merges`` holds ``(region_a, region_b, merged_id, strength)``; base regions
    are ``0..n_base-1`` and the k-th merge creates node ``n_base + k``.
    """

    base: LabelMap
    merges: tuple[Merge, ...]
    arc_strength: dict[tuple[int, int], float] = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "merges", tuple(
            (int(a), int(b), int(m), float(s)) for a, b, m, s in self.merges))
        if self.arc_strength is None:
            object.__setattr__(self, "arc_strength", _arc_strengths(self.base.labels, self.merges))

    @property
    def n_base(self) -> int:
        return self.base.n_labels

    @property
    def shape(self) -> tuple[int, int]:
        return self.base.shape

    @property
    def strengths(self) -> list[float]:
        return [m[3] for m in self.merges]

    def partition_after(self, k: int) -> np.ndarray:
        """Labels after applying the first ``k`` merges (contiguous)."""
        n = self.n_base
        root = np.arange(n + len(self.merges))
        for a, b, m, _ in self.merges[:k]:
            root[a] = m
            root[b] = m
        # resolve chains: parents always have larger ids
        for i in range(n + len(self.merges) - 1, -1, -1):
            if root[i] != i:
                root[i] = root[root[i]]
        return relabel_array(root[:n][self.base.labels])

    def n_merges_below(self, t: float) -> int:
        return sum(1 for s in self.strengths if s < t)

    def ancestors(self) -> list[list[tuple[int, float]]]:
        """Per base region: chain of (node, strength at which it was formed)."""
        n = self.n_base
        parent = {}
        for a, b, m, s in self.merges:
            parent[a] = (m, s)
            parent[b] = (m, s)
        out = []
        for r in range(n):
            chain = [(r, -np.inf)]
            node = r
            while node in parent:
                node, s = parent[node]
                chain.append((node, s))
            out.append(chain)
        return out


class Ultrametric:
    """Ultrametric distance between base regions of one Ucm."""

    def __init__(self, u: Ucm):
        self._chains = u.ancestors()
        self._sets = [dict(c) for c in self._chains]
        self._cache: dict[tuple[int, int], float] = {}

    def __call__(self, a: int, b: int) -> float:
        if a == b:
            return 0.0
        key = (a, b) if a < b else (b, a)
        d = self._cache.get(key)
        if d is None:
            other = self._sets[key[1]]
            d = np.inf
            for node, s in self._chains[key[0]]:
                if node in other:
                    d = max(s, other[node])
                    break
            self._cache[key] = d
        return d


def _arc_strengths(labels: np.ndarray, merges) -> dict[tuple[int, int], float]:
    """Strength at which the two sides of each base arc first merge."""
    nbrs = adjacency(labels)
    members = {r: [r] for r in range(len(nbrs))}
    out = {}
    for a, b, m, s in merges:
        small, big = members.pop(a), members.pop(b)
        if len(small) > len(big):
            small, big = big, small
        big_set = set(big)
        for x in small:
            for y in nbrs[x]:
                if y in big_set:
                    out[(min(x, y), max(x, y))] = s
        members[m] = big + small
    return out


def build_ucm(b: BoundaryMap, base: LabelMap | None = None) -> Ucm:
    if base is None:
        base = watershed_oversegment(b)
    if base.shape != b.shape:
        raise RasterError("dimension mismatch between boundary map and base")
    labels = base.labels
    stats = base_arc_stats(b.data, labels)
    nbrs = adjacency(labels)
    pair: dict[tuple[int, int], ArcStats] = dict(stats)

    def strength(x, y):
        return f32(pair[(x, y)].mean)

    def on_merge(a, c, m):
        for d in nbrs[a] | nbrs[c]:
            if d in (a, c):
                continue
            acc = ArcStats()
            for e in (a, c):
                k = (min(d, e), max(d, e))
                if k in pair:
                    acc = acc + pair.pop(k)
            pair[(d, m)] = acc
        pair.pop((min(a, c), max(a, c)), None)

    merges = agglomerate(nbrs, strength, on_merge)
    return Ucm(base, merges)


def extract_superpixels(u: Ucm, t: float) -> LabelMap:
    return LabelMap(u.partition_after(u.n_merges_below(t)))


def partition_closest_count(u: Ucm, target: int) -> np.ndarray:
    """Partition whose region count is closest to ``target`` (ties: more regions)."""
    k = int(np.clip(u.n_base - target, 0, len(u.merges)))
    return u.partition_after(k)


def ucm_to_boundary_map(u: Ucm) -> BoundaryMap:
    labels = u.base.labels
    out = np.zeros(labels.size, np.float32)
    p, q = interface_edges(labels)
    if len(p):
        flat = labels.ravel()
        a, c = flat[p], flat[q]
        lo, hi = np.minimum(a, c), np.maximum(a, c)
        s = np.array([u.arc_strength.get((x, y), 0.0) for x, y in zip(lo.tolist(), hi.tolist())],
                     dtype=np.float32)
        np.maximum.at(out, p, s)
        np.maximum.at(out, q, s)
    return BoundaryMap(out.reshape(labels.shape))
