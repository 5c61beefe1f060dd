"""Spectral globalisation of a boundary map.

Pixels of a (downsampled) grid are linked by intervening-contour affinities,
the smallest generalised eigenvectors of ``(D - W) v = lambda D v`` are
computed, rescaled to [0, 1], and their oriented derivatives are summed with
weights ``1/sqrt(lambda)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy import ndimage
from scipy.sparse.linalg import eigsh

from .detect import DetectorConfig, oriented_derivatives
from .raster import BoundaryMap

# weight of the 4-neighbour edges that keep the graph connected
LINK_EPS = 1e-10


class EigensolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SpectralConfig:
    radius: int = 5
    rho: float = 0.1
    n_eigvecs: int = 16
    downsample: int = 2
    deriv_sigma: float = 1.0
    n_orientations: int = 8
    max_iter: int = 5000

    def __post_init__(self):
        if self.radius < 1 or self.n_eigvecs < 2 or self.rho <= 0 or self.downsample < 1:
            raise ValueError("invalid spectral configuration")


@dataclass(frozen=True, eq=False)
class SparseAffinity:
    shape: tuple[int, int]
    weights: sp.csr_matrix

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @property
    def degree(self) -> np.ndarray:
        return np.asarray(self.weights.sum(axis=1)).ravel()

    def laplacian(self):
        d = sp.diags(self.degree)
        return (d - self.weights).tocsr(), d.tocsr()


def bresenham(dy: int, dx: int) -> list[tuple[int, int]]:
    """Grid points on the segment from (0, 0) to (dy, dx), both ends included."""
    pts = []
    y = x = 0
    ady, adx = abs(dy), abs(dx)
    sy, sx = (1 if dy >= 0 else -1), (1 if dx >= 0 else -1)
    err = adx - ady
    while True:
        pts.append((y, x))
        if y == dy and x == dx:
            return pts
        e2 = 2 * err
        if e2 > -ady:
            err -= ady
            x += sx
        if e2 < adx:
            err += adx
            y += sy


@lru_cache(maxsize=None)
def half_disk(radius: int) -> tuple[tuple[int, int], ...]:
    """Offsets within ``radius``, one per unordered pair (lexicographically positive)."""
    out = []
    for dy in range(0, radius + 1):
        for dx in range(-radius, radius + 1):
            if (dy, dx) <= (0, 0) or dy * dy + dx * dx > radius * radius:
                continue
            out.append((dy, dx))
    return tuple(out)


def downsample_max(b: np.ndarray, factor: int) -> np.ndarray:
    if factor == 1:
        return np.asarray(b, dtype=np.float64)
    h, w = b.shape
    hh, ww = -(-h // factor), -(-w // factor)
    pad = np.pad(np.asarray(b, dtype=np.float64), ((0, hh * factor - h), (0, ww * factor - w)), mode="edge")
    return pad.reshape(hh, factor, ww, factor).max(axis=(1, 3))


def affinity_from_grid(g: np.ndarray, radius: int, rho: float) -> SparseAffinity:
    """Intervening-contour affinities on an already-downsampled grid."""
    h, w = g.shape
    idx = np.arange(h * w).reshape(h, w)
    # self-affinity follows the same rule: the segment is the pixel itself
    rows, cols, vals = [idx.ravel()], [idx.ravel()], [np.exp(-g.ravel() / rho)]
    for dy, dx in half_disk(radius):
        y0, y1 = 0, h - dy
        x0, x1 = max(0, -dx), min(w, w - dx)
        if y1 <= y0 or x1 <= x0:
            continue
        peak = np.zeros((y1 - y0, x1 - x0))
        for py, px in bresenham(dy, dx):
            np.maximum(peak, g[y0 + py:y1 + py, x0 + px:x1 + px], out=peak)
        wgt = np.exp(-peak / rho)
        if abs(dy) + abs(dx) == 1:
            wgt = np.maximum(wgt, LINK_EPS)
        i = idx[y0:y1, x0:x1].ravel()
        j = idx[y0 + dy:y1 + dy, x0 + dx:x1 + dx].ravel()
        rows += [i, j]
        cols += [j, i]
        vals += [wgt.ravel(), wgt.ravel()]
    W = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(h * w, h * w))
    return SparseAffinity((h, w), W)


def build_affinity(b: BoundaryMap, cfg: SpectralConfig | None = None) -> SparseAffinity:
    cfg = cfg or SpectralConfig()
    return affinity_from_grid(downsample_max(b.data, cfg.downsample), cfg.radius, cfg.rho)


def generalized_eigs(aff: SparseAffinity, k: int, max_iter: int = 5000):
    """The ``k`` smallest eigenpairs of ``(D - W) v = lambda D v``, ascending.

    Shift-invert Lanczos (ARPACK) around a small negative shift, started from
    a fixed vector. Eigenvectors are D-orthonormal.
    """
    L, D = aff.laplacian()
    n = aff.n
    k = min(k, n - 1)
    if k < 1:
        raise EigensolverError("graph too small for a spectral decomposition")
    v0 = np.cos(np.arange(n) * 0.7) + 1.5
    try:
        vals, vecs = eigsh(L, k=k, M=D, sigma=-1e-3, which="LM", v0=v0, tol=0, maxiter=max_iter)
    except Exception as exc:  # ArpackNoConvergence and factorisation failures
        raise EigensolverError(f"eigensolver did not converge within {max_iter} iterations") from exc
    order = np.argsort(vals, kind="stable")
    vals, vecs = vals[order], vecs[:, order]
    dv = D @ vecs
    resid = np.linalg.norm(L @ vecs - dv * vals, axis=0)
    if np.any(resid > 1e-6 * np.linalg.norm(dv, axis=0)):
        raise EigensolverError(f"eigenpair residual above tolerance after {max_iter} iterations")
    return np.maximum(vals, 0.0), vecs


def _upsample(a: np.ndarray, factor: int, shape: tuple[int, int]) -> np.ndarray:
    if factor == 1:
        return a[:shape[0], :shape[1]]
    yy, xx = np.mgrid[0:shape[0], 0:shape[1]].astype(np.float64)
    return ndimage.map_coordinates(a, [(yy + 0.5) / factor - 0.5, (xx + 0.5) / factor - 0.5],
                                   order=1, mode="nearest")


def spectral_from_affinity(aff: SparseAffinity, cfg: SpectralConfig) -> np.ndarray:
    """Unscaled oriented-derivative energy on the affinity grid."""
    vals, vecs = generalized_eigs(aff, cfg.n_eigvecs, cfg.max_iter)
    thetas = DetectorConfig(n_orientations=cfg.n_orientations).thetas
    h, w = aff.shape
    energy = np.zeros((len(thetas), h, w))
    floor = 1e-12
    for lam, v in zip(vals[1:], vecs[:, 1:].T):
        # D-normalised vectors blow up on low-degree pixels; compare on a common range
        span = np.ptp(v)
        if span <= 0:
            continue
        v = (v - v.min()) / span
        energy += oriented_derivatives(v.reshape(h, w), cfg.deriv_sigma, thetas) / np.sqrt(max(lam, floor))
    return energy.max(axis=0)


def spectral_boundaries(b: BoundaryMap, cfg: SpectralConfig | None = None) -> BoundaryMap:
    cfg = cfg or SpectralConfig()
    spb = spectral_from_affinity(build_affinity(b, cfg), cfg)
    out = _upsample(spb, cfg.downsample, b.shape)
    top = out.max()
    if top <= 0:
        return BoundaryMap(np.zeros(b.shape))
    return BoundaryMap(np.clip(out / top, 0.0, 1.0))
