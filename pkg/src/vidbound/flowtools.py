"""Optical flow estimation, backward warping and flow-aligned temporal smoothing."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage

from .raster import BoundaryMap, FlowField, FrameImage, RasterError

Merger = Callable[[Sequence[tuple[BoundaryMap, float]]], BoundaryMap]


@dataclass(frozen=True)
class FlowPair:
    forward: FlowField
    backward: FlowField

    def __post_init__(self):
        if self.forward.shape != self.backward.shape:
            raise RasterError("forward and backward flow dimensions differ")


@dataclass(frozen=True)
class SmoothingConfig:
    window: int = 1
    weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.window < 0:
            raise ValueError("window must be >= 0")
        if self.weights is not None:
            if len(self.weights) != 2 * self.window + 1 or min(self.weights) <= 0:
                raise ValueError("need 2*window+1 positive weights")

    def weight(self, offset: int) -> float:
        if self.weights is None:
            return 1.0
        return self.weights[offset + self.window]


# ---------------------------------------------------------------------------
# sampling


def bilinear_sample(src: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Bilinear lookup with zero padding outside the grid.

    Integer coordinates return the source value bit-exactly.
    """
    src = np.asarray(src)
    h, w = src.shape
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    fy = (ys - y0).astype(src.dtype)
    fx = (xs - x0).astype(src.dtype)
    out = np.zeros(np.shape(ys), src.dtype)
    for oy, wy in ((0, 1 - fy), (1, fy)):
        for ox, wx in ((0, 1 - fx), (1, fx)):
            yy, xx = y0 + oy, x0 + ox
            ok = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
            val = np.zeros(np.shape(ys), src.dtype)
            val[ok] = src[yy[ok], xx[ok]]
            out += wy * wx * val
    return out


def _grid(shape):
    yy, xx = np.mgrid[0:shape[0], 0:shape[1]]
    return yy.astype(np.float64), xx.astype(np.float64)


def warp_map(src: BoundaryMap, flow: FlowField) -> BoundaryMap:
    """Backward warp: ``out(x) = src(x + flow(x))``, zero outside the grid."""
    if src.shape != flow.shape:
        raise RasterError("dimension mismatch between map and flow")
    yy, xx = _grid(src.shape)
    out = bilinear_sample(src.data, yy + flow.v, xx + flow.u)
    return BoundaryMap(out)


def compose_flows(first: FlowField, second: FlowField) -> FlowField:
    """Flow of ``first`` followed by ``second`` (warp-and-add)."""
    yy, xx = _grid(first.shape)
    py, px = yy + first.v, xx + first.u
    u2 = ndimage.map_coordinates(second.u.astype(np.float64), [py, px], order=1, mode="nearest")
    v2 = ndimage.map_coordinates(second.v.astype(np.float64), [py, px], order=1, mode="nearest")
    return FlowField(first.u + u2, first.v + v2, first.direction)


# ---------------------------------------------------------------------------
# Horn-Schunck, coarse to fine

_AVG = np.array([[1, 2, 1], [2, 0, 2], [1, 2, 1]], dtype=np.float64) / 12.0


def _pyramid(img: np.ndarray, levels: int) -> list[np.ndarray]:
    pyr = [img]
    for _ in range(levels - 1):
        if min(pyr[-1].shape) < 16:
            break
        blurred = ndimage.gaussian_filter(pyr[-1], 1.0, mode="nearest")
        pyr.append(blurred[::2, ::2])
    return pyr[::-1]


def _resize_flow(u: np.ndarray, shape) -> np.ndarray:
    h, w = u.shape
    sy, sx = shape[0] / h, shape[1] / w
    yy, xx = _grid(shape)
    out = ndimage.map_coordinates(u, [(yy + 0.5) / sy - 0.5, (xx + 0.5) / sx - 0.5],
                                  order=1, mode="nearest")
    return out


def _hs_level(a, b, u, v, alpha, iters, warps):
    yy, xx = _grid(a.shape)
    for _ in range(warps):
        bw = ndimage.map_coordinates(b, [yy + v, xx + u], order=1, mode="nearest")
        gy_a, gx_a = np.gradient(a)
        gy_b, gx_b = np.gradient(bw)
        ix, iy = 0.5 * (gx_a + gx_b), 0.5 * (gy_a + gy_b)
        it = bw - a
        u0, v0 = u.copy(), v.copy()
        denom = alpha ** 2 + ix ** 2 + iy ** 2
        for _ in range(iters):
            ub = ndimage.convolve(u, _AVG, mode="nearest")
            vb = ndimage.convolve(v, _AVG, mode="nearest")
            r = (ix * (ub - u0) + iy * (vb - v0) + it) / denom
            u = ub - ix * r
            v = vb - iy * r
    return u, v


def estimate_flow(a: FrameImage, b: FrameImage, levels: int = 3, iters: int = 100,
                  alpha: float = 0.05, warps: int = 3) -> FlowField:
    """Dense flow from ``a`` to ``b``: ``a(x) ~ b(x + flow(x))``."""
    if a.data.shape[:2] != b.data.shape[:2]:
        raise RasterError("dimension mismatch between frames")
    ga = ndimage.gaussian_filter(a.gray(), 0.8, mode="nearest")
    gb = ndimage.gaussian_filter(b.gray(), 0.8, mode="nearest")
    pa, pb = _pyramid(ga, levels), _pyramid(gb, levels)
    u = np.zeros(pa[0].shape)
    v = np.zeros(pa[0].shape)
    for la, lb in zip(pa, pb):
        if u.shape != la.shape:
            u = _resize_flow(u, la.shape) * (la.shape[1] / u.shape[1])
            v = _resize_flow(v, la.shape) * (la.shape[0] / v.shape[0])
        u, v = _hs_level(la, lb, u, v, alpha, iters, warps)
    lim = max(a.data.shape[:2])
    return FlowField(np.clip(u, -lim, lim), np.clip(v, -lim, lim))


# ---------------------------------------------------------------------------
# temporal smoothing


def flow_between(flows: Sequence[FlowPair], t: int, s: int) -> FlowField:
    """Flow from frame ``t`` to frame ``s`` by chaining adjacent-frame flows."""
    if s == t:
        return FlowField.zeros(*flows[0].forward.shape)
    step = 1 if s > t else -1
    out = None
    for k in range(t, s, step):
        f = flows[k].forward if step > 0 else flows[k - 1].backward
        out = f if out is None else compose_flows(out, f)
    return out


def temporal_smooth(maps: Sequence[BoundaryMap], flows: Sequence[FlowPair],
                    cfg: SmoothingConfig | None = None,
                    merger: Merger | None = None) -> list[BoundaryMap]:
    """Merge each frame's map with flow-warped maps of frames ``t-w .. t+w``.

    Near the sequence ends the window is truncated; the merger renormalises
    the remaining weights.
    """
    cfg = cfg or SmoothingConfig()
    if merger is None:
        from .merge import merge_cues as merger
    n = len(maps)
    if len(flows) != max(n - 1, 0):
        raise RasterError("need one flow pair per adjacent frame pair")
    out = []
    for t in range(n):
        cues = []
        for i in range(-cfg.window, cfg.window + 1):
            s = t + i
            if not 0 <= s < n:
                continue
            m = maps[s] if i == 0 else warp_map(maps[s], flow_between(flows, t, s))
            cues.append((m, cfg.weight(i)))
        out.append(merger(cues))
    return out
