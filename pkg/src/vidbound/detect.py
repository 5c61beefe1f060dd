"""Oriented Gaussian-derivative boundary detector for images and flow magnitude.

The detector stands in for a learned edge model: per scale, the gradient is
projected on ``n_orientations`` evenly spaced directions in [0, pi), scaled so
that a unit step edge scores 1, and the maximum over orientations and scales
is kept. Optional non-maximum suppression thins responses across the edge.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .raster import BoundaryMap, FlowField, FrameImage, RasterError

# responses below this are numerical noise of the derivative filters
NOISE_FLOOR = 1e-6
NMS_SLACK = 1e-7


@dataclass(frozen=True)
class DetectorConfig:
    scales: tuple[float, ...] = (1.0, 2.0, 4.0)
    n_orientations: int = 8
    nonmax_suppress: bool = True

    def __post_init__(self):
        if not self.scales or min(self.scales) <= 0:
            raise ValueError("scales must be positive")
        if self.n_orientations < 4:
            raise ValueError("n_orientations must be >= 4")

    @property
    def thetas(self) -> np.ndarray:
        return np.arange(self.n_orientations) * np.pi / self.n_orientations


def oriented_derivatives(img: np.ndarray, sigma: float, thetas) -> np.ndarray:
    """|d/dtheta| of the Gaussian-smoothed image, shape ``(n_theta, H, W)``.

    ``theta = 0`` differentiates along columns (x), ``pi/2`` along rows (y).
    """
    gy = ndimage.gaussian_filter(img, sigma, order=(1, 0), mode="reflect")
    gx = ndimage.gaussian_filter(img, sigma, order=(0, 1), mode="reflect")
    c, s = np.cos(thetas), np.sin(thetas)
    return np.abs(c[:, None, None] * gx[None] + s[:, None, None] * gy[None])


def _edge_energy(gray: np.ndarray, cfg: DetectorConfig):
    thetas = cfg.thetas
    best = np.zeros(gray.shape)
    best_theta = np.zeros(gray.shape)
    for sigma in cfg.scales:
        resp = oriented_derivatives(gray, sigma, thetas) * (sigma * np.sqrt(2 * np.pi))
        k = np.argmax(resp, axis=0)
        r = np.take_along_axis(resp, k[None], axis=0)[0]
        upd = r > best
        best[upd] = r[upd]
        best_theta[upd] = thetas[k[upd]]
    return best, best_theta


def nonmax_suppress(mag: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Keep pixels not exceeded by either neighbour along the gradient direction."""
    h, w = mag.shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dx, dy = np.cos(theta), np.sin(theta)
    fwd = ndimage.map_coordinates(mag, [yy + dy, xx + dx], order=1, mode="nearest")
    bwd = ndimage.map_coordinates(mag, [yy - dy, xx - dx], order=1, mode="nearest")
    keep = (mag >= fwd - NMS_SLACK) & (mag >= bwd - NMS_SLACK)
    return np.where(keep, mag, 0.0)


def detect_array(gray: np.ndarray, cfg: DetectorConfig) -> np.ndarray:
    gray = np.asarray(gray, dtype=np.float64)
    if gray.size == 0:
        raise RasterError("empty image")
    mag, theta = _edge_energy(gray, cfg)
    mag[mag < NOISE_FLOOR] = 0.0
    if cfg.nonmax_suppress:
        mag = nonmax_suppress(mag, theta)
    return np.clip(mag, 0.0, 1.0)


def detect_boundaries(img: FrameImage, cfg: DetectorConfig | None = None) -> BoundaryMap:
    cfg = cfg or DetectorConfig()
    if img.data.size == 0:
        raise RasterError("empty image")
    return BoundaryMap(detect_array(img.gray(), cfg))


def normalized_magnitude(flow: FlowField, percentile: float = 99.0) -> np.ndarray:
    mag = flow.magnitude()
    scale = np.percentile(mag, percentile)
    if scale <= 0:
        # a moving region smaller than 1% of the frame: fall back to the max
        scale = mag.max()
    if scale <= 0:
        return np.zeros_like(mag)
    return np.clip(mag / scale, 0.0, 1.0)


def detect_flow_boundaries(flow: FlowField, cfg: DetectorConfig | None = None) -> BoundaryMap:
    cfg = cfg or DetectorConfig()
    return BoundaryMap(detect_array(normalized_magnitude(flow), cfg))
