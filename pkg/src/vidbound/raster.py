"""Raster value types shared by every stage of the pipeline.

All arrays are stored row-major as ``(height, width[, channels])`` and are
made read-only on construction, so instances can be shared freely.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import ndimage

LUMA = np.array([0.299, 0.587, 0.114])

_FOUR = ndimage.generate_binary_structure(2, 1)


class RasterError(ValueError):
    """Raised when a raster value violates one of its invariants."""


def _frozen(arr, dtype):
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class FrameImage:
    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen(self.data, np.float64))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 2 else self.data.shape[2]

    def gray(self) -> np.ndarray:
        if self.data.ndim == 2:
            return np.asarray(self.data)
        return self.data @ LUMA


@dataclass(frozen=True, eq=False)
class BoundaryMap:
    """Per-pixel boundary probability. Values are held as float32."""

    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen(self.data, np.float32))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


@dataclass(frozen=True, eq=False)
class FlowField:
    """Displacement ``(u, v)`` in pixels: pixel ``(x, y)`` moves to ``(x+u, y+v)``."""

    u: np.ndarray
    v: np.ndarray
    direction: str = "forward"

    def __post_init__(self):
        object.__setattr__(self, "u", _frozen(self.u, np.float32))
        object.__setattr__(self, "v", _frozen(self.v, np.float32))

    @property
    def height(self) -> int:
        return self.u.shape[0]

    @property
    def width(self) -> int:
        return self.u.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.u.shape

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.u.astype(np.float64), self.v.astype(np.float64))

    @classmethod
    def zeros(cls, height, width, direction="forward"):
        z = np.zeros((height, width), np.float32)
        return cls(z, z, direction)


@dataclass(frozen=True, eq=False)
class LabelMap:
    labels: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "labels", _frozen(self.labels, np.int32))

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    @property
    def n_labels(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0


@dataclass(frozen=True, eq=False)
class VideoSegmentation:
    """Per-frame labels sharing one global label space, shape ``(T, H, W)``."""

    labels: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "labels", _frozen(self.labels, np.int32))

    @property
    def n_frames(self) -> int:
        return self.labels.shape[0]

    @property
    def n_labels(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    def frame(self, t: int) -> np.ndarray:
        return self.labels[t]

    @classmethod
    def from_frames(cls, frames):
        arrs = [f.labels if isinstance(f, LabelMap) else np.asarray(f) for f in frames]
        if len({a.shape for a in arrs}) > 1:
            raise RasterError("dimension mismatch between frames")
        return cls(np.stack(arrs))


Raster = Union[FrameImage, BoundaryMap, FlowField, LabelMap, VideoSegmentation]


def _check_values01(a, what):
    if a.size == 0:
        return f"{what} is empty"
    if not np.all(np.isfinite(a)):
        return "non-finite value"
    if a.min() < 0 or a.max() > 1:
        return "value out of [0,1]"
    return None


def _check_contiguous(labels):
    if labels.size == 0:
        return "empty label map"
    if labels.min() < 0:
        return "negative label"
    present = np.unique(labels)
    if present[-1] != len(present) - 1:
        return "non-contiguous labels"
    return None


def _check_connected(labels):
    n = int(labels.max()) + 1
    for lab, sl in enumerate(ndimage.find_objects(labels + 1, max_label=n)):
        if sl is None:
            continue
        _, ncomp = ndimage.label(labels[sl] == lab, structure=_FOUR)
        if ncomp != 1:
            return f"label {lab} is not 4-connected"
    return None


def check(obj: Raster) -> str | None:
    """Return a description of the first violated invariant, or ``None``."""
    if isinstance(obj, FrameImage):
        d = obj.data
        if d.ndim not in (2, 3) or (d.ndim == 3 and d.shape[2] not in (1, 3)):
            return "channels must be 1 or 3"
        return _check_values01(d, "image")
    if isinstance(obj, BoundaryMap):
        if obj.data.ndim != 2:
            return "boundary map must be 2-D"
        return _check_values01(obj.data, "boundary map")
    if isinstance(obj, FlowField):
        if obj.u.shape != obj.v.shape or obj.u.ndim != 2:
            return "dimension mismatch"
        if not (np.all(np.isfinite(obj.u)) and np.all(np.isfinite(obj.v))):
            return "non-finite value"
        lim = max(obj.u.shape)
        if np.abs(obj.u).max(initial=0) > lim or np.abs(obj.v).max(initial=0) > lim:
            return "flow exceeds image extent"
        return None
    if isinstance(obj, LabelMap):
        if obj.labels.ndim != 2:
            return "label map must be 2-D"
        return _check_contiguous(obj.labels) or _check_connected(obj.labels)
    if isinstance(obj, VideoSegmentation):
        if obj.labels.ndim != 3:
            return "video segmentation must be (T, H, W)"
        return _check_contiguous(obj.labels)
    return f"unsupported type {type(obj).__name__}"


def validate(obj: Raster) -> None:
    msg = check(obj)
    if msg is not None:
        raise RasterError(msg)


def relabel_array(labels: np.ndarray) -> np.ndarray:
    """Renumber labels to 0..K-1 in order of first row-major occurrence."""
    flat = np.asarray(labels).ravel()
    if flat.size == 0:
        return np.asarray(labels, dtype=np.int32).copy()
    uniq, first, inv = np.unique(flat, return_index=True, return_inverse=True)
    rank = np.empty(len(uniq), np.int32)
    rank[np.argsort(first, kind="stable")] = np.arange(len(uniq), dtype=np.int32)
    return rank[inv].reshape(np.shape(labels))


def relabel_contiguous(m: LabelMap) -> LabelMap:
    return LabelMap(relabel_array(m.labels))


def label_boundaries(labels: np.ndarray) -> np.ndarray:
    """Pixels with at least one 4-neighbour carrying a different label."""
    lab = np.asarray(labels)
    out = np.zeros(lab.shape, bool)
    dh = lab[:, 1:] != lab[:, :-1]
    dv = lab[1:, :] != lab[:-1, :]
    out[:, 1:] |= dh
    out[:, :-1] |= dh
    out[1:, :] |= dv
    out[:-1, :] |= dv
    return out


def connected_components(labels: np.ndarray) -> np.ndarray:
    """Split every label into its 4-connected pieces; relabel contiguously."""
    from skimage.measure import label as sk_label

    lab = np.asarray(labels).astype(np.int64) + 1
    return relabel_array(sk_label(lab, background=0, connectivity=1))
