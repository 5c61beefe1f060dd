"""Readers and writers: PNG (8/16-bit), PFM, Middlebury .flo, multi-page TIFF
proposal masks, Ucm text dumps, CSV curves and SVG plots.
"""
from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np
from PIL import Image, ImageSequence

from .hierarchy import Ucm
from .raster import BoundaryMap, FlowField, FrameImage, LabelMap, RasterError

FLO_MAGIC = 202021.25


class FormatError(RasterError):
    pass


# ---------------------------------------------------------------------------
# PFM


def write_pfm(path, data: np.ndarray) -> None:
    data = np.asarray(data, dtype="<f4")
    color = data.ndim == 3
    h, w = data.shape[:2]
    with open(path, "wb") as fh:
        fh.write(b"PF\n" if color else b"Pf\n")
        fh.write(f"{w} {h}\n-1.0\n".encode())
        fh.write(np.ascontiguousarray(data[::-1]).tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        kind = fh.readline().strip()
        if kind not in (b"PF", b"Pf"):
            raise FormatError(f"{path}: not a PFM file")
        dims = fh.readline().split()
        scale = float(fh.readline().strip())
        w, h = int(dims[0]), int(dims[1])
        ch = 3 if kind == b"PF" else 1
        dtype = "<f4" if scale < 0 else ">f4"
        raw = fh.read()
    if len(raw) < w * h * ch * 4:
        raise FormatError(f"{path}: truncated payload")
    arr = np.frombuffer(raw[:w * h * ch * 4], dtype=dtype).astype(np.float32)
    arr = arr.reshape((h, w, ch) if ch == 3 else (h, w))
    return arr[::-1].copy()


# ---------------------------------------------------------------------------
# PNG


def _read_png(path) -> np.ndarray:
    try:
        img = Image.open(path)
        img.load()
    except (OSError, ValueError) as exc:
        raise FormatError(f"{path}: unreadable image ({exc})") from exc
    if img.mode in ("I;16", "I;16B", "I;16L"):
        return np.array(img, dtype=np.uint16)
    if img.mode == "I":
        arr = np.array(img)
        if arr.min() < 0 or arr.max() > 65535:
            raise FormatError(f"{path}: unsupported bit depth")
        return arr.astype(np.uint16)
    if img.mode in ("L", "RGB"):
        return np.array(img)
    if img.mode in ("RGBA", "P", "LA"):
        return np.array(img.convert("RGB"))
    if img.mode == "1":
        return np.array(img.convert("L"))
    raise FormatError(f"{path}: unsupported image mode {img.mode}")


def load_frame(path) -> FrameImage:
    path = Path(path)
    if path.suffix.lower() == ".pfm":
        return FrameImage(read_pfm(path))
    arr = _read_png(path)
    scale = 65535.0 if arr.dtype == np.uint16 else 255.0
    return FrameImage(arr.astype(np.float64) / scale)


def save_map(path, m: BoundaryMap) -> None:
    path = Path(path)
    if path.suffix.lower() == ".pfm":
        write_pfm(path, m.data)
    elif path.suffix.lower() == ".png":
        q = np.rint(np.clip(m.data.astype(np.float64), 0, 1) * 65535).astype(np.uint16)
        Image.fromarray(q).save(path)
    else:
        raise FormatError(f"{path}: unsupported map format")


def load_map(path) -> BoundaryMap:
    path = Path(path)
    if path.suffix.lower() == ".pfm":
        arr = read_pfm(path)
        return BoundaryMap(arr if arr.ndim == 2 else arr[..., 0])
    frame = load_frame(path)
    return BoundaryMap(frame.gray())


def save_labels(path, labels) -> None:
    lab = labels.labels if isinstance(labels, LabelMap) else np.asarray(labels)
    if lab.max(initial=0) > 65535 or lab.min(initial=0) < 0:
        raise FormatError("labels do not fit a 16-bit PNG")
    Image.fromarray(lab.astype(np.uint16)).save(path)


def load_labels(path) -> np.ndarray:
    arr = _read_png(path)
    if arr.ndim == 3:
        # colour-coded annotation: one label per distinct colour
        flat = arr.reshape(-1, arr.shape[2])
        _, inv = np.unique(flat, axis=0, return_inverse=True)
        return inv.reshape(arr.shape[:2]).astype(np.int32)
    return arr.astype(np.int32)


# ---------------------------------------------------------------------------
# .flo


def save_flow(path, flow: FlowField) -> None:
    h, w = flow.shape
    data = np.stack([flow.u, flow.v], axis=-1).astype("<f4")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<f", FLO_MAGIC))
        fh.write(struct.pack("<ii", w, h))
        fh.write(data.tobytes())


def load_flow(path, direction: str = "forward") -> FlowField:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12:
        raise FormatError(f"{path}: truncated header")
    (magic,) = struct.unpack("<f", raw[:4])
    if magic != FLO_MAGIC:
        raise FormatError(f"{path}: bad magic")
    w, h = struct.unpack("<ii", raw[4:12])
    need = 12 + w * h * 8
    if w < 0 or h < 0 or len(raw) < need:
        raise FormatError(f"{path}: truncated payload")
    data = np.frombuffer(raw[12:need], dtype="<f4").reshape(h, w, 2)
    return FlowField(data[..., 0], data[..., 1], direction)


# ---------------------------------------------------------------------------
# proposals


def load_proposal_masks(path) -> list[np.ndarray]:
    """Masks from a multi-page image; every page holds one mask (nonzero = in)."""
    img = Image.open(path)
    return [np.array(page.convert("L")) > 0 for page in ImageSequence.Iterator(img)]


def save_proposal_masks(path, masks) -> None:
    pages = [Image.fromarray((np.asarray(m, bool) * 255).astype(np.uint8)) for m in masks]
    if not pages:
        raise FormatError("no masks to write")
    pages[0].save(path, save_all=True, append_images=pages[1:])


# ---------------------------------------------------------------------------
# Ucm dumps


def save_ucm(prefix, u: Ucm) -> list[Path]:
    """``<prefix>.pfm`` (rasterised), ``<prefix>_base.png`` and ``<prefix>_tree.txt``."""
    from .hierarchy import ucm_to_boundary_map

    prefix = Path(prefix)
    paths = [prefix.with_name(prefix.name + ".pfm"),
             prefix.with_name(prefix.name + "_base.png"),
             prefix.with_name(prefix.name + "_tree.txt")]
    save_map(paths[0], ucm_to_boundary_map(u))
    save_labels(paths[1], u.base)
    with open(paths[2], "w") as fh:
        fh.write(f"# regions {u.n_base}\n# region_a region_b merged_id strength\n")
        for a, b, m, s in u.merges:
            fh.write(f"{a} {b} {m} {s!r}\n")
    return paths


def load_ucm(prefix) -> Ucm:
    prefix = Path(prefix)
    base = load_labels(prefix.with_name(prefix.name + "_base.png"))
    merges = []
    with open(prefix.with_name(prefix.name + "_tree.txt")) as fh:
        for line in fh:
            if line.startswith("#") or not line.strip():
                continue
            a, b, m, s = line.split()
            merges.append((int(a), int(b), int(m), float(s)))
    return Ucm(LabelMap(base), merges)


# ---------------------------------------------------------------------------
# curves


def write_curve_csv(path, curve, header=("threshold", "precision", "recall", "f_measure")) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for row in curve.samples:
            wr.writerow([repr(float(x)) for x in row])


def write_rows_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for row in rows:
            wr.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])


def summary_lines(name: str, curve) -> list[str]:
    return [f"{name}.ods = {curve.ods!r}", f"{name}.oss = {curve.oss!r}", f"{name}.ap = {curve.ap!r}"]


def write_pr_svg(path, curves: dict, size: int = 320) -> None:
    """Minimal precision/recall plot; cosmetic only."""
    pad = 30
    span = size - 2 * pad
    colours = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}">',
             f'<rect x="{pad}" y="{pad}" width="{span}" height="{span}" fill="none" stroke="black"/>',
             f'<text x="{size / 2}" y="{size - 6}" text-anchor="middle" font-size="11">recall</text>',
             f'<text x="10" y="{size / 2}" font-size="11" transform="rotate(-90 10 {size / 2})">precision</text>']
    for k, (name, curve) in enumerate(curves.items()):
        pts = sorted((s[2], s[1]) for s in curve.samples)
        coords = " ".join(f"{pad + r * span:.2f},{pad + (1 - p) * span:.2f}" for r, p in pts)
        col = colours[k % len(colours)]
        parts.append(f'<polyline fill="none" stroke="{col}" points="{coords}"/>')
        parts.append(f'<text x="{pad + 4}" y="{pad + 14 + 12 * k}" font-size="10" fill="{col}">'
                     f'{name} AP={curve.ap:.3f}</text>')
    parts.append("</svg>\n")
    Path(path).write_text("\n".join(parts))
