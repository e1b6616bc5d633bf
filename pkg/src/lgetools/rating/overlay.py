"""Server-side PNG rendering of slices and class overlays.

Raters get a windowed grayscale base image plus a semi-transparent color
overlay per arm (scar blue, MVO orange by default), so the browser client
never touches raw mask data.
"""
from __future__ import annotations

import base64
import io

import numpy as np
from PIL import Image

from ..volume import ClassId

DEFAULT_COLORS = {
    ClassId.SCAR: (40, 90, 255),
    ClassId.MVO: (255, 150, 30),
}
DEFAULT_ALPHA = 160


def base_png(image_slice: np.ndarray) -> bytes:
    """Min-max windowed grayscale PNG of one slice."""
    img = np.asarray(image_slice, dtype=np.float64)
    mn, mx = float(img.min()), float(img.max())
    if mx > mn:
        scaled = (img - mn) / (mx - mn) * 255.0
    else:
        scaled = np.zeros_like(img)
    pil = Image.fromarray(scaled.astype(np.uint8), mode="L")
    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    return buf.getvalue()


def overlay_png(
    labels_slice: np.ndarray,
    colors: dict[ClassId, tuple[int, int, int]] | None = None,
    alpha: int = DEFAULT_ALPHA,
) -> bytes:
    """Transparent RGBA PNG with one color per overlaid class."""
    colors = DEFAULT_COLORS if colors is None else colors
    labels = np.asarray(labels_slice)
    rgba = np.zeros((*labels.shape, 4), dtype=np.uint8)
    for cls, (r, g, b) in colors.items():
        hit = labels == int(cls)
        rgba[hit] = (r, g, b, alpha)
    pil = Image.fromarray(rgba, mode="RGBA")
    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    return buf.getvalue()


def to_base64(png: bytes) -> str:
    return base64.b64encode(png).decode("ascii")
