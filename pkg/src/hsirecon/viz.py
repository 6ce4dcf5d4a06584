"""Per-pixel prediction maps, a fixed colour ramp, PPM images and SVG bar charts."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from ._validation import check_mask

# blue, cyan, green, yellow, red at t = 0, 1/4, 1/2, 3/4, 1
RAMP_ANCHORS = np.array(
    [(0, 0, 255), (0, 255, 255), (0, 255, 0), (255, 255, 0), (255, 0, 0)], dtype=np.float64
)


@dataclass(frozen=True, eq=False)
class AttributeMap:
    """Predicted attribute per pixel; ``valid`` marks foreground, elsewhere ``values`` is NaN."""

    values: np.ndarray
    valid: np.ndarray

    @property
    def shape(self):
        return self.valid.shape

    def valid_values(self):
        return self.values[self.valid]


def prediction_map(cube, model, mask):
    """Apply ``model.predict`` to every foreground spectrum of ``cube``."""
    n_features = np.asarray(model.coef_).size if hasattr(model, "coef_") else None
    if n_features is not None and n_features != cube.bands:
        raise ValueError(f"model expects {n_features} bands, cube has {cube.bands}")
    mask = check_mask(mask, cube.shape[:2])
    values = np.full(mask.shape, np.nan)
    values[mask] = model.predict(cube.data[mask])
    return AttributeMap(values, mask)


def default_range(*maps, percentiles=(1.0, 99.0)):
    """Shared colour range from the pooled valid values of one or more maps."""
    pooled = np.concatenate([m.valid_values() for m in maps])
    if pooled.size == 0:
        raise ValueError("no valid pixel to derive a colour range from")
    lo, hi = np.percentile(pooled, percentiles)
    if lo == hi:  # flat map: any positive span renders it at the first anchor
        hi = lo + 1.0
    return float(lo), float(hi)


def ramp_color(t):
    """Colour of ramp positions ``t`` in [0, 1] (clamped), as uint8 RGB."""
    t = np.clip(np.asarray(t, dtype=np.float64), 0.0, 1.0)
    pos = t * (len(RAMP_ANCHORS) - 1)
    seg = np.minimum(np.floor(pos).astype(int), len(RAMP_ANCHORS) - 2)
    frac = (pos - seg)[..., None]
    rgb = RAMP_ANCHORS[seg] + (RAMP_ANCHORS[seg + 1] - RAMP_ANCHORS[seg]) * frac
    return np.floor(rgb + 0.5).astype(np.uint8)


def colorize(amap, value_range=None):
    """RGB image of the map; out-of-range values clamp, invalid pixels are black."""
    lo, hi = default_range(amap) if value_range is None else map(float, value_range)
    if not lo < hi:
        raise ValueError(f"colour range needs lo < hi, got ({lo}, {hi})")
    img = np.zeros(amap.shape + (3,), dtype=np.uint8)
    img[amap.valid] = ramp_color((amap.values[amap.valid] - lo) / (hi - lo))
    return img


def write_ppm(img, path):
    """Binary P6 image with maxval 255."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise ValueError(f"expected a uint8 (H, W, 3) image, got {img.dtype} {img.shape}")
    h, w, _ = img.shape
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode("ascii") + img.tobytes())


def read_ppm(path):
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if len(parts) < 4 or parts[0] != b"P6":
        raise ValueError(f"{path}: not a binary PPM")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 is supported, got {maxval}")
    body = raw[len(raw) - w * h * 3:] if len(raw) >= w * h * 3 else b""
    if len(body) != w * h * 3:
        raise ValueError(f"{path}: truncated pixel data")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3).copy()


def write_map_csv(amap, path):
    """One ``row,col,value`` line per valid pixel, row-major."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["row", "col", "value"])
        for r, c in zip(*np.nonzero(amap.valid)):
            writer.writerow([int(r), int(c), repr(float(amap.values[r, c]))])


BAR_MAX_WIDTH = 400.0
BAR_HEIGHT = 18.0
BAR_GAP = 6.0
LABEL_WIDTH = 110.0


def bar_chart_svg(labels, values, path=None, title=None):
    """Horizontal bar chart, bars top to bottom in the given order.

    The longest bar spans :data:`BAR_MAX_WIDTH` units and the others scale
    with ``value / max(values)``. Returns the SVG text; writes it when
    ``path`` is given.
    """
    labels = [str(s) for s in labels]
    values = np.asarray(values, dtype=np.float64)
    if len(labels) == 0:
        raise ValueError("bar chart needs at least one bar")
    if len(labels) != values.size:
        raise ValueError(f"{len(labels)} labels for {values.size} values")
    if np.any(values < 0) or not np.all(np.isfinite(values)):
        raise ValueError("bar values must be finite and nonnegative")
    top = values.max()
    lengths = values / top * BAR_MAX_WIDTH if top > 0 else np.zeros_like(values)
    y0 = 30.0 if title else 10.0
    width = LABEL_WIDTH + BAR_MAX_WIDTH + 90.0
    height = y0 + len(labels) * (BAR_HEIGHT + BAR_GAP) + 10.0
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.0f}" height="{height:.0f}">',
    ]
    if title:
        out.append(f'<text x="{LABEL_WIDTH:.0f}" y="20" font-family="sans-serif" font-size="14">{escape(title)}</text>')
    for i, (label, value, length) in enumerate(zip(labels, values, lengths)):
        y = y0 + i * (BAR_HEIGHT + BAR_GAP)
        ty = y + BAR_HEIGHT - 4
        out.append(
            f'<text x="{LABEL_WIDTH - 6:.0f}" y="{ty:.1f}" font-family="sans-serif" '
            f'font-size="12" text-anchor="end">{escape(label)}</text>'
        )
        out.append(
            f'<rect x="{LABEL_WIDTH:.0f}" y="{y:.1f}" width="{length:.4f}" '
            f'height="{BAR_HEIGHT:.0f}" fill="#1f77b4"/>'
        )
        out.append(
            f'<text x="{LABEL_WIDTH + length + 4:.4f}" y="{ty:.1f}" font-family="sans-serif" '
            f'font-size="11">{value:.4g}</text>'
        )
    out.append("</svg>")
    text = "\n".join(out) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text
