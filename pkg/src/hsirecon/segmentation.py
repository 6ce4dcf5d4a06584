"""Band-difference segmentation, masking and ROI mean spectra."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import DegenerateMaskError, check_mask
from .hypercube import Hypercube, band_index_nearest

SEGMENTATION_BANDS = (602.0, 452.0)


@dataclass(frozen=True, eq=False)
class Spectrum:
    wavelengths: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        wl = np.asarray(self.wavelengths, dtype=np.float64).ravel()
        values = np.asarray(self.values, dtype=np.float64).ravel()
        if wl.shape != values.shape:
            raise ValueError(f"{wl.size} wavelengths vs {values.size} values")
        if not np.all(np.isfinite(values)):
            raise ValueError("spectrum contains non-finite values")
        object.__setattr__(self, "wavelengths", wl)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.size


def otsu_threshold(values, bins=256):
    """Otsu's threshold on a 1-D sample (maximises between-class variance)."""
    values = np.asarray(values, dtype=np.float64).ravel()
    lo, hi = values.min(), values.max()
    if lo == hi:
        return float(lo)
    hist, edges = np.histogram(values, bins=bins, range=(lo, hi))
    centers = (edges[:-1] + edges[1:]) / 2
    w0 = np.cumsum(hist)
    w1 = w0[-1] - w0
    s0 = np.cumsum(hist * centers)
    m0 = s0 / np.maximum(w0, 1)
    m1 = (s0[-1] - s0) / np.maximum(w1, 1)
    between = w0 * w1 * (m0 - m1) ** 2
    # threshold sits on the upper edge of the last bin of the lower class
    return float(edges[int(np.argmax(between[:-1])) + 1])


def largest_component(mask):
    labels, n = ndimage.label(mask)
    if n <= 1:
        return mask.copy()
    sizes = ndimage.sum(mask, labels, index=np.arange(1, n + 1))
    return labels == (int(np.argmax(sizes)) + 1)


def band_difference_mask(
    cube,
    wl_a=SEGMENTATION_BANDS[0],
    wl_b=SEGMENTATION_BANDS[1],
    threshold=None,
    largest_only=False,
):
    """Foreground where ``band(wl_a) - band(wl_b) > threshold``.

    ``threshold=None`` applies Otsu's method to the difference image.
    ``largest_only`` keeps only the largest 4-connected foreground region.

    Raises
    ------
    DegenerateMaskError
        If no pixel passes the threshold.
    """
    diff = cube.band(band_index_nearest(cube, wl_a)) - cube.band(band_index_nearest(cube, wl_b))
    if threshold is None:
        threshold = otsu_threshold(diff)
    mask = diff > threshold
    if largest_only and mask.any():
        mask = largest_component(mask)
    if not mask.any():
        raise DegenerateMaskError(
            f"no pixel has band difference above {threshold:g} "
            f"(max difference {diff.max():g})"
        )
    return mask


def apply_mask(cube, mask):
    """Zero every background voxel; foreground spectra are left untouched."""
    mask = check_mask(mask, cube.shape[:2], allow_empty=True)
    return Hypercube(np.where(mask[:, :, None], cube.data, 0.0), cube.wavelengths)


def mean_spectrum(cube, mask):
    """Per-band arithmetic mean over the foreground pixels of ``mask``."""
    mask = check_mask(mask, cube.shape[:2])
    return Spectrum(cube.wavelengths, cube.data[mask].mean(axis=0))


def average_views(a, b):
    """Elementwise mean of two spectra sharing a wavelength axis."""
    if not np.array_equal(a.wavelengths, b.wavelengths):
        raise ValueError("spectra have different wavelength axes")
    return Spectrum(a.wavelengths, (a.values + b.values) / 2)


class RoiSpectra(TransformerMixin, BaseEstimator):
    """Transform a list of cubes into a matrix of ROI mean spectra.

    Each cube is segmented with :func:`band_difference_mask` (or the matching
    entry of ``masks`` passed to ``transform``) and reduced to its mean
    foreground spectrum.
    """

    def __init__(self, wl_a=SEGMENTATION_BANDS[0], wl_b=SEGMENTATION_BANDS[1],
                 threshold=None, largest_only=False):
        self.wl_a = wl_a
        self.wl_b = wl_b
        self.threshold = threshold
        self.largest_only = largest_only

    def fit(self, X, y=None):
        return self

    def transform(self, X, masks=None):
        rows = []
        for i, cube in enumerate(X):
            if masks is not None:
                mask = masks[i]
            else:
                mask = band_difference_mask(
                    cube, self.wl_a, self.wl_b, self.threshold, self.largest_only
                )
            rows.append(mean_spectrum(cube, mask).values)
        return np.vstack(rows)


# persistence


def write_pbm(mask, path):
    """Write a boolean mask as a binary (P4) PBM bitmap; foreground = 1 (black)."""
    mask = check_mask(mask, allow_empty=True)
    h, w = mask.shape
    body = np.packbits(mask, axis=1).tobytes()
    Path(path).write_bytes(f"P4\n{w} {h}\n".encode("ascii") + body)


def read_pbm(path):
    raw = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 3:
        while raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        start = pos
        while not raw[pos:pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos].decode("ascii"))
    pos += 1
    if tokens[0] != "P4":
        raise ValueError(f"{path}: not a binary PBM (magic {tokens[0]!r})")
    w, h = int(tokens[1]), int(tokens[2])
    row_bytes = (w + 7) // 8
    body = np.frombuffer(raw[pos:pos + row_bytes * h], dtype=np.uint8)
    if body.size != row_bytes * h:
        raise ValueError(f"{path}: truncated PBM payload")
    bits = np.unpackbits(body.reshape(h, row_bytes), axis=1)[:, :w]
    return bits.astype(bool)


def write_spectra_csv(path, ids, spectra, wavelengths):
    """Write spectra as CSV: header ``id,<wavelengths...>``, then one row per sample."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id"] + [repr(float(w)) for w in wavelengths])
        for sid, row in zip(ids, np.atleast_2d(spectra)):
            writer.writerow([sid] + [repr(float(v)) for v in row])


def read_spectra_csv(path):
    """Inverse of :func:`write_spectra_csv`; returns ``(ids, spectra, wavelengths)``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "id":
        raise ValueError(f"{path}: missing 'id' header")
    wavelengths = np.array([float(v) for v in rows[0][1:]])
    ids = [r[0] for r in rows[1:]]
    spectra = np.array([[float(v) for v in r[1:]] for r in rows[1:]], dtype=np.float64)
    return ids, spectra.reshape(len(ids), wavelengths.size), wavelengths
