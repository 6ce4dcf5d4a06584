"""Hypercube container, ENVI-style BIL I/O, reflectance calibration and RGB rendering."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

RGB_WAVELENGTHS = (599.0, 549.0, 449.0)
DEFAULT_GAMMA = 1.4
DEFAULT_CLAMP_MAX = 2.0


@dataclass(frozen=True, eq=False)
class Hypercube:
    """Reflectance volume stored as ``data[line, sample, band]``.

    ``data`` is kept as a read-only float64 array; build a new cube instead of
    mutating one.
    """

    data: np.ndarray
    wavelengths: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64, copy=True, order="C")
        wl = np.array(self.wavelengths, dtype=np.float64, copy=True).ravel()
        if data.ndim != 3:
            raise ValueError(f"cube data must be 3-D (lines, samples, bands), got {data.shape}")
        if wl.size != data.shape[2]:
            raise ValueError(
                f"{wl.size} wavelengths given for a cube with {data.shape[2]} bands"
            )
        if wl.size > 1 and np.any(np.diff(wl) <= 0):
            raise ValueError("wavelengths must be strictly increasing")
        data.setflags(write=False)
        wl.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "wavelengths", wl)

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def bands(self):
        return self.data.shape[2]

    @property
    def shape(self):
        return self.data.shape

    def band(self, index):
        return self.data[:, :, index]

    def __eq__(self, other):
        if not isinstance(other, Hypercube):
            return NotImplemented
        return (
            self.data.shape == other.data.shape
            and np.array_equal(self.wavelengths, other.wavelengths)
            and np.array_equal(self.data, other.data)
        )

    def __repr__(self):
        return (
            f"Hypercube({self.height}x{self.width}x{self.bands}, "
            f"{self.wavelengths[0]:g}-{self.wavelengths[-1]:g} nm)"
        )


def _check_compatible(*cubes):
    first = cubes[0]
    for cube in cubes[1:]:
        if cube.shape != first.shape:
            raise ValueError(f"cube dimensions differ: {first.shape} vs {cube.shape}")
        if not np.array_equal(cube.wavelengths, first.wavelengths):
            raise ValueError("cubes have different wavelength axes")


def calibrate_reflectance(raw, white, dark, clamp_max=DEFAULT_CLAMP_MAX, return_stats=False):
    """Convert raw intensities to reflectance with white and dark references.

    Computes ``(raw - dark) / (white - dark)`` voxel by voxel and clamps the
    result to ``[0, clamp_max]``.

    Parameters
    ----------
    raw, white, dark : Hypercube
        Cubes with identical dimensions and wavelength axes.
    clamp_max : float
        Upper clamp for the reflectance values.
    return_stats : bool
        Also return a dict with the number of voxels clamped low and high.

    Raises
    ------
    ValueError
        On a dimension mismatch, or where ``white == dark`` (the offending
        ``(line, sample, band)`` coordinate is named in the message).
    """
    _check_compatible(raw, white, dark)
    denom = white.data - dark.data
    zero = np.argwhere(denom == 0)
    if zero.size:
        line, sample, band = (int(v) for v in zero[0])
        raise ValueError(
            f"white and dark references are equal at voxel (line={line}, "
            f"sample={sample}, band={band}); reflectance is undefined"
        )
    refl = (raw.data - dark.data) / denom
    stats = {
        "clamped_low": int(np.count_nonzero(refl < 0)),
        "clamped_high": int(np.count_nonzero(refl > clamp_max)),
    }
    refl = np.clip(refl, 0.0, clamp_max)
    cube = Hypercube(refl, raw.wavelengths, metadata={"calibration": stats})
    if return_stats:
        return cube, stats
    return cube


# ENVI-style BIL persistence

_HEADER_KEYS = ("samples", "lines", "bands", "interleave", "data type", "wavelength")


def _bil_path(header_path):
    return Path(header_path).with_suffix(".bil")


def write_bil(cube, path):
    """Write ``cube`` as ``<stem>.hdr`` plus little-endian float32 ``<stem>.bil``.

    Values are stored as float32, so a cube read back from disk is bit-exact
    only for values already representable in 32 bits.
    """
    header_path = Path(path).with_suffix(".hdr")
    wl = ", ".join(repr(float(w)) for w in cube.wavelengths)
    header = (
        "ENVI\n"
        f"samples = {cube.width}\n"
        f"lines = {cube.height}\n"
        f"bands = {cube.bands}\n"
        "header offset = 0\n"
        "file type = ENVI Standard\n"
        "data type = 4\n"
        "interleave = bil\n"
        "byte order = 0\n"
        "wavelength units = Nanometers\n"
        f"wavelength = {{{wl}}}\n"
    )
    header_path.write_text(header)
    # BIL: for each line, all bands, each band holding one row of samples
    payload = np.ascontiguousarray(cube.data.transpose(0, 2, 1)).astype("<f4")
    _bil_path(header_path).write_bytes(payload.tobytes())
    return header_path


def parse_header(text):
    """Parse ENVI header text into a dict of lower-cased keys to raw string values."""
    fields = {}
    text = re.sub(r"\{([^}]*)\}", lambda m: "{" + m.group(1).replace("\n", " ") + "}", text)
    for line in text.splitlines():
        if "=" not in line:
            continue
        key, value = line.split("=", 1)
        fields[key.strip().lower()] = value.strip()
    return fields


def read_bil(header_path):
    """Read a cube written in the ENVI BIL layout; see :func:`write_bil`."""
    header_path = Path(header_path)
    if not header_path.exists():
        raise FileNotFoundError(f"header not found: {header_path}")
    fields = parse_header(header_path.read_text())
    missing = [key for key in _HEADER_KEYS if key not in fields]
    if missing:
        raise ValueError(f"{header_path}: header lacks {', '.join(missing)}")
    interleave = fields["interleave"].lower()
    if interleave != "bil":
        raise ValueError(f"{header_path}: unsupported interleave {interleave!r} (only bil)")
    if fields["data type"] != "4":
        raise ValueError(f"{header_path}: unsupported data type {fields['data type']} (only 4)")
    if fields.get("byte order", "0") != "0":
        raise ValueError(f"{header_path}: only little-endian (byte order = 0) is supported")
    try:
        samples, lines, bands = (int(fields[k]) for k in ("samples", "lines", "bands"))
    except ValueError as exc:
        raise ValueError(f"{header_path}: non-integer dimension field") from exc
    wl_text = fields["wavelength"].strip().strip("{}")
    wavelengths = [float(v) for v in wl_text.split(",") if v.strip()]
    if len(wavelengths) != bands:
        raise ValueError(
            f"{header_path}: bands = {bands} but wavelength list has {len(wavelengths)} entries"
        )
    offset = int(fields.get("header offset", "0"))
    raw = _bil_path(header_path).read_bytes()[offset:]
    expected = lines * samples * bands * 4
    if len(raw) != expected:
        raise ValueError(
            f"{_bil_path(header_path)}: payload has {len(raw)} bytes, expected {expected}"
        )
    data = np.frombuffer(raw, dtype="<f4").reshape(lines, bands, samples)
    return Hypercube(data.transpose(0, 2, 1).astype(np.float64), wavelengths)


# wavelength lookups


def band_index_nearest(cube_or_wavelengths, target_nm):
    """Index of the band nearest ``target_nm``; ties resolve to the lower index."""
    wl = getattr(cube_or_wavelengths, "wavelengths", cube_or_wavelengths)
    wl = np.asarray(wl, dtype=np.float64)
    if wl.size == 0:
        raise ValueError("empty wavelength axis")
    # argmin returns the first minimum, which is the lower index on ties
    return int(np.argmin(np.abs(wl - float(target_nm))))


def select_bands(cube, targets):
    """Build a cube from the source bands nearest each target wavelength.

    The output axis holds the matched source wavelengths in ascending order.
    Two targets that resolve to the same source band raise ``ValueError``.
    """
    targets = list(targets)
    if not targets:
        raise ValueError("at least one target wavelength is required")
    indices = [band_index_nearest(cube, t) for t in targets]
    seen = {}
    for t, idx in zip(targets, indices):
        if idx in seen:
            raise ValueError(
                f"targets {seen[idx]} nm and {t} nm both resolve to band {idx} "
                f"({cube.wavelengths[idx]:g} nm)"
            )
        seen[idx] = t
    indices = sorted(indices)
    return Hypercube(cube.data[:, :, indices], cube.wavelengths[indices])


def render_rgb(cube, gamma=DEFAULT_GAMMA, wavelengths=RGB_WAVELENGTHS):
    """Render an 8-bit RGB image from the bands nearest 599/549/449 nm.

    Each value is clamped to [0, 1] and mapped to ``round(255 * v ** (1 / gamma))``.
    Returns a ``(height, width, 3)`` uint8 array.
    """
    wl = cube.wavelengths
    half_step = float(np.median(np.diff(wl))) / 2 if wl.size > 1 else 0.0
    lo, hi = min(wavelengths), max(wavelengths)
    if wl[0] > lo + half_step or wl[-1] < hi - half_step:
        raise ValueError(
            f"cube covers {wl[0]:g}-{wl[-1]:g} nm; rendering needs {lo:g}-{hi:g} nm"
        )
    planes = [cube.band(band_index_nearest(cube, t)) for t in wavelengths]
    v = np.clip(np.stack(planes, axis=-1), 0.0, 1.0)
    return np.floor(255.0 * v ** (1.0 / gamma) + 0.5).astype(np.uint8)
