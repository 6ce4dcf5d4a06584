"""Deterministic synthetic hyperspectral scenes with a planted spectrum-attribute link.

Every foreground pixel is a shaded convex mix of smooth endmember spectra. The
mixing weights are Bernstein polynomials of a per-pixel latent scalar, so one
pixel's spectrum is a smooth function of two numbers (latent value, shading)
that its RGB triple determines, while scene-mean spectra vary in more
directions than three RGB channels span. The scene attribute is an affine
function of the noiseless mean ROI spectrum at a few planted bands, so a
linear model on mean spectra recovers it exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import comb

from .chemometrics import SpectraTable
from .hypercube import Hypercube

ATTRIBUTE_RANGE = (5.0, 50.0)


@dataclass(frozen=True)
class SceneConfig:
    height: int = 64
    width: int = 64
    bands: int = 31
    wavelength_range: tuple = (400.0, 1000.0)
    n_endmembers: int = 5
    noise_sd: float = 0.003
    planted_bands: tuple = (21, 23, 27)
    planted_weights: tuple = (1.0, 0.7, -0.8)
    semi_axis_x: tuple = (18.0, 26.0)
    semi_axis_y: tuple = (14.0, 22.0)
    center_jitter: float = 4.0
    shading: float = 0.45
    latent_mean: tuple = (0.1, 0.9)
    latent_spread: tuple = (0.1, 0.5)
    background: float = 0.02
    endmember_seed: int = 10

    def __post_init__(self):
        if self.bands < 8:
            raise ValueError("bands must be >= 8")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")
        if any(not 0 <= b < self.bands for b in self.planted_bands):
            raise ValueError("planted band index outside the band range")
        if len(self.planted_weights) != len(self.planted_bands):
            raise ValueError("one weight per planted band is required")
        if self.n_endmembers < 2:
            raise ValueError("n_endmembers must be >= 2")

    @property
    def wavelengths(self):
        lo, hi = self.wavelength_range
        return np.linspace(lo, hi, self.bands)


@dataclass
class LabeledScene:
    cube: Hypercube
    mask: np.ndarray
    attribute: float
    mixing: np.ndarray = field(repr=False, default=None)


def endmember_library(config):
    """Smooth endmember spectra, shape ``(n_endmembers, bands)``, values in [0.1, 0.9].

    Each endmember is a rising sigmoid baseline (dark blue, brighter red/NIR)
    plus two or three Gaussian bumps; parameters come from ``endmember_seed``.
    """
    rng = np.random.default_rng([config.endmember_seed, 7919])
    wl = config.wavelengths
    lib = []
    for _ in range(config.n_endmembers):
        edge = rng.uniform(500.0, 580.0)
        low, high = rng.uniform(0.08, 0.16), rng.uniform(0.3, 0.85)
        spectrum = low + (high - low) / (1.0 + np.exp(-(wl - edge) / 30.0))
        for _ in range(int(rng.integers(2, 4))):
            center = rng.uniform(450.0, 980.0)
            width = rng.uniform(30.0, 90.0)
            amp = rng.uniform(-0.2, 0.2)
            spectrum = spectrum + amp * np.exp(-0.5 * ((wl - center) / width) ** 2)
        lib.append(np.clip(spectrum, 0.1, 0.9))
    return np.array(lib)


def bernstein_weights(t, degree):
    """Bernstein basis of ``degree`` at ``t``; nonnegative and summing to one."""
    t = np.asarray(t, dtype=np.float64)[..., None]
    k = np.arange(degree + 1)
    return comb(degree, k) * t ** k * (1.0 - t) ** (degree - k)


def _planted_score(config, library):
    return library[:, list(config.planted_bands)] @ np.asarray(config.planted_weights)


def attribute_bounds(config, library=None, grid=4001):
    """Planted-score range mapped onto ``ATTRIBUTE_RANGE``.

    Dome shading ``1 - s * r**2`` averages to ``1 - s / 2`` over a continuous
    ellipse, so scene scores concentrate on the Bernstein curve scaled by that
    factor. The curve's score extremes at that scale are the bounds; pixel
    discretisation can push a rare scene slightly outside, which is clipped.
    """
    library = endmember_library(config) if library is None else library
    curve = bernstein_weights(np.linspace(0.0, 1.0, grid), config.n_endmembers - 1)
    scores = (1.0 - config.shading / 2) * (curve @ _planted_score(config, library))
    return float(scores.min()), float(scores.max())


def _smooth_field(rng, yy, xx):
    """Low-frequency random field on normalised coordinates, within [-1, 1]."""
    gx, gy = rng.uniform(-1, 1, size=2)
    fx, fy = rng.uniform(0.5, 1.5, size=2)
    phase = rng.uniform(0, 2 * np.pi)
    return 0.5 * np.clip(gx * xx + gy * yy, -1, 1) + 0.5 * np.sin(np.pi * (fx * xx + fy * yy) + phase)


def generate_scene(config=None, seed=0):
    """One labeled scene; identical ``(config, seed)`` give bit-identical output."""
    config = config or SceneConfig()
    rng = np.random.default_rng(seed)
    H, W = config.height, config.width
    a_max = max(config.semi_axis_x)
    b_max = max(config.semi_axis_y)
    if 2 * (a_max + config.center_jitter) > W or 2 * (b_max + config.center_jitter) > H:
        raise ValueError("ellipse does not fit inside the image")

    a = rng.uniform(*config.semi_axis_x)
    b = rng.uniform(*config.semi_axis_y)
    cx = (W - 1) / 2 + rng.uniform(-config.center_jitter, config.center_jitter)
    cy = (H - 1) / 2 + rng.uniform(-config.center_jitter, config.center_jitter)
    rows, cols = np.mgrid[0:H, 0:W].astype(np.float64)
    yy, xx = (rows - cy) / b, (cols - cx) / a
    r2 = xx ** 2 + yy ** 2
    mask = r2 <= 1.0

    library = endmember_library(config)
    centre = rng.uniform(*config.latent_mean)
    spread = rng.uniform(*config.latent_spread)
    latent = np.clip(centre + spread * _smooth_field(rng, yy, xx), 0.0, 1.0)
    mix = bernstein_weights(latent, config.n_endmembers - 1)  # (H, W, K)
    # dome shading: darker toward the rim, like a curved object under top light
    shade = 1.0 - config.shading * np.clip(r2, 0.0, 1.0)
    coeff = mix * shade[:, :, None]

    clean = coeff @ library
    clean[~mask] = config.background
    noise = rng.normal(0.0, config.noise_sd, size=clean.shape) if config.noise_sd else 0.0
    data = np.clip(clean + noise, 0.0, None)

    lo, hi = attribute_bounds(config, library)
    score = clean[mask][:, list(config.planted_bands)].mean(axis=0) @ np.asarray(config.planted_weights)
    span = ATTRIBUTE_RANGE[1] - ATTRIBUTE_RANGE[0]
    attribute = ATTRIBUTE_RANGE[0] + span * (score - lo) / (hi - lo)
    attribute = float(np.clip(attribute, *ATTRIBUTE_RANGE))
    return LabeledScene(Hypercube(data, config.wavelengths), mask, attribute, coeff)


def scene_seed(seed, index):
    """Derived per-scene seed; scenes can be generated in any order."""
    return np.random.SeedSequence([int(seed), int(index)])


def generate_dataset(n, config=None, seed=0):
    if n < 1:
        raise ValueError("n must be >= 1")
    return [generate_scene(config, scene_seed(seed, i)) for i in range(n)]


def reference_panels(cube_shape, wavelengths, seed=0, white_level=0.99):
    """White and dark reference cubes in raw sensor counts.

    The illumination profile is a smooth halogen-like curve with a mild
    across-track falloff; the dark frame is a small constant offset with
    fixed-pattern variation.
    """
    rng = np.random.default_rng([seed, 104729])
    H, W, B = cube_shape
    wl = np.asarray(wavelengths)
    spectral = 2000.0 + 1500.0 * np.exp(-0.5 * ((wl - 750.0) / 220.0) ** 2)
    across = 1.0 - 0.15 * ((np.arange(W) - (W - 1) / 2) / W) ** 2
    illum = across[None, :, None] * spectral[None, None, :] * np.ones((H, 1, 1))
    dark = 60.0 + rng.uniform(-5.0, 5.0, size=(1, W, B)) * np.ones((H, 1, 1))
    white = dark + white_level * illum
    return Hypercube(white, wl), Hypercube(dark, wl)


def to_raw(reflectance, white, dark):
    """Inverse of reflectance calibration: ``dark + R * (white - dark)``."""
    raw = dark.data + reflectance.data * (white.data - dark.data)
    return Hypercube(raw, reflectance.wavelengths)


def make_planted_table(n_samples=100, n_bands=20, informative=(3, 9, 15),
                       coefficients=(3.0, 2.0, 1.0), noise_sd=0.3, seed=0):
    """Independent standard-normal bands; ``y`` is linear in the informative ones."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n_samples, n_bands))
    y = X[:, list(informative)] @ np.asarray(coefficients, dtype=np.float64)
    if noise_sd:
        y = y + rng.normal(0.0, noise_sd, size=n_samples)
    wavelengths = np.linspace(400.0, 1000.0, n_bands)
    return SpectraTable([f"s{i:03d}" for i in range(n_samples)], X, y, wavelengths)
