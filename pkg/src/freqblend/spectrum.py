"""Spectrum statistics: aggregated DCT magnitude maps and azimuthal profiles.

Magnitudes (absolute DCT coefficients) are aggregated because signed
coefficients average toward zero across images. Azimuthal averaging uses
circular annuli centered at the DC corner (0, 0) of the coefficient grid.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .dct import dct2

__all__ = [
    "AggregateFrequencyMap",
    "SpectrumProfile",
    "default_bins",
    "radial_bin_grid",
    "accumulate_frequency",
    "azimuthal_profile",
    "log_profile",
    "difference_profile",
    "difference_heatmap",
]


@dataclass
class AggregateFrequencyMap:
    """Mean of channel-averaged absolute DCT coefficients over images."""

    values: np.ndarray  # (h, w), non-negative
    count: int


@dataclass
class SpectrumProfile:
    """Azimuthally averaged spectrum: one mean magnitude per annulus."""

    values: np.ndarray      # (n_bins,)
    bin_edges: np.ndarray   # (n_bins + 1,) radii in coefficient-index units
    reduced_from: int | None = field(default=None)

    @property
    def n_bins(self) -> int:
        return len(self.values)

    @property
    def bin_centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])


def default_bins(h: int, w: int) -> int:
    """Bin count scaled proportionally from 100 bins at 400x400."""
    return max(2, round(100 * max(h, w) / 400))


def radial_bin_grid(h: int, w: int, n_bins: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Assign every grid position to an annulus around the DC corner.

    Radius r(i, j) = sqrt(i^2 + j^2); bin k covers
    [k * r_max / n, (k + 1) * r_max / n) with the last bin closed.
    Returns (bin index grid, per-bin counts, bin edges).
    """
    i = np.arange(h, dtype=np.float64)
    j = np.arange(w, dtype=np.float64)
    r = np.hypot(i[:, None], j[None, :])
    r_max = float(np.hypot(h - 1, w - 1))
    edges = np.linspace(0.0, r_max, n_bins + 1)
    idx = np.searchsorted(edges, r, side="right") - 1
    idx = np.clip(idx, 0, n_bins - 1)
    counts = np.bincount(idx.ravel(), minlength=n_bins)
    return idx, counts, edges


def accumulate_frequency(images) -> AggregateFrequencyMap:
    """Mean over images of the channel-averaged absolute DCT map."""
    images = list(images)
    if not images:
        raise ValueError("no images to accumulate")
    shape = np.asarray(images[0]).shape
    acc = None
    for img in images:
        img = np.asarray(img, dtype=np.float64)
        if img.shape != shape:
            raise ValueError(f"image shape {img.shape} differs from first image {shape}")
        mag = np.abs(dct2(img))
        if mag.ndim == 3:
            mag = mag.mean(axis=2)
        acc = mag if acc is None else acc + mag
    return AggregateFrequencyMap(values=acc / len(images), count=len(images))


def azimuthal_profile(agg: AggregateFrequencyMap, n_bins: int) -> SpectrumProfile:
    """Average an aggregate map over circular annuli around the DC corner.

    If the requested bin count leaves an annulus with no grid positions,
    the count is reduced until every bin is populated and the original
    request is recorded on the profile.
    """
    if n_bins < 2:
        raise ValueError(f"need at least 2 bins, got {n_bins}")
    h, w = agg.values.shape
    requested = n_bins
    while True:
        idx, counts, edges = radial_bin_grid(h, w, n_bins)
        if np.all(counts > 0):
            break
        if n_bins <= 2:
            raise ValueError("cannot find a bin count with no empty annuli")
        n_bins -= 1
    reduced_from = None
    if n_bins != requested:
        warnings.warn(
            f"reduced bin count from {requested} to {n_bins} to avoid empty annuli",
            stacklevel=2,
        )
        reduced_from = requested
    sums = np.bincount(idx.ravel(), weights=agg.values.ravel(), minlength=n_bins)
    return SpectrumProfile(values=sums / counts, bin_edges=edges, reduced_from=reduced_from)


def log_profile(profile: SpectrumProfile) -> SpectrumProfile:
    """Map profile values through log2(1 + v); keeps zero bins finite."""
    return SpectrumProfile(
        values=np.log2(1.0 + profile.values),
        bin_edges=profile.bin_edges.copy(),
        reduced_from=profile.reduced_from,
    )


def difference_profile(real: SpectrumProfile, fake: SpectrumProfile, log_scale: bool = False) -> np.ndarray:
    """Per-bin signed difference fake - real.

    With ``log_scale`` the difference is compressed through
    sign(d) * log2(1 + |d|) for plotting parity with the log profiles.
    """
    if real.n_bins != fake.n_bins:
        raise ValueError(f"bin counts differ: {real.n_bins} vs {fake.n_bins}")
    d = fake.values - real.values
    if log_scale:
        d = np.sign(d) * np.log2(1.0 + np.abs(d))
    return d


def difference_heatmap(a: AggregateFrequencyMap, b: AggregateFrequencyMap) -> np.ndarray:
    """Elementwise difference a - b between two aggregate maps."""
    if a.values.shape != b.values.shape:
        raise ValueError(f"map shapes differ: {a.values.shape} vs {b.values.shape}")
    return a.values - b.values
