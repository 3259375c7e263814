"""Band-power scalp topographies from preprocessed epochs."""
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.interpolate import CloughTocher2DInterpolator
from scipy.spatial import Delaunay

from .preprocessing import Montage, RawSample

GRID = 24
WELCH_WINDOW = 64
WELCH_OVERLAP = 0.39
LAYOUTS = ("chromatic", "side_by_side")


@dataclass(frozen=True)
class BandSpec:
    """Half-open frequency band ``[lo_hz, hi_hz)``."""

    name: str
    lo_hz: float
    hi_hz: float

    def __post_init__(self):
        if not 0 < self.lo_hz < self.hi_hz <= 25:
            raise ValueError(f"invalid band {self.name}: [{self.lo_hz}, {self.hi_hz})")


THETA = BandSpec("theta", 4.0, 7.0)
ALPHA = BandSpec("alpha", 7.0, 13.0)
BETA = BandSpec("beta", 13.0, 25.0)
DEFAULT_BANDS = (THETA, ALPHA, BETA)


@dataclass
class Psd:
    frequencies: np.ndarray
    power: np.ndarray


@dataclass
class SpectralSample:
    subject_id: str
    sex: int
    layout: str
    pixels: np.ndarray


def welch_hop(nperseg=WELCH_WINDOW, overlap=WELCH_OVERLAP):
    return int(round((1 - overlap) * nperseg))


def welch_psd(x, fs=128.0, nperseg=WELCH_WINDOW, overlap=WELCH_OVERLAP):
    """One-sided Welch PSD with a Hamming taper and no detrending.

    ``x`` may be 1-D or ``(channels, samples)``; the window axis is last.
    Power is normalised by ``fs * sum(w**2)`` so that integrating over
    frequency returns the signal variance.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] < nperseg:
        raise ValueError(f"signal of length {x.shape[-1]} shorter than window {nperseg}")
    hop = welch_hop(nperseg, overlap)
    n_windows = (x.shape[-1] - nperseg) // hop + 1
    w = np.hamming(nperseg)
    starts = np.arange(n_windows) * hop
    frames = np.stack([x[..., s:s + nperseg] for s in starts], axis=-2) * w
    spec = np.abs(np.fft.rfft(frames, axis=-1)) ** 2 / (fs * np.sum(w ** 2))
    spec[..., 1:] *= 2
    if nperseg % 2 == 0:
        spec[..., -1] /= 2
    freqs = np.fft.rfftfreq(nperseg, d=1.0 / fs)
    return Psd(freqs, spec.mean(axis=-2))


def band_power(psd: Psd, band: BandSpec):
    sel = (psd.frequencies >= band.lo_hz) & (psd.frequencies < band.hi_hz)
    if not sel.any():
        raise ValueError(f"band {band.name} contains no frequency bins")
    df = psd.frequencies[1] - psd.frequencies[0]
    return psd.power[..., sel].sum(axis=-1) * df


def pixel_centers(grid=GRID):
    return -1 + (2 * np.arange(grid) + 1) / grid


class TopomapRenderer:
    """Clough-Tocher interpolation of electrode values onto a head-disk grid.

    Row 0 of the image is the front of the head (largest y); column 0 is
    the left side. Pixels between the convex hull of the electrodes and the
    rim take the value of the nearest electrode; pixels outside the unit
    disk are 0.
    """

    def __init__(self, montage: Montage, grid: int = GRID):
        pos = np.asarray(montage.positions, dtype=float)
        if len(np.unique(pos, axis=0)) != len(pos):
            raise ValueError("duplicate electrode positions")
        self.n_channels = len(pos)
        self.grid = grid
        c = pixel_centers(grid)
        gx, gy = np.meshgrid(c, c[::-1])
        self.inside = gx ** 2 + gy ** 2 <= 1.0
        pts = np.column_stack([gx[self.inside], gy[self.inside]])
        self._tri = Delaunay(pos)
        self._pts = pts
        self._hull = self._tri.find_simplex(pts) >= 0
        d2 = ((pts[:, None, :] - pos[None, :, :]) ** 2).sum(axis=-1)
        self._nearest = d2.argmin(axis=1)
        self._pos = pos

    def evaluate(self, values, points):
        """Interpolant for ``(n_channels,)`` values at arbitrary ``(m, 2)`` points."""
        v = np.asarray(values, dtype=np.float64)
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        interp = CloughTocher2DInterpolator(self._tri, v)
        hull = self._tri.find_simplex(pts) >= 0
        out = np.empty(len(pts))
        out[hull] = interp(pts[hull])
        d2 = ((pts[~hull, None, :] - self._pos[None]) ** 2).sum(axis=-1)
        out[~hull] = v[d2.argmin(axis=1)] if len(d2) else []
        return out

    def render(self, values):
        """Render ``(n_channels,)`` or ``(n_channels, k)`` values to images."""
        v = np.asarray(values, dtype=np.float64)
        single = v.ndim == 1
        if single:
            v = v[:, None]
        if v.shape[0] != self.n_channels:
            raise ValueError(f"expected {self.n_channels} values, got {v.shape[0]}")
        interp = CloughTocher2DInterpolator(self._tri, v)
        inside_vals = np.empty((len(self._pts), v.shape[1]))
        inside_vals[self._hull] = interp(self._pts[self._hull])
        inside_vals[~self._hull] = v[self._nearest[~self._hull]]
        images = np.zeros((v.shape[1], self.grid, self.grid))
        images[:, self.inside] = inside_vals.T
        return images[0] if single else images


def render_topomap(values, montage: Montage, grid: int = GRID):
    return TopomapRenderer(montage, grid).render(values)


def disk_mask(grid=GRID):
    c = pixel_centers(grid)
    gx, gy = np.meshgrid(c, c[::-1])
    return gx ** 2 + gy ** 2 <= 1.0


def rescale_u8(image, inside=None):
    """Min-max map in-disk pixels to integers 0..255; outside stays 0."""
    image = np.asarray(image, dtype=np.float64)
    if inside is None:
        inside = disk_mask(image.shape[-1])
    out = np.zeros(image.shape, dtype=np.uint8)
    vals = image[inside]
    lo, hi = vals.min(), vals.max()
    if hi > lo:
        out[inside] = np.floor(255 * (vals - lo) / (hi - lo) + 0.5).astype(np.uint8)
    return out


def assemble(maps, layout="chromatic"):
    maps = [np.asarray(m) for m in maps]
    if len(maps) != 3 or any(m.shape != maps[0].shape or m.ndim != 2 for m in maps):
        raise ValueError("expected three 2-D band maps of equal shape")
    if layout == "chromatic":
        return np.stack(maps, axis=-1)
    if layout == "side_by_side":
        return np.concatenate(maps, axis=1)
    raise ValueError(f"unknown layout {layout!r}; expected one of {LAYOUTS}")


def band_powers(epochs, fs=128.0, bands: Sequence[BandSpec] = DEFAULT_BANDS):
    """``(..., channels, samples)`` -> ``(..., channels, n_bands)``."""
    psd = welch_psd(epochs, fs)
    return np.stack([band_power(psd, b) for b in bands], axis=-1)


def featurize_epochs(epochs, renderer: TopomapRenderer, layout="chromatic",
                     fs=128.0, bands: Sequence[BandSpec] = DEFAULT_BANDS):
    """Vectorised featurization of ``(n, channels, samples)`` epochs to uint8 images."""
    epochs = np.asarray(epochs)
    n = epochs.shape[0]
    bp = band_powers(epochs, fs, bands)                      # (n, ch, 3)
    vals = bp.transpose(1, 0, 2).reshape(renderer.n_channels, -1)
    imgs = renderer.render(vals).reshape(n, len(bands), renderer.grid, renderer.grid)
    out = []
    for k in range(n):
        maps = [rescale_u8(imgs[k, b], renderer.inside) for b in range(len(bands))]
        out.append(assemble(maps, layout))
    if not out:
        shape = (0, renderer.grid, renderer.grid, 3) if layout == "chromatic" \
            else (0, renderer.grid, 3 * renderer.grid)
        return np.zeros(shape, dtype=np.uint8)
    return np.stack(out)


def featurize_epoch(sample: RawSample, montage: Montage,
                    bands: Sequence[BandSpec] = DEFAULT_BANDS,
                    layout="chromatic", fs=128.0) -> SpectralSample:
    renderer = TopomapRenderer(montage)
    pixels = featurize_epochs(sample.data[None], renderer, layout, fs, bands)[0]
    return SpectralSample(sample.subject_id, sample.sex, layout, pixels)


def to_network_input(pixels, layout):
    """uint8 images -> float32 ``(n, C, H, W)`` scaled to [0, 1]."""
    x = np.asarray(pixels, dtype=np.float32) / 255.0
    if layout == "chromatic":
        return np.ascontiguousarray(x.transpose(0, 3, 1, 2))
    return x[:, None, :, :]
