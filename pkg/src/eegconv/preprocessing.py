"""Raw EEG preprocessing: rest-segment extraction through 2-s epoching.

The stages run in a fixed order (see :func:`preprocess`)::

    extract -> baseline -> resample -> band-pass -> re-reference
            -> [cleaning hook] -> channel subset -> epoch

Every stage is a pure function of its inputs.
"""
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import lru_cache
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import signal as sps

N_CHANNELS = 24
EPOCH_SAMPLES = 256


@dataclass
class Recording:
    subject_id: str
    sex: int
    sample_rate_hz: float
    channel_names: List[str]
    data: np.ndarray
    annotations: List[Tuple[str, int, int]] = field(default_factory=list)

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 2 or self.data.shape[0] != len(self.channel_names):
            raise ValueError(
                f"data has shape {self.data.shape} but there are "
                f"{len(self.channel_names)} channel names")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample rate must be positive")
        n = self.data.shape[1]
        for label, start, end in self.annotations:
            if not (0 <= start < end <= n):
                raise ValueError(
                    f"annotation {label!r} [{start}, {end}) outside [0, {n})")

    @property
    def n_samples(self):
        return self.data.shape[1]


@dataclass
class Segment:
    """One contiguous stretch of a recording (no annotations)."""

    subject_id: str
    sex: int
    sample_rate_hz: float
    channel_names: List[str]
    data: np.ndarray

    @property
    def n_samples(self):
        return self.data.shape[1]


@dataclass
class RawSample:
    subject_id: str
    sex: int
    data: np.ndarray


@dataclass(frozen=True)
class Montage:
    """Ordered electrode subset with unit-disk positions.

    ``mastoid_indices`` index into ``names``; re-referencing looks the two
    names up in whatever channel list the segment carries.
    """

    names: Tuple[str, ...]
    positions: np.ndarray
    mastoid_indices: Tuple[int, int]

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "mastoid_indices", tuple(self.mastoid_indices))
        if pos.shape != (len(self.names), 2):
            raise ValueError(f"positions must have shape ({len(self.names)}, 2)")
        if len(set(self.names)) != len(self.names):
            raise ValueError("montage channel names must be unique")
        if np.any(np.sum(pos ** 2, axis=1) > 1.0 + 1e-12):
            raise ValueError("electrode positions must lie in the closed unit disk")
        if len(self.mastoid_indices) != 2:
            raise ValueError("exactly two mastoid indices are required")

    @property
    def mastoid_names(self):
        for i in self.mastoid_indices:
            if not 0 <= i < len(self.names):
                raise ValueError(f"mastoid index {i} out of range")
        return tuple(self.names[i] for i in self.mastoid_indices)

    def to_dict(self):
        return {
            "names": list(self.names),
            "positions": self.positions.tolist(),
            "mastoid_indices": list(self.mastoid_indices),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["names"], np.asarray(d["positions"]), d["mastoid_indices"])


# (name, polar angle from vertex in degrees, azimuth from nose in degrees,
# positive toward the right ear). Standard 10-20/10-10 approximations.
_DEFAULT_SITES = [
    ("Fp1", 90, -18), ("Fp2", 90, 18),
    ("F7", 90, -54), ("F3", 64, -39), ("Fz", 45, 0), ("F4", 64, 39), ("F8", 90, 54),
    ("FC5", 69, -69), ("FC6", 69, 69),
    ("T7", 90, -90), ("C3", 45, -90), ("Cz", 0, 0), ("C4", 45, 90), ("T8", 90, 90),
    ("TP9", 112, -108), ("TP10", 112, 108),
    ("P7", 90, -126), ("P3", 64, -141), ("Pz", 45, 180), ("P4", 64, 141), ("P8", 90, 126),
    ("O1", 90, -162), ("Oz", 90, 180), ("O2", 90, 162),
]


def default_montage():
    """24-channel 10-10 subset with TP9/TP10 as the mastoid pair.

    Positions use an azimuthal-equidistant projection where 120 degrees
    from the vertex maps onto the unit circle.
    """
    names = [s[0] for s in _DEFAULT_SITES]
    polar = np.radians([s[1] for s in _DEFAULT_SITES])
    az = np.radians([s[2] for s in _DEFAULT_SITES])
    r = polar / np.radians(120.0)
    pos = np.column_stack([r * np.sin(az), r * np.cos(az)])
    return Montage(tuple(names), pos, (names.index("TP9"), names.index("TP10")))


@dataclass(frozen=True)
class FirFilter:
    coefficients: np.ndarray
    sample_rate_hz: float
    cutoffs_hz: Tuple[float, float]

    @property
    def n_taps(self):
        return len(self.coefficients)

    def response(self, freqs):
        """Complex frequency response at ``freqs`` (Hz), delay removed."""
        h = self.coefficients
        n = np.arange(len(h)) - (len(h) - 1) / 2
        w = 2 * np.pi * np.asarray(freqs, dtype=float)[:, None] / self.sample_rate_hz
        return np.exp(-1j * w * n[None, :]) @ h


def extract_rest_segments(rec: Recording, label: str = "eyes_closed",
                          trim_s: float = 3.0) -> List[Segment]:
    if trim_s < 0:
        raise ValueError("trim_s must be non-negative")
    trim = int(round(trim_s * rec.sample_rate_hz))
    out = []
    for ann_label, start, end in rec.annotations:
        if ann_label != label:
            continue
        lo, hi = start + trim, end - trim
        if hi <= lo:
            continue
        out.append(Segment(rec.subject_id, rec.sex, rec.sample_rate_hz,
                           list(rec.channel_names),
                           np.array(rec.data[:, lo:hi], dtype=np.float64)))
    return out


def remove_baseline(seg: Segment) -> Segment:
    data = seg.data - seg.data.mean(axis=1, keepdims=True)
    return replace(seg, data=data)


def resample(seg: Segment, target_hz: float) -> Segment:
    """Polyphase rational down-sampling with a Kaiser anti-alias filter."""
    source = seg.sample_rate_hz
    if target_hz == source:
        return seg
    if target_hz > source:
        raise ValueError("upsampling is not supported")
    if target_hz <= 0:
        raise ValueError("target rate must be positive")
    ratio = Fraction(target_hz / source).limit_denominator(10_000)
    data = sps.resample_poly(seg.data, ratio.numerator, ratio.denominator,
                             axis=1, window=("kaiser", 5.0))
    return replace(seg, data=data, sample_rate_hz=float(target_hz))


def design_bandpass_fir(fs: float, f_lo: float, f_hi: float,
                        order: Optional[int] = None,
                        transition_hz: float = 0.25) -> FirFilter:
    """Hamming windowed-sinc band-pass.

    ``order`` is the tap count and must be odd. With ``order=None`` the tap
    count is chosen so the transition width is ``transition_hz``. The -6 dB
    points land half a transition band outside ``[f_lo, f_hi]``.
    """
    if not 0 < f_lo < f_hi < fs / 2:
        raise ValueError(f"band edges must satisfy 0 < {f_lo} < {f_hi} < {fs / 2}")
    if order is None:
        n_taps = int(np.ceil(3.3 * fs / transition_hz))
        n_taps += 1 - n_taps % 2
    else:
        n_taps = int(order)
        if n_taps % 2 == 0 or n_taps < 3:
            raise ValueError("explicit FIR order must be odd (type-I linear phase)")
    tw = 3.3 * fs / n_taps
    c_lo, c_hi = f_lo - tw / 2, f_hi + tw / 2
    if not 0 < c_lo < c_hi < fs / 2:
        raise ValueError(
            f"cutoffs {c_lo:.4g}/{c_hi:.4g} Hz fall outside (0, {fs / 2}); "
            "increase the filter order")
    m = np.arange(n_taps) - (n_taps - 1) / 2
    h = (2 * c_hi / fs) * np.sinc(2 * c_hi / fs * m) - (2 * c_lo / fs) * np.sinc(2 * c_lo / fs * m)
    h *= np.hamming(n_taps)
    h = (h + h[::-1]) / 2
    return FirFilter(h, float(fs), (c_lo, c_hi))


@lru_cache(maxsize=16)
def _cached_fir(fs, f_lo, f_hi, order, transition_hz):
    return design_bandpass_fir(fs, f_lo, f_hi, order, transition_hz)


def filter_zero_phase(seg: Segment, fir: FirFilter) -> Segment:
    """Single-pass linear-phase filtering, shifted by (taps - 1) / 2 samples."""
    if fir.sample_rate_hz != seg.sample_rate_hz:
        raise ValueError(
            f"filter designed for {fir.sample_rate_hz} Hz, segment is "
            f"{seg.sample_rate_hz} Hz")
    if seg.n_samples <= fir.n_taps:
        raise ValueError(
            f"segment of {seg.n_samples} samples is not longer than the "
            f"{fir.n_taps}-tap filter")
    data = sps.fftconvolve(seg.data, fir.coefficients[None, :], mode="same", axes=1)
    return replace(seg, data=data)


def rereference_mastoids(seg: Segment, montage: Montage) -> Segment:
    idx = []
    for name in montage.mastoid_names:
        try:
            idx.append(seg.channel_names.index(name))
        except ValueError:
            raise ValueError(f"mastoid channel {name!r} not in segment") from None
    ref = (seg.data[idx[0]] + seg.data[idx[1]]) / 2
    return replace(seg, data=seg.data - ref[None, :])


def select_channels(seg: Segment, montage: Montage) -> Segment:
    try:
        idx = [seg.channel_names.index(n) for n in montage.names]
    except ValueError as exc:
        raise ValueError(f"montage channel missing from segment: {exc}") from None
    return replace(seg, channel_names=list(montage.names), data=seg.data[idx])


def epoch_windows(seg: Segment, win_s: float = 2.0) -> List[RawSample]:
    if seg.data.shape[0] != N_CHANNELS:
        raise ValueError(f"expected {N_CHANNELS} channels, got {seg.data.shape[0]}")
    n_win = int(round(win_s * seg.sample_rate_hz))
    if n_win <= 0:
        raise ValueError("window must contain at least one sample")
    count = seg.n_samples // n_win
    return [RawSample(seg.subject_id, seg.sex,
                      np.ascontiguousarray(seg.data[:, k * n_win:(k + 1) * n_win]))
            for k in range(count)]


@dataclass(frozen=True)
class PreprocessConfig:
    label: str = "eyes_closed"
    trim_s: float = 3.0
    target_hz: float = 128.0
    band_hz: Tuple[float, float] = (0.25, 25.0)
    fir_order: Optional[int] = None
    transition_hz: float = 0.25
    win_s: float = 2.0
    # Slot for artifact cleaning (e.g. ASR + channel interpolation); identity by default.
    clean: Optional[Callable[[Segment], Segment]] = None


def preprocess(rec: Recording, montage: Montage,
               cfg: PreprocessConfig = PreprocessConfig()) -> List[RawSample]:
    samples: List[RawSample] = []
    for seg in extract_rest_segments(rec, cfg.label, cfg.trim_s):
        seg = remove_baseline(seg)
        seg = resample(seg, cfg.target_hz)
        fir = _cached_fir(seg.sample_rate_hz, cfg.band_hz[0], cfg.band_hz[1],
                          cfg.fir_order, cfg.transition_hz)
        seg = filter_zero_phase(seg, fir)
        seg = rereference_mastoids(seg, montage)
        if cfg.clean is not None:
            seg = cfg.clean(seg)
        seg = select_channels(seg, montage)
        samples.extend(epoch_windows(seg, cfg.win_s))
    return samples


def stack_samples(samples: Sequence[RawSample], dtype=np.float32):
    """Stack epochs into ``(n, 24, 256)`` plus label and subject arrays."""
    if not samples:
        return (np.zeros((0, N_CHANNELS, EPOCH_SAMPLES), dtype=dtype),
                np.zeros(0, dtype=np.int64), np.zeros(0, dtype=object))
    X = np.stack([s.data for s in samples]).astype(dtype)
    y = np.array([s.sex for s in samples], dtype=np.int64)
    subjects = np.array([s.subject_id for s in samples], dtype=object)
    return X, y, subjects
