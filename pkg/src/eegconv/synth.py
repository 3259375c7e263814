"""Synthetic resting-state EEG cohorts with a sex-dependent alpha effect.

Each channel is a sum of three sinusoidal rhythms (6, 10 and 20 Hz, random
phases) plus spatially weighted 1/f noise. Alpha amplitude carries the class
effect ``(1 + delta * sex)`` and a per-subject multiplicative jitter. Alpha
is posterior-dominant while the noise floor is frontal-dominant, so the
effect also changes the *shape* of the alpha scalp map, not only its scale.
"""
from dataclasses import asdict, dataclass, replace
from typing import List, Optional

import numpy as np
from scipy import fft as sp_fft

from .preprocessing import Montage, PreprocessConfig, Recording, default_montage, preprocess
from .spectral import ALPHA, band_powers

THETA_HZ, ALPHA_HZ, BETA_HZ = 6.0, 10.0, 20.0


@dataclass(frozen=True)
class SynthSpec:
    n_subjects: int = 120
    female_fraction: float = 0.5
    delta: float = 0.5
    jitter: float = 0.05
    noise: float = 15.0
    alpha_amplitude: float = 10.0
    theta_amplitude: float = 5.0
    beta_amplitude: float = 3.0
    sample_rate_hz: float = 500.0
    n_periods: int = 5
    period_s: float = 40.0
    open_s: float = 20.0
    open_alpha_gain: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError("delta must be non-negative")
        if not 0 <= self.female_fraction <= 1:
            raise ValueError("female_fraction must lie in [0, 1]")
        if self.jitter < 0 or self.noise < 0:
            raise ValueError("jitter and noise must be non-negative")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})


def subject_id(index):
    return f"sub-{index:05d}"


def n_female(spec: SynthSpec):
    return int(round(spec.n_subjects * spec.female_fraction))


def subject_sexes(spec: SynthSpec):
    """Sex label per subject index; exactly ``n_female(spec)`` ones."""
    order = np.random.default_rng(np.random.SeedSequence([spec.seed, 0xC0407])).permutation(
        spec.n_subjects)
    sex = np.zeros(spec.n_subjects, dtype=np.int64)
    sex[order[:n_female(spec)]] = 1
    return sex


def spatial_profiles(montage: Montage):
    x, y = montage.positions[:, 0], montage.positions[:, 1]
    r = np.hypot(x, y)
    return {
        "alpha": np.exp(-(x ** 2 + (y + 0.75) ** 2) / (2 * 0.35 ** 2)),   # occipital
        "theta": 0.5 + 0.5 * (1 + y) / 2,                                 # frontal
        "beta": 0.6 + 0.4 * (1 - r),                                      # central
        "noise": 0.3 + 1.2 * (1 + y) / 2,                                 # frontal
    }


def pink_noise(rng, n_channels, n_samples, fs, f_min=0.1):
    """Unit-variance 1/f (power) noise per channel."""
    white = rng.standard_normal((n_channels, n_samples), dtype=np.float32)
    spec = sp_fft.rfft(white, axis=1)
    f = np.fft.rfftfreq(n_samples, 1.0 / fs)
    gain = np.zeros_like(f, dtype=np.float32)
    gain[f >= f_min] = 1.0 / np.sqrt(f[f >= f_min])
    out = sp_fft.irfft(spec * gain, n=n_samples, axis=1).astype(np.float64)
    return out / out.std(axis=1, keepdims=True)


def layout_annotations(spec: SynthSpec):
    fs = spec.sample_rate_hz
    anns, t = [], 0.0
    for _ in range(spec.n_periods):
        anns.append(("eyes_open", int(round(t * fs)), int(round((t + spec.open_s) * fs))))
        t += spec.open_s
        anns.append(("eyes_closed", int(round(t * fs)), int(round((t + spec.period_s) * fs))))
        t += spec.period_s
    anns.append(("eyes_open", int(round(t * fs)), int(round((t + spec.open_s) * fs))))
    t += spec.open_s
    return [a for a in anns if a[2] > a[1]], int(round(t * fs))


def subject_factors(spec: SynthSpec, index: int):
    """Per-subject (sex, alpha, theta, beta amplitude multipliers, rng)."""
    sex = int(subject_sexes(spec)[index])
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, index]))
    j = np.clip(1 + spec.jitter * rng.standard_normal(3), 0.1, None)
    alpha = (1 + spec.delta * sex) * j[0]
    return sex, alpha, j[1], j[2], rng


def generate_recording(spec: SynthSpec, index: int,
                       montage: Optional[Montage] = None) -> Recording:
    montage = montage or default_montage()
    sex, a_gain, t_gain, b_gain, rng = subject_factors(spec, index)
    anns, n = layout_annotations(spec)
    fs = spec.sample_rate_hz
    nch = len(montage.names)
    prof = spatial_profiles(montage)
    t = np.arange(n) / fs

    closed = np.zeros(n, dtype=bool)
    for label, s, e in anns:
        if label == "eyes_closed":
            closed[s:e] = True
    alpha_env = np.where(closed, 1.0, spec.open_alpha_gain)

    phases = rng.uniform(0, 2 * np.pi, (3, nch))
    data = np.zeros((nch, n))
    rhythms = (
        (THETA_HZ, spec.theta_amplitude * t_gain * prof["theta"], None),
        (ALPHA_HZ, spec.alpha_amplitude * a_gain * prof["alpha"], alpha_env),
        (BETA_HZ, spec.beta_amplitude * b_gain * prof["beta"], None),
    )
    for k, (freq, amp, env) in enumerate(rhythms):
        # sin(wt + p) = cos(p) sin(wt) + sin(p) cos(wt)
        s_t, c_t = np.sin(2 * np.pi * freq * t), np.cos(2 * np.pi * freq * t)
        if env is not None:
            s_t, c_t = s_t * env, c_t * env
        data += np.outer(amp * np.cos(phases[k]), s_t)
        data += np.outer(amp * np.sin(phases[k]), c_t)
    if spec.noise > 0:
        data += (spec.noise * prof["noise"])[:, None] * pink_noise(rng, nch, n, fs)
    return Recording(subject_id(index), sex, fs, list(montage.names),
                     data.astype(np.float32), anns)


def generate_cohort(spec: SynthSpec, montage: Optional[Montage] = None) -> List[Recording]:
    if spec.n_subjects < 2:
        raise ValueError("a cohort needs at least two subjects")
    return [generate_recording(spec, i, montage) for i in range(spec.n_subjects)]


def subject_alpha_power(rec: Recording, montage: Montage,
                        cfg: PreprocessConfig = PreprocessConfig()):
    """Mean alpha band power over all preprocessed epochs and channels."""
    samples = preprocess(rec, montage, cfg)
    epochs = np.stack([s.data for s in samples])
    bp = band_powers(epochs, cfg.target_hz, (ALPHA,))
    return float(bp.mean())


def fit_threshold(stat, labels):
    """Best single threshold on ``stat``: returns ``(threshold, sign)``.

    ``sign = 1`` predicts class 1 above the threshold, ``-1`` below it.
    """
    stat = np.asarray(stat, dtype=float)
    labels = np.asarray(labels, dtype=int)
    order = np.argsort(stat, kind="stable")
    s, y = stat[order], labels[order]
    n = len(s)
    # predict 1 above the cut: cut after position k (k = 0..n)
    ones_above = np.concatenate([[y.sum()], y.sum() - np.cumsum(y)])
    zeros_below = np.concatenate([[0], np.cumsum(1 - y)])
    acc_up = (ones_above + zeros_below) / n
    # only cut where adjacent statistics differ
    valid = np.ones(n + 1, dtype=bool)
    valid[1:n] = s[1:] > s[:-1]
    cuts = np.concatenate([[s[0] - 1], (s[:-1] + s[1:]) / 2, [s[-1] + 1]])
    k_up = np.flatnonzero(valid)[np.argmax(acc_up[valid])]
    k_dn = np.flatnonzero(valid)[np.argmax(1 - acc_up[valid])]
    if acc_up[k_up] >= 1 - acc_up[k_dn]:
        return float(cuts[k_up]), 1
    return float(cuts[k_dn]), -1


def threshold_accuracy(stat, labels, threshold, sign):
    pred = (np.asarray(stat) > threshold) if sign > 0 else (np.asarray(stat) <= threshold)
    return float(np.mean(pred.astype(int) == np.asarray(labels)))


def oracle_accuracy(spec: SynthSpec, n_trials: int = 1000,
                    montage: Optional[Montage] = None,
                    cfg: PreprocessConfig = PreprocessConfig()):
    """Threshold accuracy on per-subject mean alpha power (no network).

    Simulates ``n_trials`` fresh subjects (half female) through the full
    preprocessing chain. The threshold is fitted on one half of the trials
    and scored on the other (and vice versa), so a null effect scores 0.5
    without optimistic bias. An upper-bound reference for trained models.
    """
    if n_trials < 4:
        raise ValueError("n_trials must be at least 4")
    montage = montage or default_montage()
    trial_spec = replace(spec, n_subjects=n_trials, female_fraction=0.5,
                         seed=int(np.random.SeedSequence([spec.seed, 0x0AC1E]).generate_state(1)[0]))
    stats, labels = [], []
    for i in range(n_trials):
        rec = generate_recording(trial_spec, i, montage)
        stats.append(subject_alpha_power(rec, montage, cfg))
        labels.append(rec.sex)
    stats, labels = np.asarray(stats), np.asarray(labels)
    half = np.arange(n_trials) % 2 == 0
    accs = []
    for fit, score in ((half, ~half), (~half, half)):
        thr, sign = fit_threshold(stats[fit], labels[fit])
        accs.append(threshold_accuracy(stats[score], labels[score], thr, sign))
    return float(np.mean(accs))
