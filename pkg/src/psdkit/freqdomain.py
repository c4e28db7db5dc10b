"""Frequency-domain discriminators: spectra, wavelet transforms, scalogram masks.

Conventions fixed here once:

* The DFT-ratio factor uses type-II cosine/sine transform zero components.
  Under type-I the sine term would be identically zero and the ratio
  undefined, so type-II is the only workable reading.
* Periodograms are unnormalized one-sided |DFT|^2 / N; the DC bin is
  excluded from log-log fits (log of zero frequency is undefined).
* Wavelet transforms use "same-length" discrete convolution: the output has
  the input's length, with the kernel centred at offset (len(k) - 1) // 2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pulse import Dataset, Pulse, peak_index

DEFAULT_CWT_SCALES = np.geomspace(1.0, 64.0, 50)


@dataclass(frozen=True)
class Spectrum:
    """One-sided power spectrum with uniform bin width df (Hz)."""

    values: np.ndarray
    df: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.size == 0 or not np.isfinite(v).all():
            raise ValueError("spectrum must be non-empty and finite")
        if not self.df > 0:
            raise ValueError("df must be > 0")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class ScalogramMask:
    """Boolean (scale, time) grid of class-discriminating scalogram cells."""

    mask: np.ndarray
    threshold: float
    scales: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mask, dtype=bool)
        s = np.asarray(self.scales, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != s.size:
            raise ValueError("mask must be (n_scales, length) with matching scales")
        if not m.any():
            raise ValueError("discrimination mask has no true cells")
        if not 0 < self.threshold < 1:
            raise ValueError("threshold must lie in (0, 1)")
        if (s <= 0).any():
            raise ValueError("scales must be positive")
        object.__setattr__(self, "mask", m)
        object.__setattr__(self, "scales", s)


# ---------------------------------------------------------------------------
# convolution machinery shared by the wavelet methods


def _next_pow2(n: int) -> int:
    p = 1
    while p < n:
        p *= 2
    return p


def convolve_same_batch(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Same-length convolution of each row of x with kernel, via zero-padded FFT."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    kernel = np.asarray(kernel, dtype=np.float64)
    n = x.shape[1]
    m = kernel.size
    nfft = _next_pow2(n + m - 1)
    spec = np.fft.rfft(x, n=nfft, axis=1) * np.fft.rfft(kernel, n=nfft)
    full = np.fft.irfft(spec, n=nfft, axis=1)
    start = (m - 1) // 2
    return full[:, start: start + n]


def marr_kernel(scale: float) -> np.ndarray:
    """Discrete Marr (Mexican hat) wavelet sampled over +-4*scale, unit energy."""
    if not scale > 0:
        raise ValueError("scale must be > 0")
    radius = max(1, int(np.ceil(4.0 * scale)))
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    k = (1.0 - (t / scale) ** 2) * np.exp(-(t ** 2) / (2.0 * scale ** 2))
    return k / np.sqrt((k ** 2).sum())


def haar_kernel(scale: float) -> np.ndarray:
    """Discrete Haar wavelet of support ``scale``: +1/sqrt(s) then -1/sqrt(s).

    Odd supports get a middle zero so the kernel keeps zero mean.
    """
    s = int(round(scale))
    if s < 2:
        raise ValueError("haar scale must round to at least 2")
    half = s // 2
    amp = 1.0 / np.sqrt(s)
    if s % 2:
        return np.concatenate([np.full(half, amp), [0.0], np.full(half, -amp)])
    return np.concatenate([np.full(half, amp), np.full(half, -amp)])


def cwt_matrix(samples: np.ndarray, scales=None) -> np.ndarray:
    """Continuous wavelet transform magnitudes, shape (n, n_scales, length).

    Uses the Marr wavelet; this is the scalogram backing the mask-based
    discriminator.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    scales = DEFAULT_CWT_SCALES if scales is None else np.asarray(scales, dtype=np.float64)
    out = np.empty((samples.shape[0], scales.size, samples.shape[1]))
    for j, s in enumerate(scales):
        out[:, j, :] = np.abs(convolve_same_batch(samples, marr_kernel(s)))
    return out


# ---------------------------------------------------------------------------
# factors


def dft_factor(pulse: Pulse) -> float:
    """Ratio of total DFT power to the DST0*DCT0 product of the trimmed pulse.

    The pulse is trimmed from its peak onward; the zero components follow
    the type-II transform conventions (DCT0 = sum, DST0 uses half-sample
    offsets), and the ratio is normalized by the trimmed sum.
    """
    v = pulse.samples
    trimmed = v[peak_index(v):]
    total = trimmed.sum()
    if not total > 0:
        raise ValueError("trimmed pulse must have positive sum")
    n = trimmed.size
    power = float((np.abs(np.fft.fft(trimmed)) ** 2).sum())
    dct0 = total
    t = np.arange(n, dtype=np.float64)
    dst0 = float((trimmed * np.sin(np.pi * (t + 0.5) / n)).sum())
    denom = dst0 * dct0
    if denom == 0:
        raise ValueError("zero DST0*DCT0 product")
    return power / denom / total


def fga_factor(pulse: Pulse, variant: str = "literal") -> float:
    """Gradient between the zeroth and first frequency components.

    ``literal`` applies the absolute value to the cosine sum only; the
    ``magnitude`` variant uses |X1| = sqrt(cos^2 + sin^2) instead.
    """
    v = pulse.samples
    length = v.size
    if length < 2:
        raise ValueError("pulse must have at least 2 samples")
    f_s = 1.0 / pulse.dt
    t = np.arange(length, dtype=np.float64)
    cos_sum = float(v @ np.cos(2.0 * np.pi * t / length))
    sin_sum = float(v @ np.sin(2.0 * np.pi * t / length))
    x0 = float(v.sum())
    if variant == "literal":
        x1 = abs(cos_sum) - sin_sum
    elif variant == "magnitude":
        x1 = np.hypot(cos_sum, sin_sum)
    else:
        raise ValueError(f"unknown fga variant {variant!r}")
    return length * abs(x0 - x1) / f_s


def periodogram(pulse: Pulse) -> Spectrum:
    """Unnormalized one-sided periodogram |DFT_k|^2 / N with df = 1/(N*dt)."""
    v = pulse.samples
    n = v.size
    power = np.abs(np.fft.rfft(v)) ** 2 / n
    return Spectrum(values=power, df=1.0 / (n * pulse.dt))


def fs_factor(spectrum: Spectrum, a: float = 1.0, b: float = 1.0) -> float:
    """Fractal-spectrum factor b/a minus the log-log periodogram slope.

    The slope comes from a least-squares fit of log(power) against
    log(frequency) over positive-frequency bins with positive power.
    """
    if a == 0:
        raise ValueError("constant a must be non-zero")
    power = spectrum.values
    freqs = spectrum.df * np.arange(power.size)
    usable = (freqs > 0) & (power > 0)
    if usable.sum() < 2:
        raise ValueError("need at least 2 positive-power bins at positive frequency")
    x = np.log(freqs[usable])
    y = np.log(power[usable])
    xc = x - x.mean()
    slope = float((xc @ (y - y.mean())) / (xc @ xc))
    return b / a - slope


def _binarize_scalogram(coeffs: np.ndarray, threshold: float) -> np.ndarray:
    """Per-pulse binarized scalograms: cells at or above threshold * global max.

    A scalogram with zero peak (all-zero pulse) binarizes to all-false.
    """
    peak = coeffs.max(axis=(1, 2), keepdims=True)
    return (coeffs >= threshold * peak) & (peak > 0)


def build_scalogram_mask(refs_n: Dataset, refs_g: Dataset, threshold: float = 0.5,
                         scales=None) -> ScalogramMask:
    """Mask of scalogram cells whose mean binarized value separates the classes.

    A cell is kept when the class means of the binarized scalograms differ
    by more than 0.5 there.
    """
    if len(refs_n) == 0 or len(refs_g) == 0:
        raise ValueError("both reference classes must be non-empty")
    scales = DEFAULT_CWT_SCALES if scales is None else np.asarray(scales, dtype=np.float64)
    means = []
    for ds in (refs_n, refs_g):
        b = _binarize_scalogram(cwt_matrix(ds.samples, scales), threshold)
        means.append(b.mean(axis=0))
    mask = np.abs(means[0] - means[1]) > 0.5
    return ScalogramMask(mask=mask, threshold=threshold, scales=scales)


def sd_factor(pulse: Pulse, mask: ScalogramMask) -> float:
    """Fraction of mask cells lit in the pulse's binarized scalogram."""
    if mask.mask.shape[1] != len(pulse):
        raise ValueError("mask time axis must match pulse length")
    coeffs = cwt_matrix(pulse.samples[None, :], mask.scales)
    b = _binarize_scalogram(coeffs, mask.threshold)[0]
    return float((b & mask.mask).sum() / mask.mask.sum())


def sd_factor_batch(samples: np.ndarray, mask: ScalogramMask) -> np.ndarray:
    """Batch variant of :func:`sd_factor` over an (n, length) matrix."""
    coeffs = cwt_matrix(samples, mask.scales)
    b = _binarize_scalogram(coeffs, mask.threshold)
    return (b & mask.mask[None, :, :]).sum(axis=(1, 2)) / mask.mask.sum()


def sdcc_factor(pulse: Pulse) -> float:
    """Natural log of the pulse's summed squared samples."""
    energy = float((pulse.samples ** 2).sum())
    if energy <= 0:
        raise ValueError("all-zero pulse")
    return float(np.log(energy))


def wt1_factor(pulse: Pulse, s1: float = 28, s2: float = 40) -> float:
    """Square root of the ratio of time-weighted Haar transform magnitudes.

    Both transforms use same-length convolution with the discrete Haar
    wavelet; the numerator uses scale ``s1``, the denominator ``s2``.
    """
    v = pulse.samples[None, :]
    t = np.arange(pulse.samples.size, dtype=np.float64)
    num = float(np.abs(t * convolve_same_batch(v, haar_kernel(s1))[0]).sum())
    den = float(np.abs(t * convolve_same_batch(v, haar_kernel(s2))[0]).sum())
    if den == 0:
        raise ValueError("zero denominator in scale-feature ratio")
    return float(np.sqrt(num / den))


def wt2_factor(pulse: Pulse, marr_scale: float = 8.0) -> float:
    """Ratio of twice the pulse integral to the integral plus the positive
    part of its Marr wavelet transform."""
    v = pulse.samples
    total = float(v.sum())
    if not total > 0:
        raise ValueError("pulse sum must be > 0")
    transformed = convolve_same_batch(v[None, :], marr_kernel(marr_scale))[0]
    positive = float(np.clip(transformed, 0.0, None).sum())
    denom = total + positive
    if denom == 0:
        raise ValueError("zero denominator")
    return 2.0 * total / denom
