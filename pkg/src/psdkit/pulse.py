"""Waveform domain types, CSV ingestion, preprocessing, synthesis, and splits.

A pulse is one digitized scintillation waveform: a fixed-length vector of
amplitude samples plus the sample period. All sample indexing is 0-based and
integrals over time are inclusive sums over integer sample indices.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

NEUTRON = "neutron"
GAMMA = "gamma"

_LABEL_ALIASES = {
    "n": NEUTRON,
    "neutron": NEUTRON,
    "g": GAMMA,
    "gamma": GAMMA,
}


class DataError(ValueError):
    """Malformed or inconsistent input data (files, labels, shapes)."""


def _as_float_vector(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("pulse samples must be a non-empty 1-D sequence")
    return arr


@dataclass(frozen=True)
class Pulse:
    """One digitized waveform.

    Attributes:
        samples: amplitude samples (arbitrary units).
        dt: sample period in seconds, > 0.
        id: index of the pulse within its dataset.

    Samples are allowed to be non-finite so that corrupted-pulse screening
    can flag them; analysis operations assume screened, finite input.
    """

    samples: np.ndarray
    dt: float = 1.0
    id: int = 0

    def __post_init__(self):
        arr = _as_float_vector(self.samples)
        arr.flags.writeable = False
        object.__setattr__(self, "samples", arr)
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")

    def __len__(self) -> int:
        return self.samples.size

    def with_samples(self, samples: np.ndarray) -> "Pulse":
        """Copy of this pulse with replaced samples (same dt and id)."""
        return Pulse(samples=samples, dt=self.dt, id=self.id)


def peak_index(values: np.ndarray) -> int:
    """Index of the pulse peak.

    For a unique maximum this is the ordinary argmax. When the maximum is
    attained on a plateau (e.g. a clipped or constant pulse) the centre of
    the plateau is returned, so that peak-relative gates sit symmetrically.
    """
    values = np.asarray(values)
    m = values.max()
    hits = np.flatnonzero(values == m)
    return int((hits[0] + hits[-1]) // 2)


class Dataset:
    """Ordered collection of equal-length pulses with optional class labels.

    Samples are stored as one read-only (n_pulses, length) float matrix;
    individual ``Pulse`` views are materialized on indexed access.
    """

    def __init__(self, samples, dt: float = 1.0, labels=None, source: str = "",
                 ids=None):
        arr = np.array(samples, dtype=np.float64, copy=True)
        if arr.ndim != 2:
            raise ValueError("dataset samples must be a 2-D (n, length) array")
        if arr.shape[0] > 0 and arr.shape[1] == 0:
            raise ValueError("pulses must have at least one sample")
        arr.flags.writeable = False
        self.samples = arr
        if not dt > 0:
            raise ValueError(f"dt must be > 0, got {dt}")
        self.dt = float(dt)
        if labels is not None:
            labels = np.asarray([canonical_label(l) for l in labels], dtype=object)
            if labels.shape[0] != arr.shape[0]:
                raise DataError(
                    f"label count {labels.shape[0]} does not match pulse count {arr.shape[0]}"
                )
        self.labels = labels
        self.source = source
        if ids is None:
            ids = np.arange(arr.shape[0], dtype=np.int64)
        else:
            ids = np.asarray(ids, dtype=np.int64)
            if ids.shape[0] != arr.shape[0]:
                raise ValueError("ids must align with pulses")
        self.ids = ids

    @classmethod
    def from_pulses(cls, pulses: Sequence[Pulse], labels=None, source: str = "") -> "Dataset":
        if not pulses:
            raise ValueError("from_pulses requires at least one pulse")
        dt = pulses[0].dt
        lengths = {len(p) for p in pulses}
        if len(lengths) != 1:
            raise DataError(f"pulses have mixed lengths {sorted(lengths)}")
        mat = np.stack([p.samples for p in pulses])
        return cls(mat, dt=dt, labels=labels, source=source,
                   ids=[p.id for p in pulses])

    @property
    def length(self) -> int:
        return self.samples.shape[1]

    def __len__(self) -> int:
        return self.samples.shape[0]

    def __getitem__(self, i: int) -> Pulse:
        return Pulse(samples=self.samples[i], dt=self.dt, id=int(self.ids[i]))

    def __iter__(self) -> Iterator[Pulse]:
        for i in range(len(self)):
            yield self[i]

    def subset(self, indices) -> "Dataset":
        """New dataset holding the given rows, in the given order."""
        indices = np.asarray(indices, dtype=np.int64)
        labels = self.labels[indices] if self.labels is not None else None
        return Dataset(self.samples[indices], dt=self.dt, labels=labels,
                       source=self.source, ids=self.ids[indices])

    def replace_samples(self, samples: np.ndarray) -> "Dataset":
        """New dataset with transformed samples, same labels/ids/provenance."""
        return Dataset(samples, dt=self.dt, labels=self.labels,
                       source=self.source, ids=self.ids)

    def label_indices(self, label: str) -> np.ndarray:
        if self.labels is None:
            raise DataError("dataset has no labels")
        return np.flatnonzero(self.labels == canonical_label(label))


def canonical_label(token: str) -> str:
    key = str(token).strip().lower()
    if key not in _LABEL_ALIASES:
        raise DataError(f"unknown class label {token!r} (expected n/g/neutron/gamma)")
    return _LABEL_ALIASES[key]


@dataclass(frozen=True)
class SplitSpec:
    """Validation/training/test fractions plus shuffling seed.

    Fractions follow the benchmark convention (validation, training, test)
    and must sum to 1.
    """

    fractions: tuple = (0.8, 0.18, 0.02)
    seed: int = 0
    stratified: bool = False

    def __post_init__(self):
        if len(self.fractions) != 3:
            raise ValueError("fractions must be a (validation, training, test) triple")
        if any(f < 0 or f > 1 for f in self.fractions):
            raise ValueError("each fraction must lie in [0, 1]")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ValueError(f"fractions must sum to 1, got {sum(self.fractions)}")


@dataclass(frozen=True)
class SynthParams:
    """Parameters for the two-component synthetic scintillation model.

    Each pulse is A * (exp(-t/tau_fast) + tail_ratio * exp(-t/tau_slow))
    * (1 - exp(-t/tau_rise)) plus Gaussian noise with sd noise_sigma * A,
    with t in sample units. Neutron-like pulses use a larger tail_ratio.
    """

    tau_rise: float = 2.0
    tau_fast: float = 4.0
    tau_slow: float = 35.0
    tail_ratio: float = 0.35
    amplitude_range: tuple = (0.5, 1.5)
    noise_sigma: float = 0.01
    length: int = 256
    seed: int = 0

    def __post_init__(self):
        if min(self.tau_rise, self.tau_fast, self.tau_slow) <= 0:
            raise ValueError("decay constants must be > 0")
        if not self.tau_fast < self.tau_slow:
            raise ValueError("tau_fast must be < tau_slow")
        if self.tail_ratio < 0:
            raise ValueError("tail_ratio must be >= 0")
        lo, hi = self.amplitude_range
        if not lo <= hi:
            raise ValueError("amplitude_range min must be <= max")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.length < 1:
            raise ValueError("length must be >= 1")


@dataclass(frozen=True)
class RejectionFlags:
    """Corrupted-pulse screening result; a pulse is rejected iff any flag is set."""

    flat_peak: bool = False
    multi_peak: bool = False
    non_finite: bool = False

    @property
    def rejected(self) -> bool:
        return self.flat_peak or self.multi_peak or self.non_finite


# ---------------------------------------------------------------------------
# ingestion


def _parse_csv_rows(path) -> list:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            rows.append((lineno, line.split(",")))
    if not rows:
        raise DataError(f"{path}: no pulse rows found")
    return rows


def load_dataset(path, label_path=None, dt: float = 1.0, source: str | None = None) -> Dataset:
    """Load a pulse CSV (one pulse per row of comma-separated reals).

    A header row is auto-detected by a non-numeric first cell and skipped.
    When ``label_path`` is given it must hold one class token per line
    (n/g/neutron/gamma, case-insensitive), aligned with the pulse rows.
    """
    rows = _parse_csv_rows(path)
    try:
        float(rows[0][1][0])
    except ValueError:
        rows = rows[1:]
        if not rows:
            raise DataError(f"{path}: header only, no pulse rows")
    width = len(rows[0][1])
    data = np.empty((len(rows), width), dtype=np.float64)
    for i, (lineno, cells) in enumerate(rows):
        if len(cells) != width:
            raise DataError(
                f"{path}:{lineno}: ragged row of {len(cells)} samples (expected {width})"
            )
        try:
            data[i] = [float(c) for c in cells]
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: non-numeric cell ({exc})") from None

    labels = None
    if label_path is not None:
        labels = load_labels(label_path)
        if len(labels) != len(rows):
            raise DataError(
                f"{label_path}: {len(labels)} labels for {len(rows)} pulses"
            )
    return Dataset(data, dt=dt, labels=labels, source=source or str(path))


def load_labels(path) -> list:
    labels = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            token = line.strip()
            if token:
                labels.append(canonical_label(token))
    return labels


def save_dataset(ds: Dataset, path, label_path=None) -> None:
    """Write a dataset back to CSV (and optionally its label file).

    Floats are written with shortest round-trip representation so that
    load -> save -> load is bit-identical for finite samples.
    """
    with open(path, "w", encoding="utf-8") as fh:
        for row in ds.samples:
            fh.write(",".join(repr(float(x)) for x in row))
            fh.write("\n")
    if label_path is not None:
        if ds.labels is None:
            raise DataError("dataset has no labels to save")
        with open(label_path, "w", encoding="utf-8") as fh:
            for label in ds.labels:
                fh.write(f"{label}\n")


# ---------------------------------------------------------------------------
# preprocessing


def reject_corrupted(pulse: Pulse, flat_run: int = 3, peak_fraction: float = 0.5) -> RejectionFlags:
    """Screen one pulse for digitizer artifacts.

    flat_peak: at least ``flat_run`` consecutive samples equal to the maximum.
    multi_peak: more than one strict local maximum exceeding
    ``peak_fraction`` times the maximum. non_finite: any NaN/inf sample.
    All checks are invariant under positive rescaling of the pulse.
    """
    if flat_run < 2:
        raise ValueError("flat_run must be >= 2")
    if not 0 < peak_fraction < 1:
        raise ValueError("peak_fraction must lie in (0, 1)")
    v = pulse.samples
    if not np.isfinite(v).all():
        return RejectionFlags(non_finite=True)

    m = v.max()
    at_max = v == m
    flat = False
    run = 0
    for hit in at_max:
        run = run + 1 if hit else 0
        if run >= flat_run:
            flat = True
            break

    multi = False
    if v.size >= 3:
        interior = v[1:-1]
        strict = (interior > v[:-2]) & (interior > v[2:])
        tall = interior > peak_fraction * m
        multi = int(np.count_nonzero(strict & tall)) > 1
    return RejectionFlags(flat_peak=flat, multi_peak=multi, non_finite=False)


def baseline_subtract(pulse: Pulse, n_baseline: int) -> Pulse:
    """Subtract the mean of the first ``n_baseline`` samples from the pulse."""
    if not 1 <= n_baseline < len(pulse):
        raise ValueError(f"n_baseline must lie in [1, {len(pulse) - 1}], got {n_baseline}")
    offset = pulse.samples[:n_baseline].mean()
    return pulse.with_samples(pulse.samples - offset)


def normalize_amplitude(pulse: Pulse) -> Pulse:
    """Divide all samples by the maximum so the new peak is exactly 1."""
    m = pulse.samples.max()
    if not m > 0:
        raise ValueError("cannot normalize a pulse with non-positive maximum")
    return pulse.with_samples(pulse.samples / m)


def align_to_peak(pulse: Pulse, target_index: int) -> Pulse:
    """Shift the pulse so its peak lands at ``target_index``, zero-filling."""
    n = len(pulse)
    if not 0 <= target_index < n:
        raise ValueError(f"target_index must lie in [0, {n - 1}], got {target_index}")
    shift = target_index - peak_index(pulse.samples)
    out = np.zeros(n, dtype=np.float64)
    if shift >= 0:
        out[shift:] = pulse.samples[: n - shift]
    else:
        out[: n + shift] = pulse.samples[-shift:]
    return pulse.with_samples(out)


def _sliding_mean(values: np.ndarray, window: int) -> np.ndarray:
    half = window // 2
    n = values.size
    csum = np.concatenate(([0.0], np.cumsum(values)))
    lo = np.maximum(np.arange(n) - half, 0)
    hi = np.minimum(np.arange(n) + half + 1, n)
    return (csum[hi] - csum[lo]) / (hi - lo)


def _lower_median(window_values: np.ndarray) -> float:
    # Even-sized (edge) windows take the lower middle, keeping integer
    # plateaus intact instead of averaging across a step.
    s = np.sort(window_values)
    return float(s[(s.size - 1) // 2])


def _sliding_median(values: np.ndarray, window: int) -> np.ndarray:
    half = window // 2
    n = values.size
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        out[i] = _lower_median(values[max(0, i - half): min(n, i + half + 1)])
    return out


def filter_pulse(pulse: Pulse, kind: str = "moving_average", window: int = 5) -> Pulse:
    """Centered sliding mean or median filter; edges use shrunken windows."""
    n = len(pulse)
    if window % 2 == 0 or not 1 <= window <= n:
        raise ValueError(f"window must be odd and within [1, {n}], got {window}")
    if kind == "moving_average":
        out = _sliding_mean(pulse.samples, window)
    elif kind == "median":
        out = _sliding_median(pulse.samples, window)
    else:
        raise ValueError(f"unknown filter kind {kind!r}")
    return pulse.with_samples(out)


def filter_matrix(samples: np.ndarray, kind: str = "moving_average", window: int = 5) -> np.ndarray:
    """Batch variant of :func:`filter_pulse` over an (n, length) matrix."""
    n_rows, n = samples.shape
    if window % 2 == 0 or not 1 <= window <= n:
        raise ValueError(f"window must be odd and within [1, {n}], got {window}")
    if window == 1:
        return samples.copy()
    half = window // 2
    out = np.empty_like(samples)
    if kind == "moving_average":
        csum = np.concatenate(
            (np.zeros((n_rows, 1)), np.cumsum(samples, axis=1)), axis=1
        )
        idx = np.arange(n)
        lo = np.maximum(idx - half, 0)
        hi = np.minimum(idx + half + 1, n)
        out[:] = (csum[:, hi] - csum[:, lo]) / (hi - lo)
    elif kind == "median":
        views = np.lib.stride_tricks.sliding_window_view(samples, window, axis=1)
        interior = np.sort(views, axis=2)[:, :, (window - 1) // 2]
        out[:, half: n - half] = interior
        for i in list(range(half)) + list(range(n - half, n)):
            seg = samples[:, max(0, i - half): min(n, i + half + 1)]
            k = (seg.shape[1] - 1) // 2
            out[:, i] = np.sort(seg, axis=1)[:, k]
    else:
        raise ValueError(f"unknown filter kind {kind!r}")
    return out


# ---------------------------------------------------------------------------
# synthesis


def _synth_class(n: int, params: SynthParams, label: str) -> tuple:
    rng = np.random.default_rng(params.seed)
    t = np.arange(params.length, dtype=np.float64)
    shape = (
        np.exp(-t / params.tau_fast)
        + params.tail_ratio * np.exp(-t / params.tau_slow)
    ) * (1.0 - np.exp(-t / params.tau_rise))
    lo, hi = params.amplitude_range
    amps = rng.uniform(lo, hi, size=n)
    pulses = amps[:, None] * shape[None, :]
    if params.noise_sigma > 0:
        pulses = pulses + rng.standard_normal((n, params.length)) * (
            params.noise_sigma * amps[:, None]
        )
    return pulses, [label] * n


def synthesize_dataset(n_neutron: int, n_gamma: int, p_n: SynthParams, p_g: SynthParams) -> Dataset:
    """Generate a labeled synthetic dataset, deterministic per seed."""
    if n_neutron < 0 or n_gamma < 0:
        raise ValueError("pulse counts must be >= 0")
    if p_n.length != p_g.length:
        raise ValueError("neutron and gamma params must share the same length")
    mat_n, lab_n = _synth_class(n_neutron, p_n, NEUTRON)
    mat_g, lab_g = _synth_class(n_gamma, p_g, GAMMA)
    mat = np.concatenate([mat_n, mat_g], axis=0) if (n_neutron + n_gamma) else np.empty((0, p_n.length))
    return Dataset(mat, dt=1.0, labels=(lab_n + lab_g) or None, source="synthetic")


# ---------------------------------------------------------------------------
# partitioning


def _split_counts(n: int, fractions) -> tuple:
    f_val, f_train, f_test = fractions
    n_test = min(n, round(f_test * n))
    n_train = min(n - n_test, round(f_train * n))
    n_val = n - n_test - n_train
    return n_val, n_train, n_test


def _split_indices(indices: np.ndarray, fractions, rng) -> tuple:
    n_val, n_train, n_test = _split_counts(indices.size, fractions)
    perm = indices[rng.permutation(indices.size)]
    test = perm[:n_test]
    train = perm[n_test: n_test + n_train]
    val = perm[n_test + n_train:]
    return val, train, test


def split_dataset(ds: Dataset, spec: SplitSpec) -> tuple:
    """Partition a dataset into (validation, training, test) subsets.

    Test and training sizes come from round-half-even of their fractions;
    validation takes the remainder. Stratified mode applies the same rule
    per class and merges, preserving class ratios within one pulse. Subset
    membership is random per seed but original dataset order is preserved
    within each subset.
    """
    if spec.stratified:
        if ds.labels is None:
            raise DataError("stratified split requested on unlabeled data")
        rng = np.random.default_rng(spec.seed)
        parts = {"val": [], "train": [], "test": []}
        for label in sorted(set(ds.labels)):
            val, train, test = _split_indices(ds.label_indices(label), spec.fractions, rng)
            parts["val"].append(val)
            parts["train"].append(train)
            parts["test"].append(test)
        val = np.sort(np.concatenate(parts["val"]))
        train = np.sort(np.concatenate(parts["train"]))
        test = np.sort(np.concatenate(parts["test"]))
    else:
        rng = np.random.default_rng(spec.seed)
        val, train, test = _split_indices(np.arange(len(ds)), spec.fractions, rng)
        val, train, test = np.sort(val), np.sort(train), np.sort(test)
    return ds.subset(val), ds.subset(train), ds.subset(test)


# ---------------------------------------------------------------------------
# energy partitioning


def pulse_energy(pulse: Pulse) -> float:
    """Uncalibrated pulse energy: the plain sum of all samples."""
    return float(pulse.samples.sum())


def apply_energy_threshold(ds: Dataset, threshold: float, calibration: float = 1.0) -> Dataset:
    """Keep pulses whose calibrated energy reaches the threshold, order preserved."""
    if not calibration > 0:
        raise ValueError("calibration must be > 0")
    energies = calibration * ds.samples.sum(axis=1)
    return ds.subset(np.flatnonzero(energies >= threshold))
