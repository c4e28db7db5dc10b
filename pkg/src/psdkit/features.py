"""Feature pipelines feeding the prior-knowledge learners.

Supported kinds:

* ``raw``          - the samples verbatim
* ``fft_mag``      - magnitudes of the one-sided DFT
* ``stft_mag``     - flattened short-time Fourier magnitudes (Hann window)
* ``dwt_haar``     - level-1 Haar approximation + detail coefficients
* ``pca``          - projection onto a fitted top-k principal basis
* ``charge_cumsum``- cumulative charge at equally spaced truncation points

``pca`` must be fitted on a training split before transforming.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .pulse import Dataset

FEATURE_KINDS = ("raw", "fft_mag", "stft_mag", "dwt_haar", "pca", "charge_cumsum")


@dataclass(frozen=True)
class PcaState:
    """Fitted PCA basis: rows of ``basis`` are orthonormal components."""

    mean: np.ndarray
    basis: np.ndarray

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "basis": self.basis.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "PcaState":
        return cls(mean=np.asarray(d["mean"], dtype=np.float64),
                   basis=np.asarray(d["basis"], dtype=np.float64))


@dataclass(frozen=True)
class FeatureSpec:
    kind: str = "raw"
    stft_window: int = 32
    stft_hop: int = 16
    pca_components: int = 100
    charge_points: int = 6
    fitted_state: PcaState | None = None

    def __post_init__(self):
        if self.kind not in FEATURE_KINDS:
            raise ValueError(f"unknown feature kind {self.kind!r}")
        if self.stft_hop > self.stft_window:
            raise ValueError("stft_hop must be <= stft_window")
        if self.stft_window < 1 or self.stft_hop < 1:
            raise ValueError("stft window/hop must be >= 1")
        if self.pca_components < 1:
            raise ValueError("pca_components must be >= 1")
        if self.charge_points < 1:
            raise ValueError("charge_points must be >= 1")

    def to_dict(self) -> dict:
        d = {
            "kind": self.kind,
            "stft_window": self.stft_window,
            "stft_hop": self.stft_hop,
            "pca_components": self.pca_components,
            "charge_points": self.charge_points,
        }
        if self.fitted_state is not None:
            d["fitted_state"] = self.fitted_state.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSpec":
        state = d.get("fitted_state")
        return cls(
            kind=d["kind"],
            stft_window=d["stft_window"],
            stft_hop=d["stft_hop"],
            pca_components=d["pca_components"],
            charge_points=d["charge_points"],
            fitted_state=PcaState.from_dict(state) if state else None,
        )


def fit_features(spec: FeatureSpec, training: Dataset) -> FeatureSpec:
    """Fit any learnable state (PCA basis); other kinds pass through."""
    if spec.kind != "pca":
        return spec
    x = training.samples
    if x.shape[0] < 2:
        raise ValueError("pca fitting needs at least 2 training pulses")
    k = spec.pca_components
    if k > x.shape[1]:
        raise ValueError(f"pca_components {k} exceeds pulse length {x.shape[1]}")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (x.shape[0] - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:k]
    basis = eigvecs[:, order].T
    for i in range(basis.shape[0]):  # reproducible component signs
        if basis[i, np.argmax(np.abs(basis[i]))] < 0:
            basis[i] = -basis[i]
    return replace(spec, fitted_state=PcaState(mean=mean, basis=basis))


def _stft_mag(matrix: np.ndarray, window: int, hop: int) -> np.ndarray:
    n, length = matrix.shape
    if window > length:
        raise ValueError(f"stft window {window} exceeds pulse length {length}")
    starts = list(range(0, length, hop))
    hann = np.hanning(window)
    frames = []
    for s in starts:
        frame = np.zeros((n, window))
        chunk = matrix[:, s: s + window]
        frame[:, : chunk.shape[1]] = chunk  # zero-padded tail
        frames.append(np.abs(np.fft.rfft(frame * hann, axis=1)))
    return np.concatenate(frames, axis=1)


def _dwt_haar(matrix: np.ndarray) -> np.ndarray:
    n, length = matrix.shape
    if length % 2:
        matrix = np.concatenate([matrix, np.zeros((n, 1))], axis=1)
    even = matrix[:, 0::2]
    odd = matrix[:, 1::2]
    approx = (even + odd) / np.sqrt(2.0)
    detail = (even - odd) / np.sqrt(2.0)
    return np.concatenate([approx, detail], axis=1)


def _charge_cumsum(matrix: np.ndarray, points: int) -> np.ndarray:
    length = matrix.shape[1]
    csum = np.cumsum(matrix, axis=1)
    idx = np.clip(np.round(length * np.arange(1, points + 1) / points).astype(int) - 1,
                  0, length - 1)
    return csum[:, idx]


def extract_features_matrix(spec: FeatureSpec, samples: np.ndarray) -> np.ndarray:
    """Feature matrix for an (n, length) sample matrix."""
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if spec.kind == "raw":
        return samples.copy()
    if spec.kind == "fft_mag":
        return np.abs(np.fft.rfft(samples, axis=1))
    if spec.kind == "stft_mag":
        return _stft_mag(samples, spec.stft_window, spec.stft_hop)
    if spec.kind == "dwt_haar":
        return _dwt_haar(samples)
    if spec.kind == "charge_cumsum":
        return _charge_cumsum(samples, spec.charge_points)
    if spec.kind == "pca":
        if spec.fitted_state is None:
            raise ValueError("pca features require fit_features before transform")
        state = spec.fitted_state
        return (samples - state.mean) @ state.basis.T
    raise ValueError(f"unknown feature kind {spec.kind!r}")


def extract_features(spec: FeatureSpec, pulse) -> np.ndarray:
    """Feature vector for a single pulse."""
    samples = pulse.samples if hasattr(pulse, "samples") else np.asarray(pulse)
    return extract_features_matrix(spec, samples[None, :])[0]


@dataclass
class Standardizer:
    """Per-coordinate zero-mean unit-variance scaling fitted on training data.

    Zero-variance coordinates keep scale 1 so constant features map to zero
    rather than dividing by zero.
    """

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, features: np.ndarray) -> "Standardizer":
        features = np.asarray(features, dtype=np.float64)
        mean = features.mean(axis=0)
        scale = features.std(axis=0)
        scale = np.where(scale == 0, 1.0, scale)
        return cls(mean=mean, scale=scale)

    def transform(self, features: np.ndarray) -> np.ndarray:
        return (np.asarray(features, dtype=np.float64) - self.mean) / self.scale

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(mean=np.asarray(d["mean"], dtype=np.float64),
                   scale=np.asarray(d["scale"], dtype=np.float64))
