"""Spiking-network discriminators: ignition maps from cortical-model variants.

One neuron per pulse sample. The network is driven by the (peak-normalized)
pulse as a constant stimulus while neighbourhood coupling and a decaying
dynamic threshold shape the firing pattern. Cumulative per-neuron firings
form the ignition map from which scalar factors are derived.

Update equations, frozen here with documented defaults:

    feeding   F[i] <- f^h * F[i] + h * (V_F * (K (*) Y)[i] + S[i])
    linking   L[i] <- l^h * L[i] + h *  V_L * (K (*) Y)[i]
    activity  U[i]  = F[i] * (1 + beta * L[i])          (pcnn, rcnn)
              U[i] <- f^h * U[i] + h * S[i] * (1 + beta * (K (*) Y)[i])
                                                        (scm, qcscm merged state)
    firing    Y[i]  = 1  iff U[i] > Theta[i]
    threshold Theta[i] <- g^h * Theta[i] + h * V_Theta * Y[i]

with step h = 1 for the integer-step models and fractional h for the
quasi-continuous variant. Thresholds start at V_Theta so a huge threshold
magnitude suppresses all firing. The random-coupled variant redraws its
kernel each iteration from a seeded generator (uniform entries, normalized
to unit sum).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .freqdomain import convolve_same_batch
from .pulse import Pulse, peak_index

SNN_MODELS = ("pcnn", "scm", "qcscm", "rcnn")


@dataclass(frozen=True)
class SnnConfig:
    """Simulation constants for the cortical-model family."""

    iterations: int = 40
    step: float = 1.0
    feed_decay: float = 0.7
    link_decay: float = 0.6
    theta_decay: float = 0.8
    beta: float = 0.2
    v_feed: float = 0.1
    v_link: float = 0.1
    v_theta: float = 20.0
    kernel: tuple = (0.5, 0.0, 0.5)
    rng_seed: int = 0

    def __post_init__(self):
        if not 0 < self.iterations <= 10_000:
            raise ValueError("iterations must lie in (0, 10000]")
        if not 0 < self.step <= 1:
            raise ValueError("step must lie in (0, 1]")
        for name in ("feed_decay", "link_decay", "theta_decay"):
            val = getattr(self, name)
            if not 0 < val < 1:
                raise ValueError(f"{name} must lie in (0, 1)")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if not self.v_theta > 0:
            raise ValueError("v_theta must be > 0")
        if len(self.kernel) == 0:
            raise ValueError("kernel must be non-empty")


@dataclass(frozen=True)
class IgnitionMap:
    """Cumulative firing counts per neuron; length equals the pulse length."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.ndim != 1 or (c < 0).any():
            raise ValueError("counts must be a 1-D non-negative sequence")
        object.__setattr__(self, "counts", c)


def run_snn_batch(samples: np.ndarray, model: str, cfg: SnnConfig) -> np.ndarray:
    """Simulate one network per pulse row; returns (n, length) firing counts.

    Pulses are expected peak-normalized to [0, 1]. Deterministic given
    (model, config); the random-coupled model is deterministic per rng_seed.
    """
    if model not in SNN_MODELS:
        raise ValueError(f"unknown model {model!r}; expected one of {SNN_MODELS}")
    if model != "qcscm" and cfg.step != 1.0:
        raise ValueError(f"{model} uses integer steps; set step=1")
    s = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    n, length = s.shape
    h = cfg.step
    f_h = cfg.feed_decay ** h
    l_h = cfg.link_decay ** h
    g_h = cfg.theta_decay ** h

    kernel = np.asarray(cfg.kernel, dtype=np.float64)
    rng = np.random.default_rng(cfg.rng_seed) if model == "rcnn" else None

    feed = np.zeros((n, length))
    link = np.zeros((n, length))
    state = np.zeros((n, length))
    fired = np.zeros((n, length))
    theta = np.full((n, length), cfg.v_theta)
    counts = np.zeros((n, length), dtype=np.int64)

    for _ in range(cfg.iterations):
        if rng is not None:
            kernel = rng.uniform(0.0, 1.0, len(cfg.kernel))
            kernel /= kernel.sum()
        coupling = convolve_same_batch(fired, kernel) if fired.any() else np.zeros((n, length))
        if model in ("pcnn", "rcnn"):
            feed = f_h * feed + h * (cfg.v_feed * coupling + s)
            link = l_h * link + h * cfg.v_link * coupling
            activity = feed * (1.0 + cfg.beta * link)
        else:
            state = f_h * state + h * s * (1.0 + cfg.beta * coupling)
            activity = state
        fired = (activity > theta).astype(np.float64)
        counts += fired.astype(np.int64)
        theta = g_h * theta + h * cfg.v_theta * fired
    return counts


def run_snn(pulse: Pulse, model: str, cfg: SnnConfig) -> IgnitionMap:
    """Single-pulse wrapper around :func:`run_snn_batch`."""
    return IgnitionMap(counts=run_snn_batch(pulse.samples[None, :], model, cfg)[0])


def ignition_total(ignition: IgnitionMap) -> float:
    """Sum of all firings over neurons and iterations."""
    return float(ignition.counts.sum())


def pcnn_factor(ignition: IgnitionMap) -> float:
    """Pulse-coupled-network factor: total firings of the ignition map."""
    return ignition_total(ignition)


def scm_factor(ignition: IgnitionMap) -> float:
    """Spiking-cortical-model factor: total firings of the ignition map."""
    return ignition_total(ignition)


def rcnn_factor(ignition: IgnitionMap) -> float:
    """Random-coupled-network factor: total firings of the ignition map."""
    return ignition_total(ignition)


def map_mode(counts: np.ndarray) -> int:
    """Most frequent count value; ties break toward the smallest value."""
    values, freq = np.unique(counts, return_counts=True)
    return int(values[np.argmax(freq)])


def lg_factor(ignition: IgnitionMap, t_max: int, m: int = 1) -> float:
    """Ladder-gradient factor: slope between the map at the input peak time
    and at the m-th later time index holding the map's modal value."""
    counts = ignition.counts
    if not 0 <= t_max < counts.size:
        raise ValueError(f"t_max {t_max} out of bounds")
    if m < 1:
        raise ValueError("m must be >= 1")
    mode = map_mode(counts)
    t_candidates = np.flatnonzero(counts == mode)
    t_candidates = t_candidates[t_candidates > t_max]
    if t_candidates.size < m:
        raise ValueError(
            f"mode set after t_max has {t_candidates.size} elements, need {m}"
        )
    t_mode = int(t_candidates[m - 1])
    return float((counts[t_max] - counts[t_mode]) / (t_max - t_mode))


def lg_factor_for_pulse(pulse: Pulse, ignition: IgnitionMap, m: int = 1) -> float:
    """Ladder gradient with t_max taken from the input pulse's peak."""
    return lg_factor(ignition, peak_index(pulse.samples), m)
