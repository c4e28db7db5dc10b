"""Time-domain discriminators: each maps one preprocessed pulse to a scalar factor.

All gates and time points are peak-relative sample indices; integrals are
inclusive sums over both endpoints.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pulse import Dataset, Pulse, peak_index


@dataclass(frozen=True)
class GateConfig:
    """Peak-relative charge gates (sample units).

    The tail gate of the charge-comparison factor is [peak+t_short, peak+t_long];
    the delayed gate of the charge-integration factor is
    [peak+t_total-t_delay, peak+t_total]. Both totals start at peak-t_pre.
    """

    t_pre: int = 10
    t_short: int = 20
    t_long: int = 160
    t_delay: int = 140
    t_total: int = 160

    def __post_init__(self):
        if self.t_pre < 0:
            raise ValueError("t_pre must be >= 0")
        if not 0 < self.t_short < self.t_long:
            raise ValueError("need 0 < t_short < t_long")
        if not 0 < self.t_delay < self.t_total:
            raise ValueError("need 0 < t_delay < t_total")


@dataclass(frozen=True)
class ReferencePair:
    """Peak-normalized mean reference pulses for the two classes."""

    v_n: np.ndarray
    v_gamma: np.ndarray

    def __post_init__(self):
        vn = np.asarray(self.v_n, dtype=np.float64)
        vg = np.asarray(self.v_gamma, dtype=np.float64)
        if vn.shape != vg.shape or vn.ndim != 1:
            raise ValueError("reference pulses must be equal-length vectors")
        for name, v in (("v_n", vn), ("v_gamma", vg)):
            if abs(v.max() - 1.0) > 1e-9:
                raise ValueError(f"{name} must be peak-normalized (max == 1)")
        object.__setattr__(self, "v_n", vn)
        object.__setattr__(self, "v_gamma", vg)


@dataclass(frozen=True)
class PmfPair:
    """Per-class pulse-shape probability mass functions, floored at epsilon."""

    pmf_n: np.ndarray
    pmf_gamma: np.ndarray
    epsilon: float = 1e-6

    def __post_init__(self):
        for name in ("pmf_n", "pmf_gamma"):
            p = np.asarray(getattr(self, name), dtype=np.float64)
            if abs(p.sum() - 1.0) > 1e-9:
                raise ValueError(f"{name} must sum to 1")
            if (p < self.epsilon - 1e-15).any():
                raise ValueError(f"{name} has entries below epsilon")
            object.__setattr__(self, name, p)
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")


@dataclass(frozen=True)
class PrincipalComponent:
    """Dominant eigenvector of the training covariance, unit norm."""

    w: np.ndarray
    eigenvalue: float

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        if abs(np.linalg.norm(w) - 1.0) > 1e-9:
            raise ValueError("principal component must have unit norm")
        if self.eigenvalue < 0:
            raise ValueError("eigenvalue must be >= 0")
        object.__setattr__(self, "w", w)


def _gate_sum(v: np.ndarray, lo: int, hi: int) -> float:
    """Inclusive sum of v over [lo, hi], which must lie within bounds."""
    if lo < 0 or hi >= v.size or lo > hi:
        raise ValueError(f"gate [{lo}, {hi}] exceeds pulse bounds [0, {v.size - 1}]")
    return float(v[lo: hi + 1].sum())


def cc_factor(pulse: Pulse, gates: GateConfig) -> float:
    """Charge comparison: slow-component charge over total charge."""
    v = pulse.samples
    tp = peak_index(v)
    tail = _gate_sum(v, tp + gates.t_short, tp + gates.t_long)
    total = _gate_sum(v, tp - gates.t_pre, tp + gates.t_long)
    if total == 0:
        raise ValueError("zero total charge in gate")
    return tail / total


def ci_factor(pulse: Pulse, gates: GateConfig) -> float:
    """Charge integration: delayed-gate charge over total charge."""
    v = pulse.samples
    tp = peak_index(v)
    delayed = _gate_sum(v, tp + gates.t_total - gates.t_delay, tp + gates.t_total)
    total = _gate_sum(v, tp - gates.t_pre, tp + gates.t_total)
    if total == 0:
        raise ValueError("zero total charge in gate")
    return delayed / total


def _falling_crossing(vn: np.ndarray, start: int, threshold: float) -> float:
    """First sub-sample time >= start where the falling edge crosses threshold."""
    for i in range(start, vn.size - 1):
        if vn[i] >= threshold > vn[i + 1]:
            return i + (vn[i] - threshold) / (vn[i] - vn[i + 1])
    raise ValueError(f"falling edge never crosses {threshold:g} of max")


def feps_factor(pulse: Pulse, high: float = 0.6, low: float = 0.1) -> float:
    """Falling-edge percentage slope between two fractional-amplitude crossings.

    Crossing times are found by linear interpolation on the falling edge of
    the peak-normalized pulse, so the factor is invariant under positive
    rescaling of the input.
    """
    if not 0 < low < high < 1:
        raise ValueError("need 0 < low < high < 1")
    m = pulse.samples.max()
    if not m > 0:
        raise ValueError("pulse maximum must be > 0")
    vn = pulse.samples / m
    tp = peak_index(vn)
    t_high = _falling_crossing(vn, tp, high)
    t_low = _falling_crossing(vn, int(t_high), low)
    return (low - high) / (t_low - t_high)


def gatti_weights(refs: ReferencePair) -> np.ndarray:
    """Gatti weight sequence from the class references; 0/0 cells map to 0."""
    num = refs.v_n - refs.v_gamma
    den = refs.v_n + refs.v_gamma
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den != 0)
    return out


def gatti_factor(pulse: Pulse, weights: np.ndarray) -> float:
    """Weighted linear factor: the inner product of pulse and Gatti weights."""
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != pulse.samples.shape:
        raise ValueError("weight length must match pulse length")
    return float(pulse.samples @ weights)


def build_reference_pair(ds_n: Dataset, ds_g: Dataset) -> ReferencePair:
    """Mean of peak-normalized pulses per class, renormalized to unit peak."""
    refs = []
    for ds in (ds_n, ds_g):
        if len(ds) == 0:
            raise ValueError("reference class is empty")
        peaks = ds.samples.max(axis=1)
        if (peaks <= 0).any():
            raise ValueError("reference pulses must have positive maxima")
        mean = (ds.samples / peaks[:, None]).mean(axis=0)
        refs.append(mean / mean.max())
    return ReferencePair(v_n=refs[0], v_gamma=refs[1])


def build_pmf(ds: Dataset, epsilon: float = 1e-6) -> PmfPair:
    """Per-class pulse-shape PMFs from a labeled dataset.

    The class mean pulse is clipped at zero, normalized, then floored with
    additive smoothing p -> eps + (1 - L*eps) * p so every entry is at least
    epsilon while the PMF still sums to exactly 1.
    """
    if ds.labels is None:
        raise ValueError("build_pmf requires a labeled dataset")
    if not 0 < epsilon * ds.length < 1:
        raise ValueError("epsilon too large for this pulse length")
    pmfs = {}
    for label in ("neutron", "gamma"):
        idx = ds.label_indices(label)
        if idx.size == 0:
            raise ValueError(f"class {label!r} is empty")
        mean = np.clip(ds.samples[idx].mean(axis=0), 0.0, None)
        total = mean.sum()
        if total <= 0:
            raise ValueError(f"class {label!r} mean pulse has no positive mass")
        pmfs[label] = epsilon + (1.0 - ds.length * epsilon) * (mean / total)
    return PmfPair(pmf_n=pmfs["neutron"], pmf_gamma=pmfs["gamma"], epsilon=epsilon)


def llr_factor(pulse: Pulse, pmfs: PmfPair) -> float:
    """Log-likelihood-ratio factor: sum of V(t) * -log(pmf_n(t)/pmf_gamma(t))."""
    if pmfs.pmf_n.shape != pulse.samples.shape:
        raise ValueError("PMF length must match pulse length")
    log_ratio = np.log(pmfs.pmf_n) - np.log(pmfs.pmf_gamma)
    return float(-(pulse.samples @ log_ratio))


def lmt_factor(pulse: Pulse) -> float:
    """Natural log of the amplitude-weighted mean time (0-based indices)."""
    v = pulse.samples
    total = v.sum()
    if not total > 0:
        raise ValueError("pulse sum must be > 0")
    mean_time = (np.arange(v.size) @ v) / total
    if not mean_time > 0:
        raise ValueError("mean time must be > 0 for the log to be defined")
    return float(np.log(mean_time))


def pca_fit(training: Dataset, tol: float = 1e-10, max_iter: int = 5000) -> PrincipalComponent:
    """Dominant covariance eigenvector by power iteration.

    Sign is fixed so the largest-magnitude entry is positive, making factors
    reproducible across runs.
    """
    if len(training) < 2:
        raise ValueError("pca_fit needs at least 2 training pulses")
    x = training.samples
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (len(training) - 1)
    if not cov.any():
        raise ValueError("degenerate covariance: all training pulses identical")
    rng = np.random.default_rng(0)  # fixed start for run-to-run reproducibility
    v = rng.standard_normal(cov.shape[0])
    v /= np.linalg.norm(v)
    for _ in range(max_iter):
        w = cov @ v
        norm = np.linalg.norm(w)
        if norm == 0:
            raise ValueError("degenerate covariance: power iteration collapsed")
        w /= norm
        if w @ v < 0:
            w = -w
        if np.abs(w - v).max() < tol:
            v = w
            break
        v = w
    else:
        raise ValueError(f"power iteration did not converge in {max_iter} steps")
    if v[np.argmax(np.abs(v))] < 0:
        v = -v
    return PrincipalComponent(w=v, eigenvalue=float(v @ cov @ v))


def pca_factor(pulse: Pulse, pc: PrincipalComponent) -> float:
    """Magnitude of the pulse projection onto the first principal component."""
    if pc.w.shape != pulse.samples.shape:
        raise ValueError("component length must match pulse length")
    return float(abs(pulse.samples @ pc.w))


def pga_factor(pulse: Pulse, delta_t: int) -> float:
    """Amplitude gradient between the peak and a fixed later sample."""
    if delta_t <= 0:
        raise ValueError("delta_t must be > 0")
    v = pulse.samples
    tp = peak_index(v)
    if tp + delta_t >= v.size:
        raise ValueError(f"peak + delta_t = {tp + delta_t} out of bounds")
    return float((v[tp + delta_t] - v[tp]) / delta_t)


def pr_factor(pulse: Pulse, reference) -> float:
    """Angle (radians) between the pulse vector and a reference vector."""
    ref = reference.samples if isinstance(reference, Pulse) else np.asarray(reference, dtype=np.float64)
    v = pulse.samples
    if ref.shape != v.shape:
        raise ValueError("reference length must match pulse length")
    nv, nr = np.linalg.norm(v), np.linalg.norm(ref)
    if nv == 0 or nr == 0:
        raise ValueError("zero-norm vector in angle computation")
    cosine = np.clip((v @ ref) / (nv * nr), -1.0, 1.0)
    return float(np.arccos(cosine))


def bipolar_matrix(samples: np.ndarray, a: float = 0.95, stages: int = 3) -> np.ndarray:
    """Batch bipolar shaping over an (n, length) matrix.

    Cascade of ``stages`` identical one-pole high-pass recursive sections
    y[t] = a * (y[t-1] + x[t] - x[t-1]) with zero initial conditions.
    """
    if not 0 < a < 1:
        raise ValueError("coefficient a must lie in (0, 1)")
    if stages < 1:
        raise ValueError("stages must be >= 1")
    x = np.asarray(samples, dtype=np.float64)
    for _ in range(stages):
        dx = np.empty_like(x)
        dx[:, 0] = x[:, 0]
        dx[:, 1:] = np.diff(x, axis=1)
        y = np.empty_like(x)
        prev = np.zeros(x.shape[0])
        for t in range(x.shape[1]):
            prev = a * (prev + dx[:, t])
            y[:, t] = prev
        x = y
    return x


def bipolar_shape(pulse: Pulse, a: float = 0.95, stages: int = 3) -> Pulse:
    """Transform a unipolar pulse into a bipolar one (see bipolar_matrix)."""
    return pulse.with_samples(bipolar_matrix(pulse.samples[None, :], a, stages)[0])


def zc_factor(bipolar: Pulse, t_start: float = 0.0) -> float:
    """Zero-crossing time of a bipolar pulse, relative to ``t_start``.

    The crossing after the positive lobe is located by linear interpolation
    between the bracketing samples.
    """
    v = bipolar.samples
    tp = int(np.argmax(v))
    for i in range(tp, v.size - 1):
        if v[i] > 0 >= v[i + 1]:
            t_zero = i + v[i] / (v[i] - v[i + 1])
            return float(t_zero - t_start)
    raise ValueError("no sign change found after the first extremum")
