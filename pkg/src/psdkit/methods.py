"""Registry of the 21 statistical discriminators behind stable string ids.

A :class:`MethodContext` carries the per-run knobs plus lazily built fitted
artifacts (class references, PMFs, principal component, scalogram mask).
Artifacts are fitted on the training split; on unlabeled data the two
reference classes are bootstrapped by a median split of the training
charge-comparison factors (larger tail fraction taken as neutron-like).

``factor_series`` returns one factor per pulse in dataset order, with NaN
marking pulses an otherwise healthy method could not score (e.g. a gate not
fitting); method-level failures raise :class:`MethodError`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import freqdomain, spiking, timedomain
from .config import derive_seed
from .pulse import Dataset, peak_index

TIME_DOMAIN_METHODS = ("cc", "ci", "feps", "gp", "llr", "lmt", "pca", "pga", "pr", "zc")
FREQ_DOMAIN_METHODS = ("dft", "fga", "fs", "sd", "sdcc", "wt1", "wt2")
SNN_METHODS = ("lg", "pcnn", "rcnn", "scm")
STATISTICAL_METHODS = TIME_DOMAIN_METHODS + FREQ_DOMAIN_METHODS + SNN_METHODS


class MethodError(RuntimeError):
    """A discriminator failed as a whole (fitting or every pulse)."""

    def __init__(self, method: str, message: str):
        super().__init__(f"{method}: {message}")
        self.method = method


@dataclass(frozen=True)
class FactorSeries:
    """Per-pulse factors from one named method, aligned to dataset order."""

    method: str
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class MethodParams:
    """Tunable constants for the statistical methods (config-exposed)."""

    gates: timedomain.GateConfig = field(default_factory=timedomain.GateConfig)
    pga_delta: int = 20
    zc_coefficient: float = 0.95
    zc_start_fraction: float = 0.1
    llr_epsilon: float = 1e-6
    fs_a: float = 1.0
    fs_b: float = 1.0
    fga_variant: str = "literal"
    wt1_scale_a: float = 28.0
    wt1_scale_b: float = 40.0
    wt2_scale: float = 8.0
    cwt_scale_min: float = 1.0
    cwt_scale_max: float = 64.0
    cwt_n_scales: int = 50
    sd_threshold: float = 0.5
    sd_max_refs: int = 200
    snn: spiking.SnnConfig = field(default_factory=spiking.SnnConfig)
    qcscm_step: float = 0.25
    lg_m: int = 1

    def cwt_scales(self) -> np.ndarray:
        return np.geomspace(self.cwt_scale_min, self.cwt_scale_max, self.cwt_n_scales)

    def snn_config(self, model: str, seed: int = 0) -> spiking.SnnConfig:
        step = self.qcscm_step if model == "qcscm" else 1.0
        return replace(self.snn, step=step, rng_seed=derive_seed(seed, model))

    @classmethod
    def from_config(cls, sections: dict) -> "MethodParams":
        from .config import as_float, as_int, as_str

        gates = timedomain.GateConfig(
            t_pre=as_int(sections, "gates", "t_pre", 10),
            t_short=as_int(sections, "gates", "t_short", 20),
            t_long=as_int(sections, "gates", "t_long", 160),
            t_delay=as_int(sections, "gates", "t_delay", 140),
            t_total=as_int(sections, "gates", "t_total", 160),
        )
        snn = spiking.SnnConfig(
            iterations=as_int(sections, "snn", "iterations", 40),
            feed_decay=as_float(sections, "snn", "feed_decay", 0.7),
            link_decay=as_float(sections, "snn", "link_decay", 0.6),
            theta_decay=as_float(sections, "snn", "theta_decay", 0.8),
            beta=as_float(sections, "snn", "beta", 0.2),
            v_feed=as_float(sections, "snn", "v_feed", 0.1),
            v_link=as_float(sections, "snn", "v_link", 0.1),
            v_theta=as_float(sections, "snn", "v_theta", 20.0),
        )
        return cls(
            gates=gates,
            pga_delta=as_int(sections, "methods", "pga_delta", 20),
            zc_coefficient=as_float(sections, "methods", "zc_coefficient", 0.95),
            zc_start_fraction=as_float(sections, "methods", "zc_start_fraction", 0.1),
            llr_epsilon=as_float(sections, "methods", "llr_epsilon", 1e-6),
            fs_a=as_float(sections, "methods", "fs_a", 1.0),
            fs_b=as_float(sections, "methods", "fs_b", 1.0),
            fga_variant=as_str(sections, "methods", "fga_variant", "literal"),
            wt1_scale_a=as_float(sections, "methods", "wt1_scale_a", 28.0),
            wt1_scale_b=as_float(sections, "methods", "wt1_scale_b", 40.0),
            wt2_scale=as_float(sections, "methods", "wt2_scale", 8.0),
            cwt_scale_min=as_float(sections, "methods", "cwt_scale_min", 1.0),
            cwt_scale_max=as_float(sections, "methods", "cwt_scale_max", 64.0),
            cwt_n_scales=as_int(sections, "methods", "cwt_n_scales", 50),
            sd_threshold=as_float(sections, "methods", "sd_threshold", 0.5),
            sd_max_refs=as_int(sections, "methods", "sd_max_refs", 200),
            snn=snn,
            qcscm_step=as_float(sections, "snn", "qcscm_step", 0.25),
            lg_m=as_int(sections, "snn", "lg_m", 1),
        )


class MethodContext:
    """Per-run method parameters plus lazily fitted artifacts."""

    def __init__(self, train: Dataset, params: MethodParams, seed: int = 0):
        if len(train) == 0:
            raise ValueError("method context needs a non-empty training split")
        self.train = train
        self.params = params
        self.seed = seed
        self._cache: dict = {}

    def _cached(self, key, builder):
        if key not in self._cache:
            self._cache[key] = builder()
        return self._cache[key]

    def class_split(self) -> tuple:
        """(neutron-like, gamma-like) training subsets.

        Uses labels when available; otherwise pseudo-labels by the median of
        the training charge-comparison factors (neutron tails are heavier).
        """

        def build():
            if self.train.labels is not None:
                return (self.train.subset(self.train.label_indices("neutron")),
                        self.train.subset(self.train.label_indices("gamma")))
            cc = _per_pulse(self.train, lambda p: timedomain.cc_factor(p, self.params.gates))
            usable = np.isfinite(cc)
            if usable.sum() < 2:
                raise MethodError("context", "cannot bootstrap class references: "
                                             "charge comparison failed on the training split")
            median = np.median(cc[usable])
            idx = np.arange(len(self.train))
            n_idx = idx[usable & (cc >= median)]
            g_idx = idx[usable & (cc < median)]
            if n_idx.size == 0 or g_idx.size == 0:
                raise MethodError("context", "degenerate pseudo-label split")
            return self.train.subset(n_idx), self.train.subset(g_idx)

        return self._cached("class_split", build)

    def reference_pair(self) -> timedomain.ReferencePair:
        return self._cached(
            "refs", lambda: timedomain.build_reference_pair(*self.class_split())
        )

    def gatti(self) -> np.ndarray:
        return self._cached(
            "gatti", lambda: timedomain.gatti_weights(self.reference_pair())
        )

    def pmfs(self) -> timedomain.PmfPair:
        def build():
            ds_n, ds_g = self.class_split()
            labels = ["neutron"] * len(ds_n) + ["gamma"] * len(ds_g)
            merged = Dataset(np.concatenate([ds_n.samples, ds_g.samples]),
                             dt=self.train.dt, labels=labels)
            return timedomain.build_pmf(merged, epsilon=self.params.llr_epsilon)

        return self._cached("pmfs", build)

    def principal_component(self) -> timedomain.PrincipalComponent:
        return self._cached("pc", lambda: timedomain.pca_fit(self.train))

    def pr_reference(self) -> np.ndarray:
        def build():
            peaks = self.train.samples.max(axis=1)
            if (peaks <= 0).any():
                raise MethodError("pr", "training pulses must have positive maxima")
            mean = (self.train.samples / peaks[:, None]).mean(axis=0)
            return mean / mean.max()

        return self._cached("pr_ref", build)

    def sd_mask(self) -> freqdomain.ScalogramMask:
        def build():
            ds_n, ds_g = self.class_split()
            cap = self.params.sd_max_refs
            return freqdomain.build_scalogram_mask(
                ds_n.subset(np.arange(min(len(ds_n), cap))),
                ds_g.subset(np.arange(min(len(ds_g), cap))),
                threshold=self.params.sd_threshold,
                scales=self.params.cwt_scales(),
            )

        return self._cached("sd_mask", build)


def build_context(train: Dataset, params: MethodParams | None = None, seed: int = 0) -> MethodContext:
    return MethodContext(train, params or MethodParams(), seed)


def _per_pulse(ds: Dataset, fn) -> np.ndarray:
    out = np.full(len(ds), np.nan)
    for i, pulse in enumerate(ds):
        try:
            out[i] = fn(pulse)
        except ValueError:
            pass
    return out


def _peak_indices(samples: np.ndarray) -> np.ndarray:
    first = np.argmax(samples, axis=1)
    last = samples.shape[1] - 1 - np.argmax(samples[:, ::-1], axis=1)
    return (first + last) // 2


def _zc_series(ds: Dataset, params: MethodParams) -> np.ndarray:
    bipolar = timedomain.bipolar_matrix(ds.samples, a=params.zc_coefficient)
    peaks = _peak_indices(ds.samples)
    out = np.full(len(ds), np.nan)
    for i in range(len(ds)):
        t_start = params.zc_start_fraction * peaks[i]
        try:
            out[i] = timedomain.zc_factor(ds[i].with_samples(bipolar[i]), t_start)
        except ValueError:
            pass
    return out


def _snn_series(ds: Dataset, model: str, ctx: MethodContext) -> np.ndarray:
    cfg = ctx.params.snn_config(model, ctx.seed)
    counts = spiking.run_snn_batch(ds.samples, model, cfg)
    return counts.sum(axis=1).astype(np.float64)


def _lg_series(ds: Dataset, ctx: MethodContext) -> np.ndarray:
    cfg = ctx.params.snn_config("qcscm", ctx.seed)
    counts = spiking.run_snn_batch(ds.samples, "qcscm", cfg)
    peaks = _peak_indices(ds.samples)
    out = np.full(len(ds), np.nan)
    for i in range(len(ds)):
        try:
            out[i] = spiking.lg_factor(spiking.IgnitionMap(counts=counts[i]),
                                       int(peaks[i]), ctx.params.lg_m)
        except ValueError:
            pass
    return out


def factor_series(method: str, ds: Dataset, ctx: MethodContext) -> FactorSeries:
    """Factors for every pulse of ``ds`` under one method id."""
    p = ctx.params
    if method == "cc":
        values = _per_pulse(ds, lambda x: timedomain.cc_factor(x, p.gates))
    elif method == "ci":
        values = _per_pulse(ds, lambda x: timedomain.ci_factor(x, p.gates))
    elif method == "feps":
        values = _per_pulse(ds, timedomain.feps_factor)
    elif method == "gp":
        weights = ctx.gatti()
        values = _per_pulse(ds, lambda x: timedomain.gatti_factor(x, weights))
    elif method == "llr":
        pmfs = ctx.pmfs()
        values = _per_pulse(ds, lambda x: timedomain.llr_factor(x, pmfs))
    elif method == "lmt":
        values = _per_pulse(ds, timedomain.lmt_factor)
    elif method == "pca":
        pc = ctx.principal_component()
        values = _per_pulse(ds, lambda x: timedomain.pca_factor(x, pc))
    elif method == "pga":
        values = _per_pulse(ds, lambda x: timedomain.pga_factor(x, p.pga_delta))
    elif method == "pr":
        ref = ctx.pr_reference()
        values = _per_pulse(ds, lambda x: timedomain.pr_factor(x, ref))
    elif method == "zc":
        values = _zc_series(ds, p)
    elif method == "dft":
        values = _per_pulse(ds, freqdomain.dft_factor)
    elif method == "fga":
        values = _per_pulse(ds, lambda x: freqdomain.fga_factor(x, p.fga_variant))
    elif method == "fs":
        values = _per_pulse(
            ds, lambda x: freqdomain.fs_factor(freqdomain.periodogram(x), p.fs_a, p.fs_b)
        )
    elif method == "sd":
        mask = ctx.sd_mask()
        values = freqdomain.sd_factor_batch(ds.samples, mask)
    elif method == "sdcc":
        values = _per_pulse(ds, freqdomain.sdcc_factor)
    elif method == "wt1":
        values = _per_pulse(
            ds, lambda x: freqdomain.wt1_factor(x, p.wt1_scale_a, p.wt1_scale_b)
        )
    elif method == "wt2":
        values = _per_pulse(ds, lambda x: freqdomain.wt2_factor(x, p.wt2_scale))
    elif method == "lg":
        values = _lg_series(ds, ctx)
    elif method in ("pcnn", "scm", "rcnn"):
        values = _snn_series(ds, method, ctx)
    else:
        raise MethodError(method, "unknown method id")
    if len(ds) > 0 and not np.isfinite(values).any():
        raise MethodError(method, "no pulse produced a finite factor")
    return FactorSeries(method=method, values=values)
