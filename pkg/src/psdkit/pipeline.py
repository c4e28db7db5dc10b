"""Benchmark orchestration: preprocessing, factor runs, per-method evaluation.

The benchmark mirrors the survey workflow: screen corrupted pulses, smooth
with a moving-average filter, optionally partition by calibrated energy,
peak-align and normalize, split, fit method artifacts on the training
split, then score the validation split with every requested method. Each
method's factors feed a histogram + two-Gaussian fit for FOM and, when
labels exist, a KNN-on-factor classifier, ROC/AUC, and the inter-method
correlation matrix. A failing method is recorded and never aborts its
siblings.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import methods as methods_mod
from .evaluation import (
    FOM_FAILURE_THRESHOLD,
    EvalReport,
    classification_metrics,
    fit_two_gaussians,
    fom,
    make_histogram,
    pearson_matrix,
    roc_auc,
)
from .learners import LearnerConfig, knn_classify_batch, knn_fit, train_hybrid
from .methods import FactorSeries, MethodError, MethodParams, build_context, factor_series
from .pulse import Dataset, SplitSpec, filter_matrix, reject_corrupted, split_dataset


@dataclass(frozen=True)
class PreprocessOptions:
    """Knobs for the shared preprocessing stage."""

    reject: bool = True
    flat_run: int = 3
    peak_fraction: float = 0.5
    filter_kind: str = "moving_average"  # moving_average | median | none
    filter_window: int = 5
    baseline_samples: int = 0  # 0 disables baseline subtraction
    align_target: int = 20  # negative disables peak alignment
    normalize: bool = True


@dataclass
class PreprocessStats:
    n_input: int = 0
    n_kept: int = 0
    n_flat_peak: int = 0
    n_multi_peak: int = 0
    n_non_finite: int = 0
    n_non_positive: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _align_rows(samples: np.ndarray, target: int) -> np.ndarray:
    out = np.zeros_like(samples)
    n, length = samples.shape
    first = np.argmax(samples, axis=1)
    last = length - 1 - np.argmax(samples[:, ::-1], axis=1)
    peaks = (first + last) // 2
    for i in range(n):
        shift = target - peaks[i]
        if shift >= 0:
            out[i, shift:] = samples[i, : length - shift]
        else:
            out[i, : length + shift] = samples[i, -shift:]
    return out


def preprocess_dataset(ds: Dataset, opts: PreprocessOptions) -> tuple:
    """Screen, filter, baseline-subtract, align, and normalize a dataset.

    Returns (clean dataset, stats). Pulses failing corruption screening or
    (when normalizing) lacking a positive maximum are dropped.
    """
    stats = PreprocessStats(n_input=len(ds))
    keep = np.ones(len(ds), dtype=bool)
    if opts.reject:
        for i, pulse in enumerate(ds):
            flags = reject_corrupted(pulse, opts.flat_run, opts.peak_fraction)
            if flags.rejected:
                keep[i] = False
                stats.n_flat_peak += flags.flat_peak
                stats.n_multi_peak += flags.multi_peak
                stats.n_non_finite += flags.non_finite
    clean = ds.subset(np.flatnonzero(keep))

    samples = clean.samples
    if opts.filter_kind != "none" and len(clean):
        samples = filter_matrix(samples, opts.filter_kind, opts.filter_window)
    if opts.baseline_samples > 0 and len(clean):
        offsets = samples[:, : opts.baseline_samples].mean(axis=1, keepdims=True)
        samples = samples - offsets
    if opts.normalize and len(clean):
        peaks = samples.max(axis=1)
        positive = peaks > 0
        if not positive.all():
            stats.n_non_positive = int((~positive).sum())
            clean = clean.subset(np.flatnonzero(positive))
            samples = samples[positive]
            peaks = peaks[positive]
    if opts.align_target >= 0 and len(clean):
        samples = _align_rows(samples, opts.align_target)
    if opts.normalize and len(clean):
        samples = samples / samples.max(axis=1, keepdims=True)
    stats.n_kept = len(clean)
    return clean.replace_samples(samples) if len(clean) else clean, stats


# ---------------------------------------------------------------------------
# factor computation


def compute_factor_series(ds: Dataset, method_ids, params: MethodParams, seed: int,
                          fit_ds: Dataset | None = None) -> tuple:
    """Factors per method, fitted on ``fit_ds`` (defaults to ``ds`` itself).

    Returns (dict method -> FactorSeries, dict method -> error message).
    A method failure is isolated; surviving methods still report.
    """
    ctx = build_context(fit_ds if fit_ds is not None else ds, params=params, seed=seed)
    series: dict = {}
    failures: dict = {}
    for method in sorted(method_ids):
        try:
            series[method] = factor_series(method, ds, ctx)
        except (MethodError, ValueError) as exc:
            failures[method] = str(exc)
    return series, failures


# ---------------------------------------------------------------------------
# benchmark


@dataclass
class ThresholdResult:
    """Benchmark outputs for one energy-threshold slice of the dataset."""

    threshold: float | None
    n_pulses: int = 0
    labeled: bool = False
    reports: dict = field(default_factory=dict)     # method -> EvalReport
    series: dict = field(default_factory=dict)      # method -> FactorSeries
    histograms: dict = field(default_factory=dict)  # method -> Histogram
    fits: dict = field(default_factory=dict)
    correlation_ids: list = field(default_factory=list)
    correlation: np.ndarray | None = None
    split_sizes: tuple = (0, 0, 0)

    def to_dict(self) -> dict:
        d = {
            "threshold": self.threshold,
            "n_pulses": self.n_pulses,
            "labeled": self.labeled,
            "split_sizes": {
                "validation": self.split_sizes[0],
                "training": self.split_sizes[1],
                "test": self.split_sizes[2],
            },
            "methods": {m: r.to_dict() for m, r in sorted(self.reports.items())},
        }
        if self.correlation is not None:
            d["correlation"] = {
                "methods": self.correlation_ids,
                "matrix": [[float(v) for v in row] for row in self.correlation],
            }
        return d


def _evaluate_method(series: FactorSeries, labels, knn_k: int,
                     train_values: np.ndarray, train_labels) -> EvalReport:
    """FOM plus (when labeled) KNN-on-factor metrics and ROC for one method."""
    values = series.values
    finite = np.isfinite(values)
    report = EvalReport(method=series.method, n_factors=int(finite.sum()),
                        n_failed_pulses=int((~finite).sum()))
    notes = []

    try:
        hist = make_histogram(values[finite])
        fit = fit_two_gaussians(hist)
        report.fit = fit
        value = fom(fit)
        report.fom = value
        report.fom_failed = value < FOM_FAILURE_THRESHOLD
        if report.fom_failed:
            notes.append(f"fom {value:.4f} below {FOM_FAILURE_THRESHOLD}")
    except ValueError as exc:  # includes UnconvergedFitError
        report.fom = None
        report.fom_failed = True
        notes.append(f"fom failed: {exc}")

    if labels is not None:
        train_finite = np.isfinite(train_values)
        eval_mask = finite
        if train_finite.sum() >= knn_k and eval_mask.any():
            model = knn_fit(train_values[train_finite].reshape(-1, 1),
                            np.asarray(train_labels, dtype=object)[train_finite],
                            knn_k)
            predicted = np.asarray(
                knn_classify_batch(model, values[eval_mask].reshape(-1, 1)),
                dtype=object,
            )
            truth = np.asarray(labels, dtype=object)[eval_mask]
            report.metrics = classification_metrics(truth, predicted)
            try:
                report.roc = roc_auc(values[eval_mask], truth)
            except ValueError as exc:
                notes.append(f"roc failed: {exc}")
        else:
            notes.append("insufficient finite factors for classification")
    report.notes = "; ".join(notes)
    return report


def _correlation_block(series: dict) -> tuple:
    """Correlation over rows where every usable method is finite."""
    usable = {}
    for method, s in sorted(series.items()):
        if np.isfinite(s.values).all() and np.ptp(s.values) > 0:
            usable[method] = s.values
    if len(usable) < 2:
        return [], None
    try:
        ids, mat = pearson_matrix(usable)
        return ids, mat
    except ValueError:
        return [], None


def run_benchmark_split(ds: Dataset, method_ids, params: MethodParams,
                        split: SplitSpec, seed: int, knn_k: int = 5,
                        hybrids=()) -> ThresholdResult:
    """Benchmark one (already preprocessed) dataset slice."""
    result = ThresholdResult(threshold=None, n_pulses=len(ds),
                             labeled=ds.labels is not None)
    eff_split = split
    if split.stratified and ds.labels is None:
        eff_split = SplitSpec(split.fractions, split.seed, stratified=False)
    validation, training, test = split_dataset(ds, eff_split)
    result.split_sizes = (len(validation), len(training), len(test))
    if len(training) == 0 or len(validation) == 0:
        raise ValueError("benchmark split left an empty training or validation set")

    series, failures = compute_factor_series(validation, method_ids, params, seed,
                                             fit_ds=training)
    train_series, _ = compute_factor_series(training, method_ids, params, seed,
                                            fit_ds=training)
    for method, message in failures.items():
        result.reports[method] = EvalReport(method=method, fom=None, fom_failed=True,
                                            notes=f"method failed: {message}")

    for student, teacher in hybrids:
        name = f"{student}:{teacher}"
        try:
            bundle, hybrid_series = train_hybrid(LearnerConfig(model=student), teacher,
                                                 ds, eff_split, method_params=params,
                                                 seed=seed)
            series[name] = hybrid_series
            train_series[name] = FactorSeries(
                method=name, values=bundle.predict_values(training.samples)
            )
        except (MethodError, ValueError) as exc:
            result.reports[name] = EvalReport(method=name, fom=None, fom_failed=True,
                                              notes=f"hybrid failed: {exc}")

    for method, s in series.items():
        train_values = train_series.get(method)
        train_vals = (train_values.values if train_values is not None
                      else np.full(len(training), np.nan))
        labels = validation.labels if result.labeled else None
        train_labels = training.labels if result.labeled else None
        report = _evaluate_method(s, labels, knn_k, train_vals, train_labels)
        try:
            result.histograms[method] = make_histogram(s.values)
        except ValueError:
            pass
        if report.fit is not None:
            result.fits[method] = report.fit
        result.series[method] = s
        result.reports[method] = report

    result.correlation_ids, result.correlation = _correlation_block(series)
    return result


@dataclass
class BenchmarkRun:
    """Full benchmark output: one ThresholdResult per energy slice."""

    seed: int
    results: list = field(default_factory=list)
    preprocess: PreprocessStats | None = None

    @property
    def all_failed(self) -> bool:
        reports = [rep for r in self.results for rep in r.reports.values()]
        return bool(reports) and all(
            rep.fom is None and rep.metrics is None for rep in reports
        )

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "seed": self.seed,
            "preprocess": self.preprocess.to_dict() if self.preprocess else None,
            "thresholds": [r.to_dict() for r in self.results],
        }


def run_benchmark(ds: Dataset, method_ids, params: MethodParams, split: SplitSpec,
                  seed: int, thresholds=None, calibration: float = 1.0,
                  preprocess: PreprocessOptions | None = None, knn_k: int = 5,
                  hybrids=()) -> BenchmarkRun:
    """Full benchmark: preprocessing, optional energy sweep, per-method reports.

    ``thresholds`` (calibrated energy values) produce one sub-report per
    threshold; otherwise a single unpartitioned report is produced.
    """
    opts = preprocess or PreprocessOptions()
    staged = PreprocessOptions(**{**opts.__dict__, "align_target": -1, "normalize": False})
    stage1, stats = preprocess_dataset(ds, staged)
    run = BenchmarkRun(seed=seed, preprocess=stats)

    energies = calibration * stage1.samples.sum(axis=1) if len(stage1) else np.empty(0)
    slices = [(None, stage1)] if not thresholds else [
        (thr, stage1.subset(np.flatnonzero(energies >= thr))) for thr in thresholds
    ]
    finish = PreprocessOptions(**{**opts.__dict__, "reject": False, "filter_kind": "none",
                                  "baseline_samples": 0})
    for threshold, subset in slices:
        finished, _ = preprocess_dataset(subset, finish)
        result = run_benchmark_split(finished, method_ids, params, split, seed,
                                     knn_k=knn_k, hybrids=hybrids)
        result.threshold = threshold
        result.n_pulses = len(finished)
        run.results.append(result)
    return run
