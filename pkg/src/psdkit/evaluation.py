"""Metric stack: factor histograms, two-Gaussian fits, FOM, F1, ROC, correlations."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

FWHM_PER_SIGMA = 2.0 * np.sqrt(2.0 * np.log(2.0))
FOM_FAILURE_THRESHOLD = 0.5


class UnconvergedFitError(ValueError):
    """Two-Gaussian fit did not converge; the method's FOM is Failed."""


def _series_values(factors) -> np.ndarray:
    values = getattr(factors, "values", factors)
    return np.asarray(values, dtype=np.float64)


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=np.float64)
        c = np.asarray(self.counts, dtype=np.int64)
        if e.size != c.size + 1:
            raise ValueError("need len(edges) == len(counts) + 1")
        if (np.diff(e) <= 0).any():
            raise ValueError("edges must be strictly increasing")
        if (c < 0).any():
            raise ValueError("counts must be non-negative")
        object.__setattr__(self, "edges", e)
        object.__setattr__(self, "counts", c)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def bin_width(self) -> float:
        return float(self.edges[1] - self.edges[0])

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def make_histogram(factors, bins="auto") -> Histogram:
    """Equal-width histogram over [min, max] of the finite factors.

    ``bins='auto'`` uses the Freedman-Diaconis width with the bin count
    clamped to [50, 500].
    """
    values = _series_values(factors)
    values = values[np.isfinite(values)]
    if values.size < 2:
        raise ValueError("need at least 2 finite factors")
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        raise ValueError("all factors identical: histogram range is zero")
    if bins == "auto":
        q75, q25 = np.percentile(values, [75, 25])
        width = 2.0 * (q75 - q25) * values.size ** (-1.0 / 3.0)
        n_bins = 50 if width <= 0 else int(np.ceil((hi - lo) / width))
        n_bins = int(np.clip(n_bins, 50, 500))
    else:
        n_bins = int(bins)
        if n_bins < 1:
            raise ValueError("bins must be >= 1")
    counts, edges = np.histogram(values, bins=n_bins, range=(lo, hi))
    return Histogram(edges=edges, counts=counts)


@dataclass(frozen=True)
class GaussianPairFit:
    """Two-Gaussian parameters in canonical order mu1 <= mu2."""

    mu1: float
    sigma1: float
    amp1: float
    mu2: float
    sigma2: float
    amp2: float
    converged: bool
    residual: float

    def __post_init__(self):
        if self.sigma1 <= 0 or self.sigma2 <= 0:
            raise ValueError("sigmas must be > 0")
        if self.mu1 > self.mu2:
            raise ValueError("means must be in canonical order mu1 <= mu2")


def _two_gauss(params: np.ndarray, x: np.ndarray) -> np.ndarray:
    a1, m1, s1, a2, m2, s2 = params
    g1 = a1 * np.exp(-((x - m1) ** 2) / (2.0 * s1 ** 2))
    g2 = a2 * np.exp(-((x - m2) ** 2) / (2.0 * s2 ** 2))
    return g1 + g2


def _two_gauss_jacobian(params: np.ndarray, x: np.ndarray) -> np.ndarray:
    a1, m1, s1, a2, m2, s2 = params
    jac = np.empty((x.size, 6))
    for col, (a, m, s) in ((0, (a1, m1, s1)), (3, (a2, m2, s2))):
        d = x - m
        e = np.exp(-(d ** 2) / (2.0 * s ** 2))
        jac[:, col] = e
        jac[:, col + 1] = a * e * d / s ** 2
        jac[:, col + 2] = a * e * d ** 2 / s ** 3
    return jac


def _detect_peaks(counts: np.ndarray) -> list:
    """Indices of local maxima of the 3-bin smoothed counts."""
    if counts.size < 3:
        return [int(np.argmax(counts))]
    smooth = counts.astype(np.float64).copy()
    smooth[1:-1] = (counts[:-2] + counts[1:-1] + counts[2:]) / 3.0
    peaks = [
        i for i in range(1, smooth.size - 1)
        if smooth[i] >= smooth[i - 1] and smooth[i] > smooth[i + 1] and counts[i] > 0
    ]
    return peaks or [int(np.argmax(counts))]


def _initial_guess(hist: Histogram) -> np.ndarray:
    centers = hist.centers
    counts = hist.counts.astype(np.float64)
    span = float(centers[-1] - centers[0]) if centers.size > 1 else hist.bin_width
    peaks = _detect_peaks(hist.counts)
    primary = max(peaks, key=lambda i: (counts[i], -i))
    best_pair = None
    best_score = -1.0
    for i in peaks:
        for j in peaks:
            if j <= i:
                continue
            score = min(counts[i], counts[j]) * abs(centers[j] - centers[i])
            if score > best_score:
                best_score = score
                best_pair = (i, j)
    sigma0 = max(hist.bin_width, span / 12.0)
    if best_pair is None:
        m1 = centers[primary]
        m2 = m1 + span / 4.0
        if m2 > centers[-1]:
            m2 = m1 - span / 4.0
        a1, a2 = counts[primary], counts[primary] / 2.0
        m1, m2 = min(m1, m2), max(m1, m2)
    else:
        i, j = best_pair
        m1, m2 = centers[i], centers[j]
        a1, a2 = counts[i], counts[j]
    return np.array([a1, m1, sigma0, a2, m2, sigma0])


def fit_two_gaussians(hist: Histogram, max_iter: int = 200) -> GaussianPairFit:
    """Damped (Levenberg-Marquardt style) least squares of a two-Gaussian
    sum against the histogram bin centers.

    Initialization picks the best-separated pair of local maxima. The fit
    reports converged=False instead of raising when the surface is
    single-peaked: stalled improvement above 1e-6 relative or parameters
    pinned at their bounds.
    """
    if int(np.count_nonzero(hist.counts)) < 6:
        raise ValueError("need a histogram with at least 6 non-empty bins")
    x = hist.centers
    y = hist.counts.astype(np.float64)
    span = float(x[-1] - x[0])
    lower = np.array([0.0, x[0], hist.bin_width / 2.0, 0.0, x[0], hist.bin_width / 2.0])
    upper = np.array([10.0 * y.max(), x[-1], span, 10.0 * y.max(), x[-1], span])

    params = np.clip(_initial_guess(hist), lower, upper)
    resid = y - _two_gauss(params, x)
    cost = float(resid @ resid)
    lam = 1e-3
    converged = False
    for _ in range(max_iter):
        jac = _two_gauss_jacobian(params, x)
        jtj = jac.T @ jac
        damp = np.diag(np.maximum(np.diag(jtj), 1e-12))
        try:
            step = np.linalg.solve(jtj + lam * damp, jac.T @ resid)
        except np.linalg.LinAlgError:
            break
        candidate = np.clip(params + step, lower, upper)
        cand_resid = y - _two_gauss(candidate, x)
        cand_cost = float(cand_resid @ cand_resid)
        if cand_cost < cost:
            improvement = (cost - cand_cost) / max(cost, 1e-300)
            params, resid, cost = candidate, cand_resid, cand_cost
            lam = max(lam / 10.0, 1e-12)
            if improvement < 1e-6:
                converged = True
                break
        else:
            lam *= 10.0
            if lam > 1e12:
                break

    at_bound = ((params <= lower + 1e-12) | (params >= upper - 1e-12))
    # amplitude lower bounds are legitimate resting points only when unused;
    # any pinned mean/sigma or saturated amplitude marks a distrusted fit
    if at_bound[[1, 2, 4, 5]].any() or params[0] >= upper[0] - 1e-12 or params[3] >= upper[3] - 1e-12:
        converged = False
    a1, m1, s1, a2, m2, s2 = params
    if m1 > m2:
        a1, m1, s1, a2, m2, s2 = a2, m2, s2, a1, m1, s1
    y_norm = float(np.linalg.norm(y))
    residual = float(np.sqrt(cost) / y_norm) if y_norm > 0 else 0.0
    return GaussianPairFit(mu1=float(m1), sigma1=float(s1), amp1=float(a1),
                           mu2=float(m2), sigma2=float(s2), amp2=float(a2),
                           converged=bool(converged), residual=residual)


def fom_from_params(mu1: float, mu2: float, sigma1: float, sigma2: float) -> float:
    """Peak separation over summed FWHMs, with FWHM = 2*sqrt(2 ln 2)*sigma."""
    if sigma1 <= 0 or sigma2 <= 0:
        raise ValueError("sigmas must be > 0")
    return abs(mu1 - mu2) / (FWHM_PER_SIGMA * (sigma1 + sigma2))


def fom(fit: GaussianPairFit) -> float:
    """Figure of merit of a converged fit; unconverged fits are Failed."""
    if not fit.converged:
        raise UnconvergedFitError("two-Gaussian fit did not converge")
    return fom_from_params(fit.mu1, fit.mu2, fit.sigma1, fit.sigma2)


# ---------------------------------------------------------------------------
# classification metrics


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class Metrics:
    """Support-weighted binary metrics plus the per-class breakdown."""

    accuracy: float
    precision: float
    recall: float
    f1: float
    per_class: dict = field(default_factory=dict)


def classification_metrics(y_true, y_pred) -> Metrics:
    """Support-weighted precision/recall/F1 over both classes.

    Zero-division cases contribute 0 for the affected class. The weighted
    recall is computed in count space, so it equals accuracy exactly.
    """
    t = np.asarray(y_true)
    p = np.asarray(y_pred)
    if t.shape != p.shape:
        raise ValueError("y_true and y_pred must have equal length")
    if t.size == 0:
        raise ValueError("empty input")
    n = t.size
    classes = sorted(set(t.tolist()) | set(p.tolist()))
    if len(classes) > 2:
        raise ValueError(f"binary labels expected, got {classes}")
    per_class = {}
    weighted_precision = 0.0
    weighted_f1 = 0.0
    correct = 0
    for c in classes:
        tp = int(np.sum((t == c) & (p == c)))
        predicted = int(np.sum(p == c))
        support = int(np.sum(t == c))
        precision = tp / predicted if predicted else 0.0
        recall = tp / support if support else 0.0
        f1 = (2.0 * precision * recall / (precision + recall)
              if precision + recall > 0 else 0.0)
        per_class[c] = ClassMetrics(precision=precision, recall=recall, f1=f1,
                                    support=support)
        weighted_precision += support * precision / n
        weighted_f1 += support * f1 / n
        correct += tp
    accuracy = correct / n
    return Metrics(accuracy=accuracy, precision=weighted_precision,
                   recall=accuracy, f1=weighted_f1, per_class=per_class)


# ---------------------------------------------------------------------------
# ROC / AUC


@dataclass(frozen=True)
class RocCurve:
    """ROC vertices (fpr, tpr), trapezoid AUC, and score polarity.

    ``polarity`` is -1 when the scores had to be negated so the reported
    AUC is >= 0.5 (methods may rank the positive class low or high).
    """

    points: np.ndarray
    auc: float
    polarity: int


def _roc_sweep(scores: np.ndarray, is_positive: np.ndarray) -> np.ndarray:
    n_pos = int(is_positive.sum())
    n_neg = is_positive.size - n_pos
    order = np.argsort(-scores, kind="stable")
    sorted_pos = is_positive[order]
    sorted_scores = scores[order]
    points = [(0.0, 0.0)]
    tp = fp = 0
    i = 0
    while i < scores.size:
        j = i
        while j < scores.size and sorted_scores[j] == sorted_scores[i]:
            j += 1
        group_pos = int(sorted_pos[i:j].sum())
        tp += group_pos
        fp += (j - i) - group_pos
        points.append((fp / n_neg, tp / n_pos))
        i = j
    return np.asarray(points)


def _trapezoid_auc(points: np.ndarray) -> float:
    x = points[:, 0]
    y = points[:, 1]
    return float(np.sum(np.diff(x) * (y[:-1] + y[1:]) / 2.0))


def roc_auc(scores, labels, positive: str = "neutron") -> RocCurve:
    """Threshold-sweep ROC with tied scores grouped into one vertex."""
    values = _series_values(scores)
    labels = np.asarray(labels)
    if values.shape != labels.shape:
        raise ValueError("scores and labels must align")
    is_positive = labels == positive
    if is_positive.all() or not is_positive.any():
        raise ValueError("both classes must be present")
    points = _roc_sweep(values, is_positive)
    auc = _trapezoid_auc(points)
    polarity = 1
    if auc < 0.5:
        polarity = -1
        points = _roc_sweep(-values, is_positive)
        auc = _trapezoid_auc(points)
    return RocCurve(points=points, auc=auc, polarity=polarity)


# ---------------------------------------------------------------------------
# correlations


def pearson_matrix(series: dict) -> tuple:
    """Pairwise Pearson correlations between factor series.

    Returns (sorted method ids, symmetric matrix with unit diagonal).
    """
    ids = sorted(series)
    if not ids:
        raise ValueError("no series given")
    columns = []
    length = None
    for method in ids:
        v = _series_values(series[method])
        if length is None:
            length = v.size
        if v.size != length or v.size < 2:
            raise ValueError("all series must share one length >= 2")
        if np.ptp(v) == 0:
            raise ValueError(f"series {method!r} is constant")
        columns.append(v)
    mat = np.eye(len(ids))
    for i in range(len(ids)):
        for j in range(i + 1, len(ids)):
            a = columns[i] - columns[i].mean()
            b = columns[j] - columns[j].mean()
            r = float((a @ b) / np.sqrt((a @ a) * (b @ b)))
            mat[i, j] = mat[j, i] = r
    return ids, mat


# ---------------------------------------------------------------------------
# per-method report


@dataclass
class EvalReport:
    """Per-method bundle of FOM, classification metrics, and ROC results."""

    method: str
    fom: float | None = None
    fom_failed: bool = True
    fit: GaussianPairFit | None = None
    metrics: Metrics | None = None
    roc: RocCurve | None = None
    n_factors: int = 0
    n_failed_pulses: int = 0
    notes: str = ""

    def to_dict(self) -> dict:
        d = {
            "method": self.method,
            "fom": self.fom,
            "fom_status": "failed" if self.fom_failed else "ok",
            "n_factors": self.n_factors,
            "n_failed_pulses": self.n_failed_pulses,
            "notes": self.notes,
        }
        if self.fit is not None:
            d["gaussian_fit"] = {
                "mu1": self.fit.mu1, "sigma1": self.fit.sigma1, "amp1": self.fit.amp1,
                "mu2": self.fit.mu2, "sigma2": self.fit.sigma2, "amp2": self.fit.amp2,
                "converged": self.fit.converged, "residual": self.fit.residual,
            }
        if self.metrics is not None:
            d["accuracy"] = self.metrics.accuracy
            d["precision"] = self.metrics.precision
            d["recall"] = self.metrics.recall
            d["f1"] = self.metrics.f1
        if self.roc is not None:
            d["auc"] = self.roc.auc
            d["roc_polarity"] = self.roc.polarity
        return d
