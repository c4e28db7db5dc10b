"""Prior-knowledge learners: KNN, linear/logistic regression, MLPs, hybrids.

All training is single-threaded and deterministic given the seeds carried in
the configs; fitted models are immutable in use and safe to share. The
hybrid (teacher-student) workflow trains a regressor to predict factors
produced by one of the statistical methods, then evaluates the predicted
factors downstream like any other factor series.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .features import FeatureSpec, Standardizer, extract_features_matrix, fit_features
from .pulse import Dataset, SplitSpec, split_dataset

MLP_PRESETS = {
    "mlp1": (),             # no hidden layers: a linear map into the link
    "mlp2": (10, 10),       # two hidden layers with dropout
    "mlp3": (64,) * 7,      # deep feedforward stack
}
MLP_PRESET_DROPOUT = {"mlp1": 0.0, "mlp2": 0.2, "mlp3": 0.0}
MLP_PRESET_FEATURES = {"mlp1": "raw", "mlp2": "charge_cumsum", "mlp3": "raw"}


class TrainingDiverged(ValueError):
    """Raised when a training loss becomes non-finite."""

    def __init__(self, epoch: int):
        super().__init__(f"training diverged: non-finite loss at epoch {epoch}")
        self.epoch = epoch


# ---------------------------------------------------------------------------
# k-nearest neighbours


@dataclass(frozen=True)
class KnnModel:
    features: np.ndarray
    targets: np.ndarray
    k: int

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.features, dtype=np.float64))
        t = np.asarray(self.targets)
        if x.shape[0] != t.shape[0] or x.shape[0] == 0:
            raise ValueError("features and targets must align and be non-empty")
        if not 1 <= self.k <= x.shape[0]:
            raise ValueError(f"k must lie in [1, {x.shape[0]}], got {self.k}")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "targets", t)


def knn_fit(features, targets, k: int) -> KnnModel:
    return KnnModel(features=features, targets=targets, k=k)


def _k_nearest(model: KnnModel, query: np.ndarray) -> np.ndarray:
    q = np.asarray(query, dtype=np.float64).reshape(-1)
    d2 = ((model.features - q) ** 2).sum(axis=1)
    # stable order: distance first, then training index
    order = np.lexsort((np.arange(d2.size), d2))
    return order[: model.k]


def knn_classify(model: KnnModel, query) -> object:
    """Majority label of the k nearest; vote ties go to the nearest tied label."""
    nearest = model.targets[_k_nearest(model, query)]
    counts = {}
    for label in nearest:
        counts[label] = counts.get(label, 0) + 1
    best = max(counts.values())
    tied = {label for label, c in counts.items() if c == best}
    for label in nearest:
        if label in tied:
            return label
    raise AssertionError("unreachable")


def knn_regress(model: KnnModel, query) -> float:
    """Mean target of the k nearest neighbours."""
    nearest = _k_nearest(model, query)
    return float(np.asarray(model.targets, dtype=np.float64)[nearest].mean())


def knn_classify_batch(model: KnnModel, queries: np.ndarray) -> list:
    return [knn_classify(model, q) for q in np.atleast_2d(queries)]


def knn_regress_batch(model: KnnModel, queries: np.ndarray) -> np.ndarray:
    return np.array([knn_regress(model, q) for q in np.atleast_2d(queries)])


# ---------------------------------------------------------------------------
# linear and logistic regression


@dataclass(frozen=True)
class LinearModel:
    coef: np.ndarray
    intercept: float
    link: str = "identity"

    def __post_init__(self):
        c = np.asarray(self.coef, dtype=np.float64)
        if not np.isfinite(c).all() or not np.isfinite(self.intercept):
            raise ValueError("model parameters must be finite")
        if self.link not in ("identity", "logistic"):
            raise ValueError(f"unknown link {self.link!r}")
        object.__setattr__(self, "coef", c)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def fit_linear(features, targets, ridge: float = 1e-8) -> LinearModel:
    """Least squares through the normal equations with a tiny ridge term."""
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    y = np.asarray(targets, dtype=np.float64).reshape(-1)
    n, d = x.shape
    if n < d + 1:
        raise ValueError(f"need at least {d + 1} samples for {d} features, got {n}")
    design = np.hstack([x, np.ones((n, 1))])
    if np.linalg.matrix_rank(design) < d + 1:
        raise ValueError("singular design matrix (constant or collinear features)")
    gram = design.T @ design + ridge * np.eye(d + 1)
    beta = np.linalg.solve(gram, design.T @ y)
    return LinearModel(coef=beta[:d], intercept=float(beta[d]), link="identity")


def fit_logistic(features, targets01, epochs: int = 500, lr: float = 0.1) -> LinearModel:
    """Full-batch gradient descent on the log-loss from zero initialization."""
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    y = np.asarray(targets01, dtype=np.float64).reshape(-1)
    if set(np.unique(y)) - {0.0, 1.0}:
        raise ValueError("logistic targets must be 0/1")
    n, d = x.shape
    design = np.hstack([x, np.ones((n, 1))])
    beta = np.zeros(d + 1)
    for _ in range(epochs):
        p = _sigmoid(design @ beta)
        beta -= lr * (design.T @ (p - y)) / n
    return LinearModel(coef=beta[:d], intercept=float(beta[d]), link="logistic")


def predict_linear(model: LinearModel, features) -> np.ndarray:
    """Predicted value (identity link) or probability (logistic link)."""
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    z = x @ model.coef + model.intercept
    return _sigmoid(z) if model.link == "logistic" else z


def predict_label(model: LinearModel, features) -> np.ndarray:
    """Binary prediction: probability >= 0.5 maps to class 1."""
    return (predict_linear(model, features) >= 0.5).astype(int)


# ---------------------------------------------------------------------------
# multi-layer perceptron


class MlpModel:
    """Feedforward rectifier network with sigmoid or linear output.

    ``widths`` covers every layer including input and the single output
    neuron. Dropout (inverted, training-only) applies to hidden activations
    when ``dropout`` > 0.
    """

    def __init__(self, widths, weights, biases, output: str, dropout: float, seed: int):
        if output not in ("sigmoid", "linear"):
            raise ValueError(f"output must be sigmoid or linear, got {output!r}")
        if not 0 <= dropout < 1:
            raise ValueError("dropout must lie in [0, 1)")
        self.widths = [int(w) for w in widths]
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        self.output = output
        self.dropout = float(dropout)
        self.seed = int(seed)
        self.loss_history: list = []
        for w, b in zip(self.weights, self.biases):
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ValueError("model parameters must be finite")


def mlp_init(widths, seed: int = 0, output: str = "sigmoid", dropout: float = 0.0) -> MlpModel:
    """He-initialized network; deterministic for a fixed seed."""
    widths = [int(w) for w in widths]
    if len(widths) < 2 or widths[-1] != 1:
        raise ValueError("widths must include the input layer and a single output")
    if any(w < 1 for w in widths):
        raise ValueError("layer widths must be >= 1")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        weights.append(rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in))
        biases.append(np.zeros(fan_out))
    return MlpModel(widths, weights, biases, output, dropout, seed)


def _forward(model: MlpModel, x: np.ndarray, masks=None):
    activations = [x]
    z_values = []
    a = x
    n_layers = len(model.weights)
    for layer, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w + b
        z_values.append(z)
        if layer < n_layers - 1:
            a = np.maximum(z, 0.0)
            if masks is not None:
                a = a * masks[layer]
        else:
            a = _sigmoid(z) if model.output == "sigmoid" else z
        activations.append(a)
    return activations, z_values


def mlp_loss(model: MlpModel, x: np.ndarray, y: np.ndarray, task: str) -> float:
    """Mean log-loss (classify) or mean squared error (regress)."""
    p = mlp_predict(model, x)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if task == "classify":
        p = np.clip(p, 1e-12, 1.0 - 1e-12)
        return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))
    if task == "regress":
        return float(np.mean((p - y) ** 2))
    raise ValueError(f"unknown task {task!r}")


def mlp_gradients(model: MlpModel, x: np.ndarray, y: np.ndarray, task: str, masks=None):
    """Loss plus analytic parameter gradients for one batch."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    n = x.shape[0]
    activations, z_values = _forward(model, x, masks)
    p = activations[-1].reshape(-1)
    if task == "classify":
        pc = np.clip(p, 1e-12, 1.0 - 1e-12)
        loss = float(-np.mean(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc)))
        dz = ((p - y) / n).reshape(-1, 1)  # sigmoid + log-loss shortcut
    elif task == "regress":
        loss = float(np.mean((p - y) ** 2))
        dz = (2.0 * (p - y) / n).reshape(-1, 1)
    else:
        raise ValueError(f"unknown task {task!r}")

    grads_w = [None] * len(model.weights)
    grads_b = [None] * len(model.biases)
    for layer in range(len(model.weights) - 1, -1, -1):
        a_prev = activations[layer]
        grads_w[layer] = a_prev.T @ dz
        grads_b[layer] = dz.sum(axis=0)
        if layer > 0:
            da = dz @ model.weights[layer].T
            if masks is not None:
                da = da * masks[layer - 1]
            dz = da * (z_values[layer - 1] > 0)
    return loss, grads_w, grads_b


def mlp_train(model: MlpModel, x, y, task: str, epochs: int = 200, lr: float = 1e-3,
              batch_size: int = 32) -> MlpModel:
    """Mini-batch gradient descent; deterministic given the model seed.

    Appends the post-epoch full-dataset loss to ``model.loss_history`` and
    raises :class:`TrainingDiverged` (with the epoch index) if it goes
    non-finite.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.shape[1] != model.widths[0]:
        raise ValueError(f"feature dimension {x.shape[1]} != input width {model.widths[0]}")
    if x.shape[0] != y.shape[0]:
        raise ValueError("x and y must align")
    rng = np.random.default_rng(model.seed + 1)  # distinct from the init stream
    n = x.shape[0]
    for epoch in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start: start + batch_size]
            masks = None
            if model.dropout > 0:
                keep = 1.0 - model.dropout
                masks = [
                    (rng.random((idx.size, w)) < keep) / keep
                    for w in model.widths[1:-1]
                ]
            _, grads_w, grads_b = mlp_gradients(model, x[idx], y[idx], task, masks)
            for layer in range(len(model.weights)):
                model.weights[layer] = model.weights[layer] - lr * grads_w[layer]
                model.biases[layer] = model.biases[layer] - lr * grads_b[layer]
        loss = mlp_loss(model, x, y, task)
        model.loss_history.append(loss)
        if not np.isfinite(loss):
            raise TrainingDiverged(epoch)
    return model


def mlp_predict(model: MlpModel, x) -> np.ndarray:
    """Network output (probability or value); dropout disabled."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    activations, _ = _forward(model, x)
    return activations[-1].reshape(-1)


# ---------------------------------------------------------------------------
# trained pipelines (features + standardization + inner model)


@dataclass
class LearnerConfig:
    """One learner choice plus its training constants."""

    model: str = "mlp1"  # mlp1 | mlp2 | mlp3 | linear | logistic | knn
    features: FeatureSpec | None = None
    epochs: int = 200
    lr: float = 1e-3
    batch_size: int = 32
    k: int = 5
    seed: int = 0

    def resolved_features(self) -> FeatureSpec:
        if self.features is not None:
            return self.features
        kind = MLP_PRESET_FEATURES.get(self.model, "raw")
        return FeatureSpec(kind=kind)


@dataclass
class ModelBundle:
    """A fitted pipeline: feature extraction, standardization, inner model."""

    task: str
    kind: str
    feature_spec: FeatureSpec
    standardizer: Standardizer
    inner: object
    meta: dict = field(default_factory=dict)

    def _features(self, samples: np.ndarray) -> np.ndarray:
        raw = extract_features_matrix(self.feature_spec, samples)
        return self.standardizer.transform(raw)

    def predict_values(self, samples: np.ndarray) -> np.ndarray:
        feats = self._features(samples)
        if self.kind == "knn":
            return knn_regress_batch(self.inner, feats)
        if self.kind in ("linear", "logistic"):
            return predict_linear(self.inner, feats)
        return mlp_predict(self.inner, feats)

    def predict_classes(self, samples: np.ndarray) -> np.ndarray:
        if self.task != "classify":
            raise ValueError("bundle was trained for regression")
        feats = self._features(samples)
        if self.kind == "knn":
            return np.asarray(knn_classify_batch(self.inner, feats), dtype=object)
        values = (predict_linear(self.inner, feats) if self.kind in ("linear", "logistic")
                  else mlp_predict(self.inner, feats))
        labels = np.where(values >= 0.5, "neutron", "gamma")
        return labels.astype(object)


def fit_learner(config: LearnerConfig, samples: np.ndarray, targets, task: str) -> ModelBundle:
    """Fit the configured learner on raw sample rows and targets.

    ``targets`` are class labels for classification (neutron/gamma) or reals
    for regression. Features are standardized with constants fitted here.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    train_ds = Dataset(samples)
    spec = fit_features(config.resolved_features(), train_ds)
    raw = extract_features_matrix(spec, samples)
    standardizer = Standardizer.fit(raw)
    feats = standardizer.transform(raw)

    targets = np.asarray(targets)
    if task == "classify":
        numeric = np.asarray([1.0 if t == "neutron" else 0.0 for t in targets])
    elif task == "regress":
        numeric = targets.astype(np.float64)
        if not np.isfinite(numeric).all():
            raise ValueError("regression targets must be finite")
    else:
        raise ValueError(f"unknown task {task!r}")

    kind = config.model
    if kind == "knn":
        inner = knn_fit(feats, targets if task == "classify" else numeric, config.k)
    elif kind == "linear":
        if task == "classify":
            raise ValueError("linear link is regression-only; use logistic")
        inner = fit_linear(feats, numeric)
    elif kind == "logistic":
        if task == "regress":
            raise ValueError("logistic link is classification-only; use linear")
        inner = fit_logistic(feats, numeric, epochs=config.epochs, lr=config.lr)
    elif kind in MLP_PRESETS:
        widths = [feats.shape[1], *MLP_PRESETS[kind], 1]
        output = "sigmoid" if task == "classify" else "linear"
        inner = mlp_init(widths, seed=config.seed, output=output,
                         dropout=MLP_PRESET_DROPOUT[kind])
        mlp_train(inner, feats, numeric, task, epochs=config.epochs,
                  lr=config.lr, batch_size=config.batch_size)
    else:
        raise ValueError(f"unknown learner {kind!r}")
    return ModelBundle(task=task, kind="mlp" if kind in MLP_PRESETS else kind,
                       feature_spec=spec, standardizer=standardizer, inner=inner,
                       meta={"learner": kind})


def train_hybrid(config: LearnerConfig, extractor: str, ds: Dataset, split: SplitSpec,
                 method_params=None, seed: int = 0):
    """Teacher-student workflow: regress a statistical method's factors.

    Teacher factors are computed on the training split; the fitted regressor
    predicts factors for the validation split, returned as a factor series
    for downstream histogram/FOM analysis.
    """
    from . import methods  # local import keeps the module layering one-way

    params = method_params or methods.MethodParams()
    validation, training, _ = split_dataset(ds, split)
    if len(training) == 0:
        raise ValueError("empty training split")
    ctx = methods.build_context(training, params=params, seed=seed)
    teacher = methods.factor_series(extractor, training, ctx)
    if not np.isfinite(teacher.values).all():
        raise ValueError(f"teacher {extractor!r} produced non-finite factors")
    bundle = fit_learner(config, training.samples, teacher.values, task="regress")
    predicted = bundle.predict_values(validation.samples)
    series = methods.FactorSeries(method=f"{config.model}:{extractor}", values=predicted)
    bundle.meta["teacher"] = extractor
    return bundle, series


# ---------------------------------------------------------------------------
# model persistence


def save_model(bundle: ModelBundle, path) -> None:
    """Serialize a fitted pipeline as a versioned JSON document."""
    doc = {
        "version": 1,
        "task": bundle.task,
        "kind": bundle.kind,
        "meta": bundle.meta,
        "feature_spec": bundle.feature_spec.to_dict(),
        "standardizer": bundle.standardizer.to_dict(),
    }
    inner = bundle.inner
    if bundle.kind == "knn":
        doc["model"] = {
            "features": inner.features.tolist(),
            "targets": list(inner.targets),
            "k": inner.k,
        }
    elif bundle.kind in ("linear", "logistic"):
        doc["model"] = {
            "coef": inner.coef.tolist(),
            "intercept": inner.intercept,
            "link": inner.link,
        }
    else:
        doc["model"] = {
            "widths": inner.widths,
            "weights": [w.tolist() for w in inner.weights],
            "biases": [b.tolist() for b in inner.biases],
            "output": inner.output,
            "dropout": inner.dropout,
            "seed": inner.seed,
        }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_model(path) -> ModelBundle:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("version") != 1:
        raise ValueError(f"unsupported model document version {doc.get('version')!r}")
    m = doc["model"]
    if doc["kind"] == "knn":
        targets = m["targets"]
        targets = (np.asarray(targets, dtype=object) if targets and isinstance(targets[0], str)
                   else np.asarray(targets, dtype=np.float64))
        inner = KnnModel(features=np.asarray(m["features"]), targets=targets, k=m["k"])
    elif doc["kind"] in ("linear", "logistic"):
        inner = LinearModel(coef=np.asarray(m["coef"]), intercept=m["intercept"], link=m["link"])
    else:
        inner = MlpModel(m["widths"], m["weights"], m["biases"], m["output"],
                         m["dropout"], m["seed"])
    return ModelBundle(
        task=doc["task"],
        kind=doc["kind"],
        feature_spec=FeatureSpec.from_dict(doc["feature_spec"]),
        standardizer=Standardizer.from_dict(doc["standardizer"]),
        inner=inner,
        meta=doc.get("meta", {}),
    )
