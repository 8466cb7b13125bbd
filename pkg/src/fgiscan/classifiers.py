"""Supervised detection: training, evaluation, persistence, benchmarking.

Six classical algorithms run over the package feature vectors, each
producing a malicious-probability score; the label threshold is 0.5.
The linear SVM has no native probability output, so its decision margins
are passed through a one-dimensional logistic calibration fitted on the
training margins only.

The malicious class is the positive class everywhere.  Precision is
undefined (None) when nothing was predicted positive, recall when the
test set has no positives; F1 follows suit.  Undefined values stay None
through to reports, which print them as ``n/a`` rather than a fake 0.
"""

from __future__ import annotations

import json
import logging
import pickle
import struct
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Sequence, TypeVar

import numpy as np
from sklearn.ensemble import RandomForestClassifier
from sklearn.linear_model import LogisticRegression
from sklearn.neighbors import KNeighborsClassifier
from sklearn.neural_network import MLPClassifier
from sklearn.svm import SVC
from sklearn.tree import DecisionTreeClassifier

from .corpus import Label
from .errors import (
    LayoutMismatch,
    MissingModel,
    NonFiniteFeature,
    SingleClassDataset,
    TooFewExamples,
)
from .features import (
    FeatureConfig,
    FeatureLayout,
    FeatureMode,
    FeatureVector,
    ModelBundle,
    featurize,
    fit_bundle,
)
from .profiles import FgiProfile

logger = logging.getLogger(__name__)

_MODEL_MAGIC = b"FGIC"
_MODEL_HEADER = struct.Struct("<4sII")  # magic, container version, header len

T = TypeVar("T")


class Algorithm(str, Enum):
    DECISION_TREE = "decision_tree"
    LOGISTIC_REGRESSION = "logistic_regression"
    SVM_LINEAR = "svm_linear"
    RANDOM_FOREST = "random_forest"
    KNN = "knn"
    NEURAL_NET = "neural_net"


DEFAULT_HYPERPARAMETERS: dict[Algorithm, dict] = {
    Algorithm.DECISION_TREE: {"max_depth": 10, "min_samples_split": 5},
    Algorithm.LOGISTIC_REGRESSION: {"C": 0.1, "max_iter": 1000},
    Algorithm.SVM_LINEAR: {"C": 0.1},
    Algorithm.RANDOM_FOREST: {
        "n_estimators": 200, "max_depth": 20, "min_samples_split": 2,
    },
    Algorithm.KNN: {"n_neighbors": 5},
    Algorithm.NEURAL_NET: {
        "hidden_layer_sizes": (100,), "learning_rate_init": 1e-3,
        "max_iter": 200,
    },
}


@dataclass
class TrainedModel:
    algorithm: Algorithm
    estimator: object
    layout: FeatureLayout
    seed: int
    hyperparameters: dict
    calibrator: object | None = None  # SVM margin -> probability


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: float | None
    recall: float | None
    f1: float | None
    tp: int
    fp: int
    tn: int
    fn: int


# ---------------------------------------------------------------------------
# dataset handling
# ---------------------------------------------------------------------------

def split(
    items: Sequence[T],
    train_fraction: float = 0.8,
    seed: int = 0,
    *,
    key: Callable[[T], Label] | None = None,
) -> tuple[list[T], list[T]]:
    """Seeded stratified split preserving the label mix on both sides.

    Each label group is shuffled independently and contributes
    round(train_fraction * group size) items to the training side, so the
    per-label training share is within one item of the requested fraction.
    """
    if key is None:
        key = lambda item: item.package.label  # noqa: E731
    if len(items) < 10:
        raise TooFewExamples(f"need at least 10 items, got {len(items)}")
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be in (0, 1)")

    groups: dict[Label, list[T]] = {}
    for item in items:
        groups.setdefault(key(item), []).append(item)
    if len(groups) < 2:
        raise SingleClassDataset(
            f"all {len(items)} items share one label; need both classes"
        )

    rng = np.random.default_rng(seed)
    train: list[T] = []
    test: list[T] = []
    for label in sorted(groups, key=lambda l: l.value):
        members = groups[label]
        order = rng.permutation(len(members))
        take = int(round(train_fraction * len(members)))
        take = min(max(take, 0), len(members))
        train.extend(members[i] for i in order[:take])
        test.extend(members[i] for i in order[take:])
    return train, test


def _stack(
    pairs: Sequence[tuple[FeatureVector, Label]],
) -> tuple[np.ndarray, np.ndarray, FeatureLayout]:
    if not pairs:
        raise TooFewExamples("no feature vectors given")
    layout = pairs[0][0].layout
    for vector, _ in pairs:
        if vector.layout != layout:
            raise LayoutMismatch(
                f"mixed layouts: {vector.layout} vs {layout}"
            )
    X = np.vstack([vector.values for vector, _ in pairs])
    if not np.isfinite(X).all():
        bad = int(np.argwhere(~np.isfinite(X))[0][0])
        raise NonFiniteFeature(f"non-finite value in vector {bad}")
    y = np.array(
        [1 if label is Label.MALICIOUS else 0 for _, label in pairs],
        dtype=np.int64,
    )
    return X, y, layout


def _build_estimator(algorithm: Algorithm, params: dict, seed: int,
                     n_train: int):
    if algorithm is Algorithm.DECISION_TREE:
        return DecisionTreeClassifier(random_state=seed, **params)
    if algorithm is Algorithm.LOGISTIC_REGRESSION:
        return LogisticRegression(random_state=seed, **params)
    if algorithm is Algorithm.SVM_LINEAR:
        return SVC(kernel="linear", random_state=seed, **params)
    if algorithm is Algorithm.RANDOM_FOREST:
        return RandomForestClassifier(random_state=seed, **params)
    if algorithm is Algorithm.KNN:
        params = dict(params)
        k = params.pop("n_neighbors", 5)
        if k > n_train:
            logger.warning(
                "n_neighbors=%d exceeds training size %d; clamping", k, n_train
            )
            k = n_train
        return KNeighborsClassifier(n_neighbors=k, **params)
    if algorithm is Algorithm.NEURAL_NET:
        return MLPClassifier(
            activation="relu",
            solver="sgd",
            batch_size=n_train,
            momentum=0.0,
            alpha=0.0,
            early_stopping=False,
            random_state=seed,
            **params,
        )
    raise ValueError(f"unknown algorithm {algorithm!r}")


def train(
    algorithm: Algorithm,
    training: Sequence[tuple[FeatureVector, Label]],
    hyperparameters: dict | None = None,
    seed: int = 0,
) -> TrainedModel:
    """Fit one classifier on (vector, label) pairs.

    Vectors must share a layout and be finite; both classes must appear.
    """
    X, y, layout = _stack(training)
    if len(np.unique(y)) < 2:
        raise SingleClassDataset("training data contains a single class")

    params = dict(DEFAULT_HYPERPARAMETERS[algorithm])
    params.update(hyperparameters or {})
    estimator = _build_estimator(algorithm, params, seed, len(training))
    estimator.fit(X, y)

    calibrator = None
    if algorithm is Algorithm.SVM_LINEAR:
        margins = estimator.decision_function(X).reshape(-1, 1)
        calibrator = LogisticRegression(max_iter=1000, random_state=seed)
        calibrator.fit(margins, y)

    return TrainedModel(
        algorithm=algorithm,
        estimator=estimator,
        layout=layout,
        seed=seed,
        hyperparameters=params,
        calibrator=calibrator,
    )


def score(model: TrainedModel, vector: FeatureVector) -> float:
    """Malicious-class probability for one vector."""
    if vector.layout != model.layout:
        raise LayoutMismatch(
            f"vector layout {vector.layout} does not match model layout "
            f"{model.layout}"
        )
    X = vector.values.reshape(1, -1)
    if not np.isfinite(X).all():
        raise NonFiniteFeature("non-finite value in vector")
    if model.calibrator is not None:
        margins = model.estimator.decision_function(X).reshape(-1, 1)
        proba = model.calibrator.predict_proba(margins)
    else:
        proba = model.estimator.predict_proba(X)
    classes = list(model.calibrator.classes_) if model.calibrator is not None \
        else list(model.estimator.classes_)
    malicious_col = classes.index(1)
    return float(proba[0][malicious_col])


def predict(model: TrainedModel, vector: FeatureVector) -> tuple[Label, float]:
    value = score(model, vector)
    label = Label.MALICIOUS if value >= 0.5 else Label.LEGITIMATE
    return label, value


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def compute_metrics(tp: int, fp: int, tn: int, fn: int) -> Metrics:
    total = tp + fp + tn + fn
    if total == 0:
        raise TooFewExamples("no predictions to score")
    accuracy = (tp + tn) / total
    precision = tp / (tp + fp) if (tp + fp) > 0 else None
    recall = tp / (tp + fn) if (tp + fn) > 0 else None
    if precision is None or recall is None or (precision + recall) == 0:
        f1 = None
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return Metrics(accuracy=accuracy, precision=precision, recall=recall,
                   f1=f1, tp=tp, fp=fp, tn=tn, fn=fn)


def evaluate_predictions(
    y_true: Sequence[Label], y_pred: Sequence[Label]
) -> Metrics:
    if len(y_true) != len(y_pred):
        raise ValueError("prediction/label length mismatch")
    tp = fp = tn = fn = 0
    for truth, guess in zip(y_true, y_pred):
        if guess is Label.MALICIOUS:
            if truth is Label.MALICIOUS:
                tp += 1
            else:
                fp += 1
        else:
            if truth is Label.MALICIOUS:
                fn += 1
            else:
                tn += 1
    return compute_metrics(tp, fp, tn, fn)


def evaluate(
    model: TrainedModel,
    testing: Sequence[tuple[FeatureVector, Label]],
) -> Metrics:
    y_true = [label for _, label in testing]
    y_pred = [predict(model, vector)[0] for vector, _ in testing]
    return evaluate_predictions(y_true, y_pred)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def save_model(model: TrainedModel, path: str | Path) -> None:
    """Single-file container: magic, versioned JSON header, pickle payload."""
    header = json.dumps({
        "algorithm": model.algorithm.value,
        "layout": model.layout.to_dict(),
        "seed": model.seed,
        "hyperparameters": {
            k: (list(v) if isinstance(v, tuple) else v)
            for k, v in model.hyperparameters.items()
        },
    }, sort_keys=True).encode("utf-8")
    payload = pickle.dumps(
        {"estimator": model.estimator, "calibrator": model.calibrator},
        protocol=4,
    )
    with open(path, "wb") as fh:
        fh.write(_MODEL_HEADER.pack(_MODEL_MAGIC, 1, len(header)))
        fh.write(header)
        fh.write(payload)


def load_model(path: str | Path) -> TrainedModel:
    path = Path(path)
    if not path.is_file():
        raise MissingModel(f"no classifier file at {path}")
    blob = path.read_bytes()
    if len(blob) < _MODEL_HEADER.size:
        raise MissingModel(f"truncated classifier file {path}")
    magic, version, header_len = _MODEL_HEADER.unpack_from(blob)
    if magic != _MODEL_MAGIC:
        raise MissingModel(f"{path} is not a classifier container")
    if version != 1:
        raise MissingModel(f"unsupported container version {version}")
    try:
        header = json.loads(
            blob[_MODEL_HEADER.size:_MODEL_HEADER.size + header_len]
        )
        payload = pickle.loads(blob[_MODEL_HEADER.size + header_len:])
    except (json.JSONDecodeError, pickle.UnpicklingError, EOFError) as exc:
        raise MissingModel(f"corrupt classifier container {path}: {exc}") from exc
    hyper = {
        k: (tuple(v) if isinstance(v, list) else v)
        for k, v in header["hyperparameters"].items()
    }
    return TrainedModel(
        algorithm=Algorithm(header["algorithm"]),
        estimator=payload["estimator"],
        layout=FeatureLayout.from_dict(header["layout"]),
        seed=header["seed"],
        hyperparameters=hyper,
        calibrator=payload.get("calibrator"),
    )


# ---------------------------------------------------------------------------
# benchmark grid
# ---------------------------------------------------------------------------

DEFAULT_MODES = (
    FeatureMode.METADATA, FeatureMode.STATIC, FeatureMode.DYNAMIC,
    FeatureMode.ALL,
)
DEFAULT_ALGORITHMS = (
    Algorithm.DECISION_TREE, Algorithm.LOGISTIC_REGRESSION,
    Algorithm.SVM_LINEAR, Algorithm.RANDOM_FOREST, Algorithm.KNN,
    Algorithm.NEURAL_NET,
)


@dataclass
class BenchmarkRow:
    mode: FeatureMode
    algorithm: Algorithm
    metrics: Metrics


@dataclass
class BenchmarkResult:
    rows: list[BenchmarkRow]
    bundle: ModelBundle
    train_size: int
    test_size: int
    models: dict[tuple[FeatureMode, Algorithm], TrainedModel] = field(
        default_factory=dict
    )


def benchmark(
    profiles: Sequence[FgiProfile],
    modes: Sequence[FeatureMode] = DEFAULT_MODES,
    algorithms: Sequence[Algorithm] = DEFAULT_ALGORITHMS,
    seed: int = 0,
    config: FeatureConfig | None = None,
    train_fraction: float = 0.8,
) -> BenchmarkResult:
    """Train/evaluate every (mode, algorithm) pair on one shared split.

    The feature bundle is fitted on the training split only, then reused
    across modes, so rows differ only in what the vectors include.
    """
    train_profiles, test_profiles = split(
        profiles, train_fraction=train_fraction, seed=seed
    )
    bundle = fit_bundle(train_profiles, config)
    result = BenchmarkResult(
        rows=[], bundle=bundle,
        train_size=len(train_profiles), test_size=len(test_profiles),
    )
    for mode in modes:
        train_pairs = [
            (featurize(p, bundle, mode), p.package.label)
            for p in train_profiles
        ]
        test_pairs = [
            (featurize(p, bundle, mode), p.package.label)
            for p in test_profiles
        ]
        for algorithm in algorithms:
            model = train(algorithm, train_pairs, seed=seed)
            metrics = evaluate(model, test_pairs)
            result.rows.append(BenchmarkRow(mode, algorithm, metrics))
            result.models[(mode, algorithm)] = model
    return result


def benchmark_to_csv(rows: Sequence[BenchmarkRow], path: str | Path) -> None:
    from .analytics import write_csv

    write_csv(
        Path(path),
        ("mode", "algorithm", "accuracy", "precision", "recall", "f1"),
        [
            (
                row.mode.value, row.algorithm.value, row.metrics.accuracy,
                row.metrics.precision, row.metrics.recall, row.metrics.f1,
            )
            for row in rows
        ],
    )
