import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Type, Union

import numpy as np

from mqtt_ids.bayes import GaussianNaiveBayes
from mqtt_ids.data import DataException
from mqtt_ids.dataset import FeatureTable, Standardizer
from mqtt_ids.estimator import BaseEstimator
from mqtt_ids.linear import LinearSVM, LogisticRegression
from mqtt_ids.neighbors import KNearestNeighbors
from mqtt_ids.svm import KernelSVM
from mqtt_ids.trees import DecisionTree, RandomForest

logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1


class ClassifierKind(Enum):
    LR = "lr"
    NB = "nb"
    KNN = "knn"
    DT = "dt"
    RF = "rf"
    SVM_LINEAR = "svm-linear"
    SVM_RBF = "svm-rbf"


DISPLAY_NAMES = {
    ClassifierKind.LR: "LR",
    ClassifierKind.KNN: "k-NN",
    ClassifierKind.DT: "DT",
    ClassifierKind.RF: "RF",
    ClassifierKind.SVM_RBF: "SVM (RBF Kernel)",
    ClassifierKind.NB: "NB",
    ClassifierKind.SVM_LINEAR: "SVM (Linear Kernel)",
}

# Row order of the published result tables.
REPORT_ORDER = list(DISPLAY_NAMES)

SCALED_KINDS = frozenset({ClassifierKind.LR, ClassifierKind.KNN, ClassifierKind.SVM_LINEAR, ClassifierKind.SVM_RBF})

ESTIMATOR_MAPPING: Dict[ClassifierKind, Type[BaseEstimator]] = {
    ClassifierKind.LR: LogisticRegression,
    ClassifierKind.NB: GaussianNaiveBayes,
    ClassifierKind.KNN: KNearestNeighbors,
    ClassifierKind.DT: DecisionTree,
    ClassifierKind.RF: RandomForest,
    ClassifierKind.SVM_LINEAR: LinearSVM,
    ClassifierKind.SVM_RBF: KernelSVM,
}

DEFAULT_HYPERPARAMETERS: Dict[ClassifierKind, Dict[str, Any]] = {
    ClassifierKind.LR: {"l2": 1e-4, "max_epochs": 1000, "tol": 1e-6},
    ClassifierKind.NB: {"var_smoothing": 1e-9},
    ClassifierKind.KNN: {"k": 5},
    ClassifierKind.DT: {"min_samples_split": 2, "max_depth": None, "max_features": None},
    ClassifierKind.RF: {"n_trees": 100, "max_features": "sqrt", "bootstrap": True, "min_samples_split": 2,
                        "max_depth": None},
    ClassifierKind.SVM_LINEAR: {"C": 1.0, "max_epochs": 1000, "tol": 1e-3},
    ClassifierKind.SVM_RBF: {"C": 1.0, "gamma": "scale", "tol": 1e-3, "max_iter": 100000},
}


class UnknownClassifierException(Exception):
    def __init__(self, kind, original_exception) -> None:
        super().__init__(f"The classifier '{kind}' is unknown or unsupported. "
                         f"Details: {str(original_exception)}")


class InvalidHyperparameterException(Exception):
    def __init__(self, kind, name, value, reason) -> None:
        super().__init__(f"Hyperparameter '{name}'={value!r} is invalid for {kind.value}: {reason}")


class SingleClassException(DataException):
    def __init__(self, classes) -> None:
        super().__init__(f"Training needs rows of at least two classes, found {list(classes)}.")


class DimensionMismatchException(DataException):
    def __init__(self, expected, actual) -> None:
        super().__init__(f"The model was trained on {expected} feature(s) but was given {actual}.")


class InvalidModelFileException(DataException):
    def __init__(self, source, reason) -> None:
        super().__init__(f"The model file '{source}' could not be loaded: {reason}")


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


# name -> (check, description of the accepted range)
_HYPERPARAMETER_RULES = {
    "l2": (lambda v: _is_number(v) and v >= 0, "a number >= 0"),
    "tol": (lambda v: _is_number(v) and v > 0, "a number > 0"),
    "max_epochs": (lambda v: _is_int(v) and v >= 1, "an integer >= 1"),
    "max_iter": (lambda v: _is_int(v) and v >= 1, "an integer >= 1"),
    "var_smoothing": (lambda v: _is_number(v) and v >= 0, "a number >= 0"),
    "k": (lambda v: _is_int(v) and v >= 1, "an integer >= 1"),
    "n_trees": (lambda v: _is_int(v) and v >= 1, "an integer >= 1"),
    "min_samples_split": (lambda v: _is_int(v) and v >= 2, "an integer >= 2"),
    "max_depth": (lambda v: v is None or (_is_int(v) and v >= 1), "null or an integer >= 1"),
    "max_features": (lambda v: v in (None, "sqrt", "all") or (_is_int(v) and v >= 1),
                     "null, \"sqrt\", \"all\" or an integer >= 1"),
    "bootstrap": (lambda v: isinstance(v, bool), "true or false"),
    "C": (lambda v: _is_number(v) and v > 0, "a number > 0"),
    "gamma": (lambda v: v == "scale" or (_is_number(v) and v > 0), "\"scale\" or a number > 0"),
    "scale": (lambda v: isinstance(v, bool), "true or false"),
}


def default_hyperparameters(kind: ClassifierKind) -> Dict[str, Any]:
    return {**DEFAULT_HYPERPARAMETERS[kind], "scale": kind in SCALED_KINDS}


def validate_hyperparameters(kind: ClassifierKind, hyperparameters: Dict[str, Any]) -> None:
    known = default_hyperparameters(kind)
    for name, value in hyperparameters.items():
        if name not in known:
            raise InvalidHyperparameterException(kind, name, value, f"accepted names are {sorted(known)}")
        check, accepted = _HYPERPARAMETER_RULES[name]
        if not check(value):
            raise InvalidHyperparameterException(kind, name, value, f"expected {accepted}")


def parse_hyperparameter_overrides(pairs: Iterable[str]) -> Dict[str, Any]:
    """Turn `key=value` strings into overrides. Values are read as json (so 3, 0.5, true and null work) and
    fall back to the raw string."""
    overrides = {}
    for pair in pairs:
        name, separator, raw = pair.partition("=")
        if not separator or not name:
            raise ValueError(f"expected key=value, got '{pair}'")
        try:
            overrides[name] = json.loads(raw)
        except json.JSONDecodeError:
            overrides[name] = raw
    return overrides


def get_estimator_class(kind: ClassifierKind) -> Type[BaseEstimator]:
    try:
        return ESTIMATOR_MAPPING[kind]
    except KeyError as e:
        raise UnknownClassifierException(kind, e)


@dataclass(frozen=True)
class ClassifierSpec:
    kind: ClassifierKind
    hyperparameters: Dict[str, Any] = field(default_factory=dict)
    seed: int = 0

    @classmethod
    def create(cls, kind: Union[ClassifierKind, str], seed: int = 0, **overrides) -> "ClassifierSpec":
        """Defaults for `kind` with `overrides` applied on top."""
        try:
            kind = ClassifierKind(kind)
        except ValueError as e:
            raise UnknownClassifierException(kind, e)
        validate_hyperparameters(kind, overrides)
        return cls(kind=kind, hyperparameters={**default_hyperparameters(kind), **overrides}, seed=seed)

    @property
    def display_name(self) -> str:
        return DISPLAY_NAMES[self.kind]

    @property
    def scaled(self) -> bool:
        return bool(self.hyperparameters.get("scale", self.kind in SCALED_KINDS))

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "hyperparameters": dict(self.hyperparameters), "seed": self.seed}

    @classmethod
    def from_dict(cls, source_dict: dict) -> "ClassifierSpec":
        return cls.create(source_dict["kind"], seed=source_dict.get("seed", 0),
                          **source_dict.get("hyperparameters", {}))


@dataclass
class Model:
    spec: ClassifierSpec
    classes: List[str]
    columns: List[str]
    standardizer: Optional[Standardizer]
    estimator: BaseEstimator

    def prepare(self, matrix: np.ndarray) -> np.ndarray:
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[1] != len(self.columns):
            raise DimensionMismatchException(len(self.columns), matrix.shape[-1] if matrix.ndim else 0)
        if self.standardizer is not None:
            return self.standardizer.transform_matrix(matrix)
        return matrix


def _estimator_hyperparameters(spec: ClassifierSpec) -> Dict[str, Any]:
    return {name: value for name, value in spec.hyperparameters.items() if name != "scale"}


def fit(spec: ClassifierSpec, train: FeatureTable) -> Model:
    classes = train.classes
    if len(classes) < 2:
        raise SingleClassException(classes)
    X = train.matrix()
    code = {label: i for i, label in enumerate(classes)}
    y = np.array([code[label] for label in train.labels], dtype=np.int64)

    logger.info(f"Fitting {spec.kind.value} on {train.n_rows} rows, {len(train.columns)} features, "
                f"{len(classes)} classes.")
    standardizer = None
    if spec.scaled:
        standardizer = Standardizer.fit_matrix(X, train.columns)
        X = standardizer.transform_matrix(X)
    estimator = get_estimator_class(spec.kind)(**_estimator_hyperparameters(spec))
    estimator.fit(X, y, len(classes), spec.seed)
    logger.info(f"Finished fitting {spec.kind.value}.")
    return Model(spec=spec, classes=list(classes), columns=list(train.columns), standardizer=standardizer,
                 estimator=estimator)


def predict_many(model: Model, matrix: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Predicted class labels and the (rows, classes) score matrix, columns in `model.classes` order."""
    X = model.prepare(matrix)
    scores = model.estimator.decision_function(X)
    codes = model.estimator.predict(X)
    return np.array(model.classes, dtype=object)[codes], scores


def predict(model: Model, row: Sequence[float]) -> Tuple[str, Dict[str, float]]:
    row = np.asarray(row, dtype=np.float64)
    if row.ndim != 1:
        raise DimensionMismatchException(len(model.columns), row.shape)
    labels, scores = predict_many(model, row[None, :])
    return labels[0], {label: float(score) for label, score in zip(model.classes, scores[0])}


def predict_table(model: Model, table: FeatureTable) -> np.ndarray:
    """Predicted labels for every row of `table`, whose feature columns may come in any order."""
    if set(table.columns) != set(model.columns):
        missing = [name for name in model.columns if name not in table.columns]
        unexpected = [name for name in table.columns if name not in model.columns]
        raise DimensionMismatchException(f"{len(model.columns)} (missing {missing})",
                                         f"{len(table.columns)} (unexpected {unexpected})")
    ordered = table if table.columns == model.columns else _reorder(table, model.columns)
    return predict_many(model, ordered.matrix())[0]


def _reorder(table: FeatureTable, columns: List[str]) -> FeatureTable:
    return FeatureTable(level=table.level, columns=list(columns), data=table.data, is_attack=table.is_attack,
                        labels=table.labels, source=table.source)


def model_to_dict(model: Model) -> dict:
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "spec": model.spec.to_dict(),
        "classes": list(model.classes),
        "columns": list(model.columns),
        "standardizer": model.standardizer.to_dict() if model.standardizer is not None else None,
        "state": model.estimator.get_state(),
    }


def model_from_dict(source_dict: dict, source: str = "<inline>") -> Model:
    version = source_dict.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise InvalidModelFileException(source, f"format_version {version!r} is not supported")
    try:
        spec = ClassifierSpec.from_dict(source_dict["spec"])
        standardizer = None
        if source_dict["standardizer"] is not None:
            standardizer = Standardizer.from_dict(source_dict["standardizer"])
        estimator = get_estimator_class(spec.kind)(**_estimator_hyperparameters(spec))
        estimator.set_state(source_dict["state"])
        return Model(spec=spec, classes=list(source_dict["classes"]), columns=list(source_dict["columns"]),
                     standardizer=standardizer, estimator=estimator)
    except KeyError as e:
        raise InvalidModelFileException(source, f"missing field {e}")
    except (UnknownClassifierException, InvalidHyperparameterException, ValueError, TypeError) as e:
        raise InvalidModelFileException(source, e)


def save_model(model: Model, path: Union[str, Path], manifest: Optional[dict] = None) -> None:
    document = model_to_dict(model)
    if manifest is not None:
        document["manifest"] = manifest
    with open(path, 'w') as model_file:
        json.dump(document, model_file, sort_keys=True)
        model_file.write("\n")


def load_model(path: Union[str, Path]) -> Model:
    try:
        with open(path) as model_file:
            source_dict = json.load(model_file)
    except json.JSONDecodeError as e:
        raise InvalidModelFileException(path, f"not valid json. Details: {e}")
    if not isinstance(source_dict, dict):
        raise InvalidModelFileException(path, "expected a json object")
    return model_from_dict(source_dict, source=str(path))
