import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from mqtt_ids import classifiers
from mqtt_ids.data import DataException, FeatureLevel, canonical_class_order
from mqtt_ids.dataset import FeatureTable, split_holdout

logger = logging.getLogger(__name__)

DEFAULT_FOLDS = 5


class LengthMismatchException(DataException):
    def __init__(self, truth_length, preds_length) -> None:
        super().__init__(f"Got {truth_length} true label(s) and {preds_length} prediction(s); "
                         f"both must be the same, non-zero length.")


class EmptyMatrixException(DataException):
    def __init__(self) -> None:
        super().__init__("The confusion matrix holds no rows to compute metrics from.")


class InsufficientClassRowsException(DataException):
    def __init__(self, label, count, folds) -> None:
        super().__init__(f"Class '{label}' has {count} row(s), fewer than the {folds} folds requested.")


@dataclass
class ConfusionMatrix:
    """counts[i][j] is the number of rows of true class classes[i] predicted as classes[j]."""
    classes: List[str]
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def support(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def to_dict(self) -> dict:
        return {"classes": list(self.classes), "counts": self.counts.tolist()}

    @classmethod
    def from_dict(cls, source_dict: dict) -> "ConfusionMatrix":
        classes = list(source_dict["classes"])
        return cls(classes, np.array(source_dict["counts"], dtype=np.int64).reshape(len(classes), len(classes)))


def confusion_matrix(truth: Sequence[str], preds: Sequence[str]) -> ConfusionMatrix:
    if len(truth) != len(preds) or len(truth) == 0:
        raise LengthMismatchException(len(truth), len(preds))
    truth = np.asarray(truth, dtype=object)
    preds = np.asarray(preds, dtype=object)
    classes = canonical_class_order(np.concatenate([truth, preds]))
    code = {label: i for i, label in enumerate(classes)}
    counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
    np.add.at(counts, ([code[label] for label in truth], [code[label] for label in preds]), 1)
    return ConfusionMatrix(classes, counts)


def overall_accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise EmptyMatrixException()
    return float(np.trace(cm.counts) / cm.total)


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int

    def to_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1, "support": self.support}

    @classmethod
    def from_dict(cls, source_dict: dict) -> "ClassMetrics":
        return cls(precision=source_dict["precision"], recall=source_dict["recall"], f1=source_dict["f1"],
                   support=source_dict.get("support", 0))


def _ratio(numerator: float, denominator: float) -> float:
    # Zero denominators give 0.
    return float(numerator / denominator) if denominator else 0.0


def per_class_metrics(cm: ConfusionMatrix) -> Dict[str, ClassMetrics]:
    if cm.total == 0:
        raise EmptyMatrixException()
    true_positives = np.diag(cm.counts)
    false_positives = cm.counts.sum(axis=0) - true_positives
    false_negatives = cm.counts.sum(axis=1) - true_positives
    metrics = {}
    for i, label in enumerate(cm.classes):
        tp, fp, fn = int(true_positives[i]), int(false_positives[i]), int(false_negatives[i])
        metrics[label] = ClassMetrics(precision=_ratio(tp, tp + fp), recall=_ratio(tp, tp + fn),
                                      f1=_ratio(2 * tp, 2 * tp + fp + fn), support=tp + fn)
    return metrics


def weighted_average(per_class: Dict[str, ClassMetrics], cm: ConfusionMatrix) -> Tuple[float, float, float]:
    """Support-weighted (precision, recall, f1)."""
    total = sum(metrics.support for metrics in per_class.values())
    if total == 0:
        raise EmptyMatrixException()
    return tuple(sum(getattr(metrics, name) * metrics.support for metrics in per_class.values()) / total
                 for name in ("precision", "recall", "f1"))


@dataclass
class EvalReport:
    per_class: Dict[str, ClassMetrics]
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    overall_accuracy: float
    confusion: Optional[ConfusionMatrix] = None
    folds: List["EvalReport"] = field(default_factory=list)
    classifier: Optional[dict] = None
    level: Optional[FeatureLevel] = None

    @classmethod
    def from_confusion_matrix(cls, cm: ConfusionMatrix, classifier: Optional[dict] = None,
                              level: Optional[FeatureLevel] = None,
                              folds: Sequence["EvalReport"] = ()) -> "EvalReport":
        per_class = per_class_metrics(cm)
        precision, recall, f1 = weighted_average(per_class, cm)
        return cls(per_class=per_class, weighted_precision=precision, weighted_recall=recall, weighted_f1=f1,
                   overall_accuracy=overall_accuracy(cm), confusion=cm, folds=list(folds), classifier=classifier,
                   level=level)

    @property
    def classifier_kind(self) -> Optional[str]:
        return self.classifier["kind"] if self.classifier else None

    @property
    def mean_fold_accuracy(self) -> Optional[float]:
        if not self.folds:
            return None
        return float(np.mean([fold.overall_accuracy for fold in self.folds]))

    def to_dict(self) -> dict:
        out = {
            "classifier": self.classifier,
            "level": self.level.value if self.level else None,
            "overall_accuracy": self.overall_accuracy,
            "weighted": {"precision": self.weighted_precision, "recall": self.weighted_recall,
                         "f1": self.weighted_f1},
            "per_class": {label: metrics.to_dict() for label, metrics in self.per_class.items()},
            "confusion": self.confusion.to_dict() if self.confusion is not None else None,
        }
        if self.folds:
            out["folds"] = [fold.to_dict() for fold in self.folds]
            out["mean_fold_accuracy"] = self.mean_fold_accuracy
        return out

    @classmethod
    def from_dict(cls, source_dict: dict) -> "EvalReport":
        weighted = source_dict["weighted"]
        confusion = source_dict.get("confusion")
        level = source_dict.get("level")
        return cls(per_class={label: ClassMetrics.from_dict(metrics)
                              for label, metrics in source_dict["per_class"].items()},
                   weighted_precision=weighted["precision"], weighted_recall=weighted["recall"],
                   weighted_f1=weighted["f1"], overall_accuracy=source_dict["overall_accuracy"],
                   confusion=ConfusionMatrix.from_dict(confusion) if confusion else None,
                   folds=[cls.from_dict(fold) for fold in source_dict.get("folds", [])],
                   classifier=source_dict.get("classifier"), level=FeatureLevel(level) if level else None)


def stratified_folds(labels: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Fold index of every row. Each class is shuffled and dealt round-robin, the deal continuing from class to
    class, so per-class fold sizes differ by at most one and so do the fold totals."""
    if k < 2:
        raise ValueError(f"cross-validation needs at least 2 folds, got {k}")
    labels = np.asarray(labels, dtype=object)
    rng = np.random.default_rng(seed)
    folds = np.empty(len(labels), dtype=np.int64)
    position = 0
    for label in canonical_class_order(labels):
        rows = rng.permutation(np.flatnonzero(labels == label))
        if len(rows) < k:
            raise InsufficientClassRowsException(label, len(rows), k)
        folds[rows] = (position + np.arange(len(rows))) % k
        position += len(rows)
    return folds


def evaluate_model(model: classifiers.Model, table: FeatureTable) -> EvalReport:
    preds = classifiers.predict_table(model, table)
    return EvalReport.from_confusion_matrix(confusion_matrix(table.labels, preds), classifier=model.spec.to_dict(),
                                            level=table.level)


def cross_validate(spec: classifiers.ClassifierSpec, t: FeatureTable, k: int = DEFAULT_FOLDS,
                   seed: Optional[int] = None) -> EvalReport:
    """Stratified k-fold cross-validation. Every fold refits the model (and its standardizer) on the other k-1
    folds; the headline metrics pool all out-of-fold predictions into one confusion matrix."""
    seed = spec.seed if seed is None else seed
    folds = stratified_folds(t.labels, k, seed)
    preds = np.empty(t.n_rows, dtype=object)
    fold_reports = []
    for fold in range(k):
        test_rows = np.flatnonzero(folds == fold)
        model = classifiers.fit(spec, t.take(np.flatnonzero(folds != fold)))
        test = t.take(test_rows)
        preds[test_rows] = classifiers.predict_table(model, test)
        report = EvalReport.from_confusion_matrix(confusion_matrix(test.labels, preds[test_rows]), level=t.level)
        logger.info(f"Fold {fold + 1}/{k}: {spec.kind.value} accuracy {report.overall_accuracy:.2%} "
                    f"on {len(test_rows)} rows.")
        fold_reports.append(report)
    return EvalReport.from_confusion_matrix(confusion_matrix(t.labels, preds), classifier=spec.to_dict(),
                                            level=t.level, folds=fold_reports)


def holdout_evaluate(spec: classifiers.ClassifierSpec, t: FeatureTable, train_fraction: float = 0.75,
                     seed: Optional[int] = None) -> EvalReport:
    seed = spec.seed if seed is None else seed
    train, test = split_holdout(t, train_fraction, seed)
    logger.info(f"Holdout split: {train.n_rows} training rows, {test.n_rows} test rows.")
    return evaluate_model(classifiers.fit(spec, train), test)
