from abc import ABC, abstractmethod
from typing import IO, Dict, List, Optional, Sequence, Tuple
import logging

import numpy as np

from mqtt_ids.classifiers import DISPLAY_NAMES, REPORT_ORDER, ClassifierKind
from mqtt_ids.data import FeatureLevel, TrafficClass, canonical_class_order
from mqtt_ids.evaluation import EvalReport

logger = logging.getLogger(__name__)

ReportKey = Tuple[str, FeatureLevel]

LEVEL_HEADINGS = {FeatureLevel.PACKET: "Packet", FeatureLevel.UNIFLOW: "Uni", FeatureLevel.BIFLOW: "Bi"}
WEIGHTED_ROW = "Weighted Average"
METRIC_HEADINGS = {"recall": "Recall", "precision": "Precision", "f1": "F1-score"}
TREND_CLASSES = (TrafficClass.BENIGN.value, TrafficClass.MQTT_BF.value)


def format_percent(value: Optional[float]) -> str:
    return "-" if value is None else f"{value:.2%}"


def display_name(kind: str) -> str:
    try:
        return DISPLAY_NAMES[ClassifierKind(kind)]
    except ValueError:
        return kind


def ordered_kinds(kinds) -> List[str]:
    """Classifier kinds in the order of the published tables; unknown kinds follow, sorted."""
    known = [kind.value for kind in REPORT_ORDER if kind.value in kinds]
    return known + sorted(kind for kind in set(kinds) if kind not in known)


def ordered_levels(levels) -> List[str]:
    return [level.value for level in FeatureLevel if level.value in levels or level in levels]


def format_table(rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(cell.ljust(width) for cell, width in zip(row, widths)).rstrip() for row in rows)


class BaseReport(ABC):
    """This is the base class for all reports. Each report should provide a docstring that explains its purpose;
    `key` names its section in the json document. `compute` builds that section from the evaluation reports
    and `format` renders a section (freshly computed or loaded from json) as plain text.
    """
    key: str

    def __init__(self, reports: Dict[ReportKey, EvalReport]):
        self._reports = reports
        self._section: dict = {}
        self._computed = False

    @abstractmethod
    def compute(self) -> None:
        pass

    @classmethod
    @abstractmethod
    def format(cls, section: dict) -> str:
        pass

    def to_dict(self) -> dict:
        if not self._computed:
            self.compute()
        return self._section

    def __str__(self) -> str:
        return self.format(self.to_dict())

    def export(self, output_file: IO) -> None:
        output_file.write(str(self))
        output_file.write("\n")

    def _by_kind(self) -> Dict[str, Dict[str, EvalReport]]:
        grouped: Dict[str, Dict[str, EvalReport]] = {}
        for (kind, level), report in self._reports.items():
            grouped.setdefault(kind, {})[level.value] = report
        return {kind: {level: grouped[kind][level] for level in ordered_levels(grouped[kind])}
                for kind in ordered_kinds(grouped)}


class OverallAccuracyReport(BaseReport):
    """Overall detection accuracy of every classifier at each feature level (packet, unidirectional and
    bidirectional flows).
    """
    key = "overall_accuracy"

    def compute(self) -> None:
        self._section = {kind: {level: report.overall_accuracy for level, report in levels.items()}
                         for kind, levels in self._by_kind().items()}
        self._computed = True

    @classmethod
    def format(cls, section: dict) -> str:
        levels = ordered_levels({level for cells in section.values() for level in cells})
        rows = [["Classifier"] + [LEVEL_HEADINGS[FeatureLevel(level)] for level in levels]]
        for kind in ordered_kinds(section):
            rows.append([display_name(kind)] + [format_percent(section[kind].get(level)) for level in levels])
        return "Overall detection accuracy\n" + format_table(rows)


class ClassMetricsReport(BaseReport):
    """Per-class recall, precision and F1-score with their support-weighted averages, one block per
    classifier with a column for each feature level.
    """
    key = "class_metrics"

    def compute(self) -> None:
        self._section = {}
        for kind, levels in self._by_kind().items():
            self._section[kind] = {}
            for level, report in levels.items():
                cells = {label: report.per_class[label].to_dict()
                         for label in canonical_class_order(report.per_class)}
                cells[WEIGHTED_ROW] = {"precision": report.weighted_precision, "recall": report.weighted_recall,
                                       "f1": report.weighted_f1}
                self._section[kind][level] = cells
        self._computed = True

    @classmethod
    def format(cls, section: dict) -> str:
        blocks = []
        for kind in ordered_kinds(section):
            levels = ordered_levels(section[kind])
            labels = canonical_class_order({label for level in levels for label in section[kind][level]
                                            if label != WEIGHTED_ROW})
            rows = [[""] + [f"{heading} {LEVEL_HEADINGS[FeatureLevel(level)]}"
                            for heading in METRIC_HEADINGS.values() for level in levels]]
            for label in labels + [WEIGHTED_ROW]:
                rows.append([label] + [format_percent(section[kind][level].get(label, {}).get(metric))
                                       for metric in METRIC_HEADINGS for level in levels])
            blocks.append(display_name(kind) + "\n" + format_table(rows))
        return "\n\n".join(blocks)


class AggregateReport(BaseReport):
    """Means across classifiers, per feature level, of overall accuracy and the weighted precision, recall and
    F1-score.
    """
    key = "aggregates"

    def compute(self) -> None:
        by_level: Dict[str, List[EvalReport]] = {}
        for (_, level), report in self._reports.items():
            by_level.setdefault(level.value, []).append(report)
        self._section = {}
        for level in ordered_levels(by_level):
            reports = by_level[level]
            self._section[level] = {
                "classifiers": len(reports),
                "accuracy": float(np.mean([report.overall_accuracy for report in reports])),
                "precision": float(np.mean([report.weighted_precision for report in reports])),
                "recall": float(np.mean([report.weighted_recall for report in reports])),
                "f1": float(np.mean([report.weighted_f1 for report in reports])),
            }
        self._computed = True

    @classmethod
    def format(cls, section: dict) -> str:
        levels = ordered_levels(section)
        rows = [[""] + [LEVEL_HEADINGS[FeatureLevel(level)] for level in levels]]
        for metric, heading in (("accuracy", "Mean accuracy"), ("precision", "Mean weighted precision"),
                                ("recall", "Mean weighted recall"), ("f1", "Mean weighted F1-score")):
            rows.append([heading] + [format_percent(section[level][metric]) for level in levels])
        rows.append(["Classifiers"] + [str(section[level]["classifiers"]) for level in levels])
        return "Averages across classifiers\n" + format_table(rows)


class TrendReport(BaseReport):
    """Per classifier, the series [packet, uniflow, biflow] of overall accuracy, Benign and MQTT_BF recall and
    precision, and weighted recall and precision. Missing levels are null.
    """
    key = "trends"

    def compute(self) -> None:
        self._section = {}
        for kind, levels in self._by_kind().items():
            def series(value_of):
                return [value_of(levels[level.value]) if level.value in levels else None for level in FeatureLevel]

            trends = {"accuracy": series(lambda report: report.overall_accuracy)}
            for label in TREND_CLASSES:
                for metric in ("recall", "precision"):
                    trends[f"{label}_{metric}"] = series(
                        lambda report: getattr(report.per_class[label], metric) if label in report.per_class
                        else None)
            trends["weighted_recall"] = series(lambda report: report.weighted_recall)
            trends["weighted_precision"] = series(lambda report: report.weighted_precision)
            self._section[kind] = trends
        self._computed = True

    @classmethod
    def format(cls, section: dict) -> str:
        rows = [["Classifier", "Series"] + [LEVEL_HEADINGS[level] for level in FeatureLevel]]
        for kind in ordered_kinds(section):
            for name, values in section[kind].items():
                rows.append([display_name(kind), name] + [format_percent(value) for value in values])
        return "Trends across feature levels\n" + format_table(rows)
