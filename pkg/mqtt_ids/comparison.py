import json
import logging
from typing import Dict, List, Tuple

from deepdiff import DeepDiff

from mqtt_ids.report_generator import ReportDocument
from mqtt_ids.reports import ClassMetricsReport, OverallAccuracyReport

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 0.02
COMPARED_METRICS = ("precision", "recall", "f1")

Cell = Tuple[str, ...]


def comparable_cells(document: ReportDocument) -> Dict[Cell, float]:
    """Flatten the overall-accuracy grid and the class-metric blocks into (section, kind, level, ...) -> value."""
    cells: Dict[Cell, float] = {}
    for kind, levels in document.sections.get(OverallAccuracyReport.key, {}).items():
        for level, value in levels.items():
            cells[(OverallAccuracyReport.key, kind, level)] = float(value)
    for kind, levels in document.sections.get(ClassMetricsReport.key, {}).items():
        for level, rows in levels.items():
            for label, metrics in rows.items():
                for metric in COMPARED_METRICS:
                    if metrics.get(metric) is not None:
                        cells[(ClassMetricsReport.key, kind, level, label, metric)] = float(metrics[metric])
    return cells


def _as_mapping(cells: Dict[Cell, float]) -> Dict[str, float]:
    return {"/".join(cell): value for cell, value in sorted(cells.items())}


class ReportComparison:
    """Compares a rendered report against an expected one (by default the published results). Only cells that
    the actual document holds are compared; numbers within `tolerance` (absolute, as a fraction) are equal."""

    def __init__(self, expected: ReportDocument, actual: ReportDocument, tolerance: float = DEFAULT_TOLERANCE) -> None:
        self.expected = expected
        self.actual = actual
        self.tolerance = tolerance

        expected_cells = comparable_cells(expected)
        actual_cells = comparable_cells(actual)
        shared = expected_cells.keys() & actual_cells.keys()
        self._missing = sorted(expected_cells.keys() - actual_cells.keys())
        self._unmatched = sorted(actual_cells.keys() - expected_cells.keys())
        self._diff = DeepDiff(_as_mapping({cell: expected_cells[cell] for cell in shared}),
                              _as_mapping({cell: actual_cells[cell] for cell in shared}),
                              math_epsilon=tolerance)
        logger.debug(self._diff)

    @property
    def diff(self) -> DeepDiff:
        return self._diff

    @property
    def missing_cells(self) -> List[str]:
        """Cells of the expected document that the actual one does not report."""
        return ["/".join(cell) for cell in self._missing]

    @property
    def unmatched_cells(self) -> List[str]:
        return ["/".join(cell) for cell in self._unmatched]

    def are_equivalent(self) -> bool:
        return self._diff == {}

    def deviations(self) -> Dict[str, Tuple[float, float]]:
        """cell -> (expected, actual) for every compared cell outside the tolerance."""
        changed = self._diff.get("values_changed", {})
        out = {}
        for path, change in changed.items():
            cell = path[len("root['"):-len("']")]
            out[cell] = (change["old_value"], change["new_value"])
        return out

    def to_json(self) -> str:
        base = {
            "equivalent": self.are_equivalent(),
            "tolerance": self.tolerance,
            "deviations": {cell: {"expected": expected, "actual": actual}
                           for cell, (expected, actual) in self.deviations().items()},
            "missing_cells": self.missing_cells,
            "unmatched_cells": self.unmatched_cells,
        }
        return json.dumps(base, indent=2)

    def __str__(self) -> str:
        compared = len(comparable_cells(self.actual)) - len(self._unmatched)
        lines = [f"{compared} cell(s) compared with tolerance {self.tolerance:.2%}; "
                 f"{len(self.deviations())} outside it; {len(self._missing)} expected cell(s) not reported."]
        for cell, (expected, actual) in self.deviations().items():
            lines.append(f"  {cell}: expected {expected:.2%}, got {actual:.2%}")
        return "\n".join(lines)
