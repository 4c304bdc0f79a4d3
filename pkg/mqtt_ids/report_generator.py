import inspect
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Dict, Iterable, List, Optional, Type, Union

import mqtt_ids.reports
from mqtt_ids.data import DataException
from mqtt_ids.evaluation import EvalReport
from mqtt_ids.reports import BaseReport, ReportKey

logger = logging.getLogger(__name__)


class UnsupportedReportTypeException(Exception):
    def __init__(self, report_name, original_exception) -> None:
        super().__init__(f"The report type '{report_name}' is unknown or unavailable. "
                         f"Details: {str(original_exception)}")


class InvalidReportDocumentException(DataException):
    def __init__(self, source, reason) -> None:
        super().__init__(f"'{source}' is not a report document: {reason}")


@dataclass
class ReportDocument:
    """The rendered reports: json sections keyed by report, plus the manifest of the run that produced them."""
    sections: Dict[str, dict]
    manifest: Optional[dict] = None
    inputs: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"manifest": self.manifest, "inputs": list(self.inputs), "reports": self.sections}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_text(self) -> str:
        blocks = []
        for report_class in ReportGenerator.report_classes():
            if report_class.key in self.sections:
                blocks.append(report_class.format(self.sections[report_class.key]))
        return "\n\n".join(blocks) + "\n"

    @classmethod
    def from_dict(cls, source_dict: dict, source: str = "<inline>") -> "ReportDocument":
        if not isinstance(source_dict, dict) or not isinstance(source_dict.get("reports"), dict):
            raise InvalidReportDocumentException(source, "missing the 'reports' object")
        return cls(sections=source_dict["reports"], manifest=source_dict.get("manifest"),
                   inputs=list(source_dict.get("inputs", [])))

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ReportDocument":
        try:
            with open(path) as document_file:
                return cls.from_dict(json.load(document_file), source=str(path))
        except json.JSONDecodeError as e:
            raise InvalidReportDocumentException(path, f"not valid json. Details: {e}")


class ReportGenerator:
    _available_reports: Optional[Dict[str, Type[BaseReport]]] = None

    def __init__(self, reports: Optional[Dict[ReportKey, EvalReport]] = None) -> None:
        self._data: Dict[ReportKey, EvalReport] = dict(reports or {})
        self._inputs: List[str] = []

    @property
    def reports(self) -> Dict[ReportKey, EvalReport]:
        return self._data

    def add(self, report: EvalReport, source: str = "<inline>") -> None:
        if report.classifier_kind is None or report.level is None:
            logger.error(f"Evaluation report from {source} names no classifier or feature level. Skipping it.")
            return
        key = (report.classifier_kind, report.level)
        if key in self._data:
            logger.warning(f"A second {key[0]} / {key[1].value} report was found in {source}; it replaces the first.")
        self._data[key] = report
        self._inputs.append(source)

    def update(self, path: Union[str, Path]) -> None:
        """Load one evaluation report file. Files that cannot be loaded are logged and skipped."""
        try:
            with open(path) as report_file:
                source_dict = json.load(report_file)
            report = EvalReport.from_dict(source_dict)
        except json.JSONDecodeError as e:
            logger.error(f"Report {path} could not be loaded due to invalid json. Skipping it. Details: {e}")
            return
        except (KeyError, TypeError, ValueError, AttributeError) as e:
            logger.error(f"Report {path} could not be loaded due to a missing or invalid field. Skipping it. "
                         f"Details: {e!r}")
            return
        self.add(report, source=str(path))

    def load_directory(self, directory: Union[str, Path]) -> None:
        for path in sorted(Path(directory).glob("*.json")):
            if path.name.endswith(".manifest.json"):
                continue
            self.update(path)

    def render(self, manifest: Optional[dict] = None) -> ReportDocument:
        sections = {}
        for report_class in self.report_classes():
            sections[report_class.key] = report_class(self._data).to_dict()
        return ReportDocument(sections=sections, manifest=manifest, inputs=list(self._inputs))

    @classmethod
    def _find_available_reports(cls) -> None:
        # Discovery mechanism for report plugins: any BaseReport subclass in mqtt_ids.reports is picked up.
        report_module = "mqtt_ids.reports"
        base_report = mqtt_ids.reports.BaseReport
        cls._available_reports = {name: obj for name, obj in inspect.getmembers(sys.modules[report_module])
                                  if inspect.isclass(obj) and issubclass(obj, base_report) and obj is not base_report}
        logger.info(f"Reports found: {list(cls._available_reports.keys())}")

    @classmethod
    def report_classes(cls) -> List[Type[BaseReport]]:
        """Available reports in module definition order, which is also the order of the text rendering."""
        if cls._available_reports is None:
            cls._find_available_reports()
        assert cls._available_reports is not None
        definition_order = list(vars(sys.modules["mqtt_ids.reports"]))
        return sorted(cls._available_reports.values(), key=lambda report: definition_order.index(report.__name__))

    @classmethod
    def available_reports(cls) -> Dict[str, Optional[str]]:
        if cls._available_reports is None:
            cls._find_available_reports()

        # This satisfies the type checker that we can move forward.
        assert cls._available_reports is not None
        return {name: report.__doc__ for name, report in cls._available_reports.items()}

    def generate_report(self, report_name: str, export_file: IO) -> None:
        if self._available_reports is None:
            self._find_available_reports()
        assert self._available_reports is not None
        try:
            report_class = self._available_reports[report_name]
        except KeyError as e:
            raise UnsupportedReportTypeException(report_name, e)

        report = report_class(self._data)
        report.compute()
        report.export(output_file=export_file)


def render_report(reports: Dict[ReportKey, EvalReport], manifest: Optional[dict] = None) -> ReportDocument:
    """Render evaluation reports keyed by (classifier kind, feature level) into one document."""
    return ReportGenerator(reports).render(manifest)


def reports_from_files(paths: Iterable[Union[str, Path]]) -> Dict[ReportKey, EvalReport]:
    generator = ReportGenerator()
    for path in paths:
        generator.update(path)
    return generator.reports

