import io
import json

import pytest

from mqtt_ids.data import FeatureLevel
from mqtt_ids.evaluation import EvalReport, confusion_matrix
from mqtt_ids.reference_results import reference_document, reference_reports
from mqtt_ids.report_generator import (InvalidReportDocumentException, ReportDocument, ReportGenerator,
                                       UnsupportedReportTypeException, render_report, reports_from_files)
from mqtt_ids.reports import WEIGHTED_ROW, ordered_kinds

# Means across the seven classifiers of the published weighted metrics, in percent.
MEAN_WEIGHTED_RECALL = {"packet": 75.31, "uniflow": 93.77, "biflow": 98.85}
MEAN_WEIGHTED_PRECISION = {"packet": 72.37, "uniflow": 97.19, "biflow": 99.04}

REPORT_NAMES = ["AggregateReport", "ClassMetricsReport", "OverallAccuracyReport", "TrendReport"]


def small_report(kind: str, level: FeatureLevel) -> EvalReport:
    cm = confusion_matrix(["Benign", "Benign", "MQTT_BF", "MQTT_BF"], ["Benign", "MQTT_BF", "MQTT_BF", "MQTT_BF"])
    return EvalReport.from_confusion_matrix(cm, classifier={"kind": kind}, level=level)


def test_WHEN_reference_results_rendered_THEN_aggregates_match_published_means():
    aggregates = render_report(reference_reports()).sections["aggregates"]
    assert list(aggregates) == ["packet", "uniflow", "biflow"]
    for level, mean in MEAN_WEIGHTED_RECALL.items():
        assert aggregates[level]["recall"] * 100 == pytest.approx(mean, abs=0.005)
        assert aggregates[level]["classifiers"] == 7
    for level, mean in MEAN_WEIGHTED_PRECISION.items():
        assert aggregates[level]["precision"] * 100 == pytest.approx(mean, abs=0.005)


def test_WHEN_reference_results_rendered_THEN_trends_rise_for_mqtt_bf_recall():
    trends = reference_document().sections["trends"]
    for kind in ("knn", "dt", "rf", "svm-rbf", "nb", "svm-linear"):
        packet, uniflow, biflow = trends[kind]["MQTT_BF_recall"]
        assert packet < uniflow and packet < biflow
    assert trends["knn"]["accuracy"] == pytest.approx([0.6913, 0.9968, 0.999])


def test_WHEN_reports_rendered_THEN_sections_follow_table_order():
    reports = {("nb", FeatureLevel.BIFLOW): small_report("nb", FeatureLevel.BIFLOW),
               ("lr", FeatureLevel.PACKET): small_report("lr", FeatureLevel.PACKET),
               ("lr", FeatureLevel.BIFLOW): small_report("lr", FeatureLevel.BIFLOW)}
    document = render_report(reports, manifest={"command": "report"})
    assert list(document.sections["overall_accuracy"]) == ["lr", "nb"]
    assert list(document.sections["overall_accuracy"]["lr"]) == ["packet", "biflow"]
    cells = document.sections["class_metrics"]["lr"]["packet"]
    assert list(cells) == ["Benign", "MQTT_BF", WEIGHTED_ROW]
    assert cells["Benign"]["recall"] == 0.5
    assert cells["MQTT_BF"]["precision"] == pytest.approx(2 / 3)
    assert document.sections["trends"]["nb"]["accuracy"] == [None, None, 0.75]
    assert ReportDocument.from_dict(json.loads(document.to_json())) == document


def test_WHEN_document_rendered_as_text_THEN_every_section_and_display_name_appears():
    text = reference_document().to_text()
    assert text.index("Overall detection accuracy") < text.index("Averages across classifiers")
    for heading in ("SVM (RBF Kernel)", "SVM (Linear Kernel)", "k-NN", "Recall Packet", "F1-score Bi",
                    "Trends across feature levels"):
        assert heading in text
    assert "69.13%" in text


def test_WHEN_kinds_ordered_THEN_published_order_then_unknown_sorted():
    assert ordered_kinds({"nb", "zz", "rf", "lr", "aa"}) == ["lr", "rf", "nb", "aa", "zz"]


def test_WHEN_available_reports_requested_THEN_all_report_types_found():
    available = ReportGenerator.available_reports()
    assert sorted(available) == REPORT_NAMES
    assert all(doc for doc in available.values())


def test_WHEN_single_report_generated_THEN_written_to_file():
    output = io.StringIO()
    ReportGenerator(reference_reports()).generate_report("OverallAccuracyReport", output)
    assert output.getvalue().startswith("Overall detection accuracy")
    with pytest.raises(UnsupportedReportTypeException):
        ReportGenerator().generate_report("ConfusionReport", output)


def test_WHEN_directory_loaded_THEN_bad_files_and_manifests_skipped(tmp_path, caplog):
    (tmp_path / "lr-packet.json").write_text(json.dumps(small_report("lr", FeatureLevel.PACKET).to_dict()))
    (tmp_path / "rf-biflow.json").write_text(json.dumps(small_report("rf", FeatureLevel.BIFLOW).to_dict()))
    (tmp_path / "broken.json").write_text("{")
    (tmp_path / "partial.json").write_text(json.dumps({"weighted": {}}))
    (tmp_path / "lr-packet.json.manifest.json").write_text(json.dumps({"command": "crossval"}))

    generator = ReportGenerator()
    generator.load_directory(tmp_path)
    assert sorted(generator.reports) == [("lr", FeatureLevel.PACKET), ("rf", FeatureLevel.BIFLOW)]
    assert "broken.json" in caplog.text and "partial.json" in caplog.text

    loaded = reports_from_files([tmp_path / "lr-packet.json"])
    assert loaded[("lr", FeatureLevel.PACKET)].overall_accuracy == 0.75


def test_WHEN_document_file_invalid_THEN_data_error(tmp_path):
    path = tmp_path / "report.json"
    path.write_text("[]")
    with pytest.raises(InvalidReportDocumentException):
        ReportDocument.load(path)
    path.write_text("{")
    with pytest.raises(InvalidReportDocumentException):
        ReportDocument.load(path)
