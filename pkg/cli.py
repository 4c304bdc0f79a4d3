import json
import logging
import sys
from typing import List, Optional, Sequence, Tuple

import click

from mqtt_ids.analyzer import StreamingAnalyzer
from mqtt_ids.classifiers import (ClassifierKind, ClassifierSpec, InvalidHyperparameterException, fit, load_model,
                                  parse_hyperparameter_overrides, save_model)
from mqtt_ids.comparison import DEFAULT_TOLERANCE, ReportComparison
from mqtt_ids.data import DataException, FeatureLevel, Scenario
from mqtt_ids.data_loader import CaptureLoader
from mqtt_ids.dataset import FeatureTable, classifier_view, concat_tables, read_feature_csv, write_feature_csv
from mqtt_ids.evaluation import DEFAULT_FOLDS, EvalReport, cross_validate, evaluate_model, holdout_evaluate
from mqtt_ids.features import get_feature_extractor
from mqtt_ids.flows import FlowConfig
from mqtt_ids.labels import LabelRuleSet, load_label_rules
from mqtt_ids.manifest import RunManifest, write_sidecar
from mqtt_ids.packets import DEFAULT_MQTT_PORTS
from mqtt_ids.reference_results import reference_document
from mqtt_ids.report_generator import ReportDocument, ReportGenerator, render_report
from mqtt_ids.synth import ScenarioConfig, describe, label_rules, labels_path, write_capture

logger = logging.getLogger(__name__)

EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_MISMATCH = 3

SEED_ENVVAR = "MQTTIDS_SEED"

seed_option = click.option("--seed", type=int, default=0, show_default=True, envvar=SEED_ENVVAR,
                           help=f"Random seed. Defaults to ${SEED_ENVVAR} when it is set.")
features_option = click.option("--features", "features", multiple=True, required=True,
                               type=click.Path(exists=True, dir_okay=False),
                               help="Feature csv. Repeat to concatenate several captures of one level.")
rules_option = click.option("--rules", type=click.Path(exists=True, dir_okay=False),
                            help="Label-rule json; needed for csv files that carry is_attack but no class.")
format_option = click.option("--format", "output_format", type=click.Choice(["json", "text"]), default="json",
                             show_default=True)
out_option = click.option("--out", type=click.Path(dir_okay=False),
                          help="Output file. Results go to stdout when omitted.")


# Click is a python library that streamlines creating command line interfaces
# in a more composable & readable way than argparse.
# https://click.palletsprojects.com/en/8.1.x/api/
# This sets up the group of cli entrypoints: synth -> extract -> train/evaluate/crossval/holdout -> report/compare.
@click.group()
@click.option('-v', '--verbose', count=True)
def cli(verbose: int):
    if verbose == 1:
        logging.basicConfig(level=logging.INFO)
    if verbose >= 2:
        logging.basicConfig(level=logging.DEBUG)


def _emit(text: str, out: Optional[str]) -> None:
    if out is None:
        click.echo(text, nl=not text.endswith("\n"))
        return
    with open(out, 'w') as output_file:
        output_file.write(text)


def _load_rules(rules: Optional[str]) -> Optional[LabelRuleSet]:
    return load_label_rules(rules) if rules else None


def _load_features(paths: Sequence[str], rules: Optional[str], drop_mqtt_scalars: bool) -> FeatureTable:
    labels = _load_rules(rules)
    return classifier_view(concat_tables([read_feature_csv(path, labels) for path in paths]), drop_mqtt_scalars)


def _classifier_spec(kind: str, seed: int, params: Tuple[str, ...]) -> ClassifierSpec:
    try:
        overrides = parse_hyperparameter_overrides(params)
        return ClassifierSpec.create(kind, seed=seed, **overrides)
    except (ValueError, InvalidHyperparameterException) as e:
        raise click.BadParameter(str(e), param_hint="'--param'")


def _report_output(report: EvalReport, manifest: RunManifest, output_format: str) -> str:
    if output_format == "text":
        key = (report.classifier_kind, report.level)
        return render_report({key: report}, manifest.to_dict()).to_text()
    return json.dumps({**report.to_dict(), "manifest": manifest.to_dict()}, indent=2) + "\n"


@cli.command()
@click.option("--scenario", type=click.Choice([scenario.value for scenario in Scenario]), default="normal",
              show_default=True)
@seed_option
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Path of the pcap to write.")
@click.option("--duration", type=float, default=ScenarioConfig.duration, show_default=True,
              help="Seconds of benign traffic.")
@click.option("--sensors", type=int, default=ScenarioConfig.sensor_count, show_default=True)
@click.option("--attack-count", type=int, default=ScenarioConfig.attack_count, show_default=True,
              help="Brute-force attempts or SSH connections. Scans probe every port instead.")
@click.option("--rules-out", type=click.Path(dir_okay=False),
              help="Also write the label rules matching the generated capture.")
def synth(scenario: str, seed: int, out: str, duration: float, sensors: int, attack_count: int,
          rules_out: Optional[str]):
    """Generate a labelled synthetic capture of an MQTT sensor network, under attack or not.

    Writes the pcap to OUT, its per-packet ground truth to OUT.labels.json and the run manifest to
    OUT.manifest.json."""
    cfg = ScenarioConfig(scenario=Scenario(scenario), duration=duration, sensor_count=sensors,
                         attack_count=attack_count, seed=seed)
    roles = describe(cfg)
    logger.info(f"Scenario {cfg.scenario.value} addresses: "
                + ", ".join(f"{ip} ({role})" for ip, role in roles.items()))
    truth = write_capture(cfg, out, rules_out)
    outputs = [out, str(labels_path(out))] + ([rules_out] if rules_out else [])
    manifest = RunManifest(command="synth", seed=seed, rules=rules_out, outputs=outputs,
                           options={"scenario": cfg.to_dict(), "roles": roles,
                                    "label_rules": label_rules(cfg).to_dict()})
    write_sidecar(manifest, out)
    click.echo(f"Wrote {len(truth)} packets ({sum(truth.is_attack)} attack) to {out}", err=True)


@cli.command()
@click.option("--level", type=click.Choice([level.value for level in FeatureLevel]), required=True)
@click.option("--input", "input_path", type=click.Path(exists=True, dir_okay=False), required=True,
              help="pcap file to extract features from.")
@click.option("--rules", type=click.Path(exists=True, dir_okay=False),
              help="Label-rule json. Without it every row is labelled Benign.")
@click.option("--out", type=click.Path(dir_okay=False), help="Feature csv. Written to stdout when omitted.")
@click.option("--mqtt-port", "mqtt_ports", type=int, multiple=True,
              help=f"TCP port carrying MQTT. Repeatable; defaults to {sorted(DEFAULT_MQTT_PORTS)}.")
@click.option("--idle-timeout", type=float, default=None,
              help="Seconds of silence that end a flow. Flows span the whole capture when omitted.")
def extract(level: str, input_path: str, rules: Optional[str], out: Optional[str], mqtt_ports: Tuple[int, ...],
            idle_timeout: Optional[float]):
    """Extract packet, unidirectional-flow or bidirectional-flow features from a capture into a csv."""
    labels = _load_rules(rules) or LabelRuleSet.for_scenario(Scenario.NORMAL)
    ports = frozenset(mqtt_ports) or DEFAULT_MQTT_PORTS
    loader = CaptureLoader(input_path, ports)
    extractor = get_feature_extractor(FeatureLevel(level))(labels, FlowConfig(idle_timeout=idle_timeout))
    table = StreamingAnalyzer(loader, extractor).start()
    logger.info(f"Capture diagnostics for {input_path}: {loader.diagnostics.as_dict()}")

    if out is None:
        write_feature_csv(table, sys.stdout)
        return
    write_feature_csv(table, out)
    manifest = RunManifest(command="extract", inputs=[input_path], level=level, rules=rules, outputs=[out],
                           options={"mqtt_ports": sorted(ports), "idle_timeout": idle_timeout,
                                    "diagnostics": loader.diagnostics.as_dict()})
    write_sidecar(manifest, out)


@cli.command()
@click.option("--model", "kind", type=click.Choice([kind.value for kind in ClassifierKind]), required=True)
@features_option
@rules_option
@seed_option
@click.option("--param", "params", multiple=True, help="Hyperparameter override as key=value. Repeatable.")
@click.option("--drop-mqtt-scalars", is_flag=True, help="Also drop mqtt_messagetype and mqtt_messagelength.")
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Path of the model json to write.")
def train(kind: str, features: Tuple[str, ...], rules: Optional[str], seed: int, params: Tuple[str, ...],
          drop_mqtt_scalars: bool, out: str):
    """Fit a classifier on feature csv files and save it as json."""
    spec = _classifier_spec(kind, seed, params)
    table = _load_features(features, rules, drop_mqtt_scalars)
    model = fit(spec, table)
    manifest = RunManifest(command="train", inputs=list(features), level=table.level.value, rules=rules,
                           classifier=spec.to_dict(), seed=seed, outputs=[out],
                           options={"drop_mqtt_scalars": drop_mqtt_scalars})
    save_model(model, out, manifest.to_dict())


@cli.command()
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False), required=True,
              help="Model json written by `train`.")
@features_option
@rules_option
@click.option("--drop-mqtt-scalars", is_flag=True)
@format_option
@out_option
def evaluate(model_path: str, features: Tuple[str, ...], rules: Optional[str], drop_mqtt_scalars: bool,
             output_format: str, out: Optional[str]):
    """Evaluate a saved model on held-out feature csv files."""
    model = load_model(model_path)
    table = _load_features(features, rules, drop_mqtt_scalars)
    report = evaluate_model(model, table)
    manifest = RunManifest(command="evaluate", inputs=[model_path] + list(features), level=table.level.value,
                           rules=rules, classifier=model.spec.to_dict(), seed=model.spec.seed,
                           outputs=[out] if out else [], options={"drop_mqtt_scalars": drop_mqtt_scalars})
    _emit(_report_output(report, manifest, output_format), out)


@cli.command()
@click.option("--model", "kind", type=click.Choice([kind.value for kind in ClassifierKind]), required=True)
@features_option
@rules_option
@click.option("--folds", type=click.IntRange(min=2), default=DEFAULT_FOLDS, show_default=True)
@seed_option
@click.option("--param", "params", multiple=True, help="Hyperparameter override as key=value. Repeatable.")
@click.option("--drop-mqtt-scalars", is_flag=True)
@format_option
@out_option
def crossval(kind: str, features: Tuple[str, ...], rules: Optional[str], folds: int, seed: int,
             params: Tuple[str, ...], drop_mqtt_scalars: bool, output_format: str, out: Optional[str]):
    """Stratified k-fold cross-validation of a classifier on feature csv files."""
    spec = _classifier_spec(kind, seed, params)
    table = _load_features(features, rules, drop_mqtt_scalars)
    report = cross_validate(spec, table, folds, seed)
    manifest = RunManifest(command="crossval", inputs=list(features), level=table.level.value, rules=rules,
                           classifier=spec.to_dict(), seed=seed, outputs=[out] if out else [],
                           options={"folds": folds, "drop_mqtt_scalars": drop_mqtt_scalars})
    _emit(_report_output(report, manifest, output_format), out)


@cli.command()
@click.option("--model", "kind", type=click.Choice([kind.value for kind in ClassifierKind]), required=True)
@features_option
@rules_option
@click.option("--train-fraction", type=click.FloatRange(0, 1, min_open=True, max_open=True), default=0.75,
              show_default=True)
@seed_option
@click.option("--param", "params", multiple=True, help="Hyperparameter override as key=value. Repeatable.")
@click.option("--drop-mqtt-scalars", is_flag=True)
@format_option
@out_option
def holdout(kind: str, features: Tuple[str, ...], rules: Optional[str], train_fraction: float, seed: int,
            params: Tuple[str, ...], drop_mqtt_scalars: bool, output_format: str, out: Optional[str]):
    """Fit on a stratified share of the rows and evaluate on the rest."""
    spec = _classifier_spec(kind, seed, params)
    table = _load_features(features, rules, drop_mqtt_scalars)
    report = holdout_evaluate(spec, table, train_fraction, seed)
    manifest = RunManifest(command="holdout", inputs=list(features), level=table.level.value, rules=rules,
                           classifier=spec.to_dict(), seed=seed, outputs=[out] if out else [],
                           options={"train_fraction": train_fraction, "drop_mqtt_scalars": drop_mqtt_scalars})
    _emit(_report_output(report, manifest, output_format), out)


@cli.command()
@click.option("--in", "input_dir", type=click.Path(exists=True, file_okay=False), required=True,
              help="Directory of evaluation report json files.")
@click.option("--format", "output_format", type=click.Choice(["json", "text"]), default="text", show_default=True)
@out_option
def report(input_dir: str, output_format: str, out: Optional[str]):
    """Combine evaluation reports into overall-accuracy, per-class, aggregate and trend tables."""
    generator = ReportGenerator()
    generator.load_directory(input_dir)
    if not generator.reports:
        logger.warning(f"No evaluation reports were found in {input_dir}.")
    manifest = RunManifest(command="report", inputs=[input_dir], outputs=[out] if out else [])
    document = generator.render(manifest.to_dict())
    _emit(document.to_text() if output_format == "text" else document.to_json(), out)


@cli.command()
@click.option("--in", "input_path", type=click.Path(exists=True, dir_okay=False), required=True,
              help="Report json written by `report`.")
@click.option("--reference", type=click.Path(exists=True, dir_okay=False),
              help="Expected report json. Defaults to the published results.")
@click.option("--tolerance", type=click.FloatRange(min=0), default=DEFAULT_TOLERANCE, show_default=True,
              help="Largest accepted absolute difference, as a fraction.")
@click.option("--format", "output_format", type=click.Choice(["json", "text"]), default="text", show_default=True)
def compare(input_path: str, reference: Optional[str], tolerance: float, output_format: str):
    """Compare a rendered report with a reference report. Exits with status 3 when they differ."""
    expected = ReportDocument.load(reference) if reference else reference_document()
    comparison = ReportComparison(expected, ReportDocument.load(input_path), tolerance)
    click.echo(comparison.to_json() if output_format == "json" else str(comparison))
    return 0 if comparison.are_equivalent() else EXIT_MISMATCH


@cli.command()
def available_reports():
    reports = ReportGenerator.available_reports()
    for report_name, description in reports.items():
        click.echo(f"{report_name}: {description}")


def run(argv: Optional[List[str]] = None) -> int:
    """Run the cli and return its exit status: 0 success, 1 usage error, 2 data error, 3 comparison mismatch."""
    try:
        result = cli.main(args=argv, prog_name="mqttids", standalone_mode=False)
    except click.UsageError as e:
        e.show()
        return EXIT_USAGE
    except click.ClickException as e:
        e.show()
        return e.exit_code
    except click.Abort:
        click.echo("Aborted!", err=True)
        return EXIT_USAGE
    except DataException as e:
        click.echo(f"Error: {e}", err=True)
        return EXIT_DATA
    return result if isinstance(result, int) else 0


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
