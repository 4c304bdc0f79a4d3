import json

import pytest

from mqtt_ids.data import Scenario, TrafficClass
from mqtt_ids.labels import (InvalidLabelRulesException, LabelPredicates, LabelRuleSet, apply_label_rules,
                             load_label_rules, save_label_rules)

ATTACKER = "192.168.1.66"
BROKER = "192.168.1.10"
SENSOR = "192.168.1.101"

SCAN_RULES = {
    "scenario": "scan_A",
    "attacker_ips": [ATTACKER],
}


def test_WHEN_attacker_is_source_or_destination_THEN_attack_class():
    rules = LabelRuleSet.for_scenario(Scenario.SPARTA, {ATTACKER})
    assert apply_label_rules(ATTACKER, BROKER, rules) == (1, "Sparta")
    assert apply_label_rules(BROKER, ATTACKER, rules) == (1, "Sparta")
    assert apply_label_rules(SENSOR, BROKER, rules) == (0, "Benign")


def test_WHEN_normal_scenario_THEN_everything_benign():
    rules = LabelRuleSet.for_scenario(Scenario.NORMAL, {ATTACKER})
    assert rules.attacker_ips == frozenset()
    assert apply_label_rules(ATTACKER, BROKER, rules) == (0, "Benign")


def test_WHEN_normal_scenario_names_attackers_THEN_invalid():
    with pytest.raises(InvalidLabelRulesException):
        LabelRuleSet(scenario=Scenario.NORMAL, attacker_ips=frozenset({ATTACKER}))


def test_WHEN_attack_scenario_without_attack_class_THEN_invalid():
    with pytest.raises(InvalidLabelRulesException):
        LabelRuleSet(scenario=Scenario.MQTT_BF, attacker_ips=frozenset({ATTACKER}))


def test_WHEN_predicates_given_THEN_only_matching_attacker_traffic_is_attack():
    rules = LabelRuleSet(scenario=Scenario.SCAN_SU, attacker_ips=frozenset({ATTACKER}),
                         attack_class=TrafficClass.SCAN_SU, extra_predicates=LabelPredicates(protocols=frozenset({17})))
    assert apply_label_rules(ATTACKER, BROKER, rules, 40000, 53, 17) == (1, "Scan_sU")
    assert apply_label_rules(ATTACKER, BROKER, rules, 40000, 22, 6) == (0, "Benign")


def test_WHEN_rules_loaded_from_json_THEN_attack_class_defaults_from_scenario(tmp_path):
    path = tmp_path / "rules.json"
    path.write_text(json.dumps(SCAN_RULES))
    rules = load_label_rules(path)
    assert rules.attack_class == TrafficClass.SCAN_A
    assert rules.attacker_ips == frozenset({ATTACKER})


def test_WHEN_rules_saved_THEN_loading_gives_equal_rules(tmp_path):
    rules = LabelRuleSet(scenario=Scenario.MQTT_BF, attacker_ips=frozenset({ATTACKER}),
                         attack_class=TrafficClass.MQTT_BF,
                         extra_predicates=LabelPredicates(ports=frozenset({1883}), protocols=frozenset({6})))
    path = tmp_path / "rules.json"
    save_label_rules(rules, path)
    assert load_label_rules(path) == rules


def test_WHEN_rules_file_invalid_THEN_data_error(tmp_path):
    path = tmp_path / "rules.json"
    path.write_text("{not json")
    with pytest.raises(InvalidLabelRulesException):
        load_label_rules(path)
    path.write_text(json.dumps({"scenario": "flood"}))
    with pytest.raises(InvalidLabelRulesException):
        load_label_rules(path)
    path.write_text(json.dumps({"attacker_ips": [ATTACKER]}))
    with pytest.raises(InvalidLabelRulesException):
        load_label_rules(path)
