import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import AbstractSet, FrozenSet, Optional, Tuple, Union

from mqtt_ids.data import SCENARIO_ATTACK_CLASS, DataException, Scenario, TrafficClass

logger = logging.getLogger(__name__)


class InvalidLabelRulesException(DataException):
    def __init__(self, source, reason) -> None:
        super().__init__(f"The label rules from '{source}' are invalid: {reason}")


@dataclass(frozen=True)
class LabelPredicates:
    """Optional narrowing of an attacker match: empty sets place no constraint."""
    ports: FrozenSet[int] = frozenset()
    protocols: FrozenSet[int] = frozenset()

    def matches(self, prt_src: int, prt_dst: int, proto: int) -> bool:
        if self.ports and prt_src not in self.ports and prt_dst not in self.ports:
            return False
        if self.protocols and proto not in self.protocols:
            return False
        return True


@dataclass(frozen=True)
class LabelRuleSet:
    scenario: Scenario
    attacker_ips: FrozenSet[str] = frozenset()
    attack_class: TrafficClass = TrafficClass.BENIGN
    extra_predicates: Optional[LabelPredicates] = None
    source: str = field(default="<inline>", compare=False)

    def __post_init__(self):
        if self.scenario == Scenario.NORMAL and self.attacker_ips:
            raise InvalidLabelRulesException(self.source, "the normal scenario cannot name attacker addresses")
        if self.scenario != Scenario.NORMAL and self.attack_class == TrafficClass.BENIGN:
            raise InvalidLabelRulesException(self.source, f"scenario {self.scenario.value} needs an attack class")

    @classmethod
    def for_scenario(cls, scenario: Scenario, attacker_ips: AbstractSet[str] = frozenset()) -> "LabelRuleSet":
        if scenario == Scenario.NORMAL:
            attacker_ips = frozenset()
        return cls(scenario=scenario, attacker_ips=frozenset(attacker_ips),
                   attack_class=SCENARIO_ATTACK_CLASS[scenario])

    @classmethod
    def from_dict(cls, source_dict: dict, source: str = "<inline>") -> "LabelRuleSet":
        try:
            scenario = Scenario(source_dict["scenario"])
            attack_class = TrafficClass(source_dict.get("attack_class", SCENARIO_ATTACK_CLASS[scenario].value))
            attacker_ips = frozenset(source_dict.get("attacker_ips", []))
        except KeyError as e:
            raise InvalidLabelRulesException(source, f"missing field {e}")
        except ValueError as e:
            raise InvalidLabelRulesException(source, e)

        predicates = None
        if "extra_predicates" in source_dict:
            raw = source_dict["extra_predicates"] or {}
            predicates = LabelPredicates(ports=frozenset(int(p) for p in raw.get("ports", [])),
                                         protocols=frozenset(int(p) for p in raw.get("protocols", [])))
        return cls(scenario=scenario, attacker_ips=attacker_ips, attack_class=attack_class,
                   extra_predicates=predicates, source=source)

    def to_dict(self) -> dict:
        out = {
            "scenario": self.scenario.value,
            "attacker_ips": sorted(self.attacker_ips),
            "attack_class": self.attack_class.value,
        }
        if self.extra_predicates is not None:
            out["extra_predicates"] = {"ports": sorted(self.extra_predicates.ports),
                                       "protocols": sorted(self.extra_predicates.protocols)}
        return out


def load_label_rules(path: Union[str, Path]) -> LabelRuleSet:
    try:
        with open(path) as rules_file:
            source_dict = json.load(rules_file)
    except json.JSONDecodeError as e:
        raise InvalidLabelRulesException(path, f"not valid json. Details: {e}")
    if not isinstance(source_dict, dict):
        raise InvalidLabelRulesException(path, "expected a json object")
    return LabelRuleSet.from_dict(source_dict, source=str(path))


def save_label_rules(rules: LabelRuleSet, path: Union[str, Path]) -> None:
    with open(path, 'w') as rules_file:
        json.dump(rules.to_dict(), rules_file, indent=2, sort_keys=True)
        rules_file.write("\n")


def apply_label_rules(ip_src: str, ip_dest: str, rules: LabelRuleSet,
                      prt_src: int = 0, prt_dst: int = 0, proto: int = 0) -> Tuple[int, str]:
    """Returns (is_attack, class). Ports and protocol only matter when the rules carry extra predicates."""
    is_attack = ip_src in rules.attacker_ips or ip_dest in rules.attacker_ips
    if is_attack and rules.extra_predicates is not None:
        is_attack = rules.extra_predicates.matches(prt_src, prt_dst, proto)
    if is_attack:
        return 1, rules.attack_class.value
    return 0, TrafficClass.BENIGN.value
