import logging
from abc import ABC, abstractmethod
from typing import Iterable, Type

from mqtt_ids.data import FeatureLevel, MqttMessage, PacketFeatureRecord, ParsedPacket
from mqtt_ids.dataset import FeatureTable
from mqtt_ids.flows import FlowConfig, assemble_biflows, assemble_uniflows
from mqtt_ids.labels import LabelRuleSet, apply_label_rules

logger = logging.getLogger(__name__)

_NO_MQTT = MqttMessage(message_type=0, message_length=0)


class UnknownFeatureLevelException(Exception):
    def __init__(self, level, original_exception) -> None:
        super().__init__(f"The feature level '{level}' is unknown or unsupported. "
                         f"Details: {str(original_exception)}")


def extract_packet_features(pkt: ParsedPacket, labels: LabelRuleSet) -> PacketFeatureRecord:
    # Only the first MQTT message of a segment is represented; the loader counts the rest.
    mqtt = pkt.mqtt_messages[0] if pkt.mqtt_messages else _NO_MQTT
    flags = pkt.tcp_flags
    is_attack, traffic_class = apply_label_rules(pkt.ip_src, pkt.ip_dest, labels, pkt.prt_src, pkt.prt_dst,
                                                 int(pkt.transport))
    return PacketFeatureRecord(
        ip_src=pkt.ip_src,
        ip_dest=pkt.ip_dest,
        protocol=pkt.protocol_name,
        ttl=pkt.ttl,
        ip_len=pkt.ip_len,
        ip_flag_df=int(pkt.ip_flag_df),
        ip_flag_mf=int(pkt.ip_flag_mf),
        ip_flag_rb=int(pkt.ip_flag_rb),
        prt_src=pkt.prt_src,
        prt_dst=pkt.prt_dst,
        tcp_flag_res=int(flags.res),
        tcp_flag_ns=int(flags.ns),
        tcp_flag_cwr=int(flags.cwr),
        tcp_flag_ecn=int(flags.ecn),
        tcp_flag_urg=int(flags.urg),
        tcp_flag_ack=int(flags.ack),
        tcp_flag_push=int(flags.push),
        tcp_flag_reset=int(flags.reset),
        tcp_flag_syn=int(flags.syn),
        tcp_flag_fin=int(flags.fin),
        mqtt_messagetype=mqtt.message_type,
        mqtt_messagelength=mqtt.message_length,
        mqtt_flag_uname=int(mqtt.flag_uname),
        mqtt_flag_passwd=int(mqtt.flag_passwd),
        mqtt_flag_retain=int(mqtt.flag_retain),
        mqtt_flag_qos=mqtt.flag_qos,
        mqtt_flag_willflag=int(mqtt.flag_willflag),
        mqtt_flag_clean=int(mqtt.flag_clean),
        mqtt_flag_reserved=int(mqtt.flag_reserved),
        is_attack=is_attack,
        traffic_class=traffic_class,
    )


class BaseFeatureExtractor(ABC):
    level: FeatureLevel

    def __init__(self, labels: LabelRuleSet, flow_config: FlowConfig = FlowConfig()) -> None:
        self.labels = labels
        self.flow_config = flow_config

    @abstractmethod
    def extract(self, packets: Iterable[ParsedPacket], source: str = "") -> FeatureTable:
        pass


class PacketFeatureExtractor(BaseFeatureExtractor):
    """One row per IPv4 packet."""
    level = FeatureLevel.PACKET

    def extract(self, packets: Iterable[ParsedPacket], source: str = "") -> FeatureTable:
        records = [extract_packet_features(packet, self.labels) for packet in packets]
        return FeatureTable.from_records(self.level, records, source)


class UniflowFeatureExtractor(BaseFeatureExtractor):
    """One row per 5-tuple flow; TCP and UDP packets only."""
    level = FeatureLevel.UNIFLOW

    def extract(self, packets: Iterable[ParsedPacket], source: str = "") -> FeatureTable:
        records = assemble_uniflows(packets, self.labels, self.flow_config)
        return FeatureTable.from_records(self.level, records, source)


class BiflowFeatureExtractor(BaseFeatureExtractor):
    """One row per flow and its reverse, with forward and backward statistics."""
    level = FeatureLevel.BIFLOW

    def extract(self, packets: Iterable[ParsedPacket], source: str = "") -> FeatureTable:
        records = assemble_biflows(packets, self.labels, self.flow_config)
        return FeatureTable.from_records(self.level, records, source)


FEATURE_EXTRACTOR_MAPPING: dict[FeatureLevel, Type[BaseFeatureExtractor]] = {
    FeatureLevel.PACKET: PacketFeatureExtractor,
    FeatureLevel.UNIFLOW: UniflowFeatureExtractor,
    FeatureLevel.BIFLOW: BiflowFeatureExtractor,
}


def get_feature_extractor(level: FeatureLevel) -> Type[BaseFeatureExtractor]:
    try:
        return FEATURE_EXTRACTOR_MAPPING[level]
    except KeyError as e:
        raise UnknownFeatureLevelException(level, e)
