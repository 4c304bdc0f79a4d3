from __future__ import annotations

import logging
from dataclasses import astuple, dataclass, fields
from enum import Enum, IntEnum
from typing import Dict, Iterable, List, Optional, Tuple, Union

logger = logging.getLogger(__name__)


class DataException(Exception):
    """Base class for errors caused by the content of an input (a capture, a feature table, a model file)
    rather than by how the tool was invoked. The cli maps these to exit status 2."""


class TrafficClass(Enum):
    BENIGN = "Benign"
    SCAN_A = "Scan_A"
    SCAN_SU = "Scan_sU"
    SPARTA = "Sparta"
    MQTT_BF = "MQTT_BF"


CANONICAL_CLASS_ORDER: List[str] = [traffic_class.value for traffic_class in TrafficClass]


def canonical_class_order(labels: Iterable[str]) -> List[str]:
    """Known traffic classes in their canonical order, followed by any other labels alphabetically."""
    present = set(labels)
    known = [label for label in CANONICAL_CLASS_ORDER if label in present]
    return known + sorted(present - set(CANONICAL_CLASS_ORDER))


class Scenario(Enum):
    NORMAL = "normal"
    SCAN_A = "scan_A"
    SCAN_SU = "scan_sU"
    SPARTA = "sparta"
    MQTT_BF = "mqtt_bf"


SCENARIO_ATTACK_CLASS: Dict[Scenario, TrafficClass] = {
    Scenario.NORMAL: TrafficClass.BENIGN,
    Scenario.SCAN_A: TrafficClass.SCAN_A,
    Scenario.SCAN_SU: TrafficClass.SCAN_SU,
    Scenario.SPARTA: TrafficClass.SPARTA,
    Scenario.MQTT_BF: TrafficClass.MQTT_BF,
}


class Transport(IntEnum):
    OTHER = 0
    TCP = 6
    UDP = 17


class FeatureLevel(Enum):
    PACKET = "packet"
    UNIFLOW = "uniflow"
    BIFLOW = "biflow"


class ColumnType(Enum):
    TEXT = "text"
    INTEGER = "integer"
    DECIMAL = "decimal"


@dataclass(frozen=True)
class RawFrame:
    ts_sec: int
    ts_frac: int  # microseconds, or nanoseconds when the file magic says so
    captured_len: int
    original_len: int
    data: bytes
    nanosecond: bool = False

    @property
    def timestamp_ns(self) -> int:
        return self.ts_sec * 1_000_000_000 + self.ts_frac * (1 if self.nanosecond else 1000)

    @property
    def timestamp(self) -> float:
        return self.ts_sec + self.ts_frac / (1e9 if self.nanosecond else 1e6)


@dataclass(frozen=True)
class TcpFlags:
    res: bool = False  # any of the three reserved header bits
    ns: bool = False
    cwr: bool = False
    ecn: bool = False
    urg: bool = False
    ack: bool = False
    push: bool = False
    reset: bool = False
    syn: bool = False
    fin: bool = False

    def any(self) -> bool:
        return any(astuple(self))


@dataclass(frozen=True)
class MqttMessage:
    message_type: int
    message_length: int
    flag_uname: bool = False
    flag_passwd: bool = False
    flag_retain: bool = False
    flag_willflag: bool = False
    flag_clean: bool = False
    flag_reserved: bool = False
    flag_qos: int = 0


@dataclass(frozen=True)
class ParsedPacket:
    timestamp: float
    ip_src: str
    ip_dest: str
    ttl: int
    ip_len: int
    ip_flag_df: bool
    ip_flag_mf: bool
    ip_flag_rb: bool
    transport: Transport
    prt_src: int
    prt_dst: int
    tcp_flags: TcpFlags
    payload_len: int
    mqtt_messages: Tuple[MqttMessage, ...] = ()
    # Bytes left over after the last complete MQTT control packet in the segment.
    mqtt_undecoded: int = 0
    # Exact capture time; `timestamp` cannot hold nanoseconds at epoch magnitudes.
    timestamp_ns: Optional[int] = None

    @property
    def protocol_name(self) -> str:
        if self.mqtt_messages:
            return "MQTT"
        if self.transport == Transport.OTHER:
            return "OTHER"
        return self.transport.name


@dataclass(frozen=True)
class FlowKey:
    ip_src: str
    ip_dest: str
    prt_src: int
    prt_dst: int
    proto: int

    def reversed(self) -> FlowKey:
        return FlowKey(self.ip_dest, self.ip_src, self.prt_dst, self.prt_src, self.proto)

    def as_tuple(self) -> Tuple[str, str, int, int, int]:
        return (self.ip_src, self.ip_dest, self.prt_src, self.prt_dst, self.proto)


@dataclass(frozen=True)
class FlowStats:
    num_pkts: int = 0
    mean_iat: float = 0.0
    std_iat: float = 0.0
    min_iat: float = 0.0
    max_iat: float = 0.0
    num_bytes: int = 0
    num_psh_flags: int = 0
    num_rst_flags: int = 0
    num_urg_flags: int = 0
    mean_pkt_len: float = 0.0
    std_pkt_len: float = 0.0
    min_pkt_len: float = 0.0
    max_pkt_len: float = 0.0

    def as_row(self) -> Tuple[Union[int, float], ...]:
        return astuple(self)


@dataclass(frozen=True)
class PacketFeatureRecord:
    ip_src: str
    ip_dest: str
    protocol: str
    ttl: int
    ip_len: int
    ip_flag_df: int
    ip_flag_mf: int
    ip_flag_rb: int
    prt_src: int
    prt_dst: int
    tcp_flag_res: int
    tcp_flag_ns: int
    tcp_flag_cwr: int
    tcp_flag_ecn: int
    tcp_flag_urg: int
    tcp_flag_ack: int
    tcp_flag_push: int
    tcp_flag_reset: int
    tcp_flag_syn: int
    tcp_flag_fin: int
    mqtt_messagetype: int
    mqtt_messagelength: int
    mqtt_flag_uname: int
    mqtt_flag_passwd: int
    mqtt_flag_retain: int
    mqtt_flag_qos: int
    mqtt_flag_willflag: int
    mqtt_flag_clean: int
    mqtt_flag_reserved: int
    is_attack: int
    traffic_class: str

    def as_row(self) -> tuple:
        return astuple(self)[:-2]


@dataclass(frozen=True)
class UniFlowRecord:
    key: FlowKey
    stats: FlowStats
    is_attack: int
    traffic_class: str

    def as_row(self) -> tuple:
        return self.key.as_tuple() + self.stats.as_row()


@dataclass(frozen=True)
class BiFlowRecord:
    key: FlowKey
    fwd: FlowStats
    bwd: FlowStats
    is_attack: int
    traffic_class: str

    @property
    def proto(self) -> int:
        return self.key.proto

    def as_row(self) -> tuple:
        return self.key.as_tuple() + self.fwd.as_row() + self.bwd.as_row()


FeatureRecord = Union[PacketFeatureRecord, UniFlowRecord, BiFlowRecord]

LABEL_COLUMNS = ("is_attack", "class")

# Table column orders. Packet columns follow the record field order; flow stat columns are shared.
_PACKET_FIELD_TYPES = {int: ColumnType.INTEGER, str: ColumnType.TEXT, 'int': ColumnType.INTEGER,
                       'str': ColumnType.TEXT}
PACKET_COLUMN_TYPES: Dict[str, ColumnType] = {
    f.name: _PACKET_FIELD_TYPES[f.type] for f in fields(PacketFeatureRecord)
    if f.name not in ("is_attack", "traffic_class")
}

_FLOW_FIELD_TYPES = {int: ColumnType.INTEGER, float: ColumnType.DECIMAL, 'int': ColumnType.INTEGER,
                     'float': ColumnType.DECIMAL}
FLOW_STATS_COLUMN_TYPES: Dict[str, ColumnType] = {f.name: _FLOW_FIELD_TYPES[f.type] for f in fields(FlowStats)}

FLOW_KEY_COLUMN_TYPES: Dict[str, ColumnType] = {
    "ip_src": ColumnType.TEXT,
    "ip_dest": ColumnType.TEXT,
    "prt_src": ColumnType.INTEGER,
    "prt_dst": ColumnType.INTEGER,
    "proto": ColumnType.INTEGER,
}

UNIFLOW_COLUMN_TYPES: Dict[str, ColumnType] = {**FLOW_KEY_COLUMN_TYPES, **FLOW_STATS_COLUMN_TYPES}

BIFLOW_COLUMN_TYPES: Dict[str, ColumnType] = {
    **FLOW_KEY_COLUMN_TYPES,
    **{f"fwd_{name}": column_type for name, column_type in FLOW_STATS_COLUMN_TYPES.items()},
    **{f"bwd_{name}": column_type for name, column_type in FLOW_STATS_COLUMN_TYPES.items()},
}

LEVEL_COLUMN_TYPES: Dict[FeatureLevel, Dict[str, ColumnType]] = {
    FeatureLevel.PACKET: PACKET_COLUMN_TYPES,
    FeatureLevel.UNIFLOW: UNIFLOW_COLUMN_TYPES,
    FeatureLevel.BIFLOW: BIFLOW_COLUMN_TYPES,
}
