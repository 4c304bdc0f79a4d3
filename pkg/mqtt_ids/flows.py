import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from mqtt_ids.data import (BiFlowRecord, DataException, FlowKey, FlowStats, ParsedPacket, Transport,
                           UniFlowRecord)
from mqtt_ids.labels import LabelRuleSet, apply_label_rules

logger = logging.getLogger(__name__)


class EmptyFlowException(DataException):
    def __init__(self) -> None:
        super().__init__("Flow statistics need at least one packet.")


@dataclass(frozen=True)
class FlowConfig:
    # Seconds of silence after which the next packet of a key starts a new flow. None keeps one flow per key
    # for the whole capture.
    idle_timeout: Optional[float] = None


def _stats_from_iats(iats: np.ndarray, ip_lens: Sequence[int],
                     tcp_flag_triples: Sequence[Tuple[int, int, int]]) -> FlowStats:
    lens = np.asarray(ip_lens, dtype=np.float64)
    flags = np.asarray(tcp_flag_triples, dtype=np.int64).reshape(-1, 3)
    if len(iats) == 0:
        iats = np.zeros(1)
    psh, rst, urg = flags.sum(axis=0)
    return FlowStats(
        num_pkts=len(lens),
        mean_iat=float(iats.mean()),
        std_iat=float(iats.std()),
        min_iat=float(iats.min()),
        max_iat=float(iats.max()),
        num_bytes=int(np.sum(np.asarray(ip_lens, dtype=np.int64))),
        num_psh_flags=int(psh),
        num_rst_flags=int(rst),
        num_urg_flags=int(urg),
        mean_pkt_len=float(lens.mean()),
        std_pkt_len=float(lens.std()),
        min_pkt_len=float(lens.min()),
        max_pkt_len=float(lens.max()),
    )


def summarize_stats(timestamps: Sequence[float], ip_lens: Sequence[int],
                    tcp_flag_triples: Sequence[Tuple[int, int, int]]) -> FlowStats:
    """Statistics of one flow direction. `tcp_flag_triples` holds (psh, rst, urg) per packet."""
    if len(timestamps) == 0:
        raise EmptyFlowException()
    return _stats_from_iats(np.diff(np.asarray(timestamps, dtype=np.float64)), ip_lens, tcp_flag_triples)


def summarize_stats_ns(timestamps_ns: Sequence[int], ip_lens: Sequence[int],
                       tcp_flag_triples: Sequence[Tuple[int, int, int]]) -> FlowStats:
    """summarize_stats over integer nanosecond timestamps; gaps are taken before converting to seconds."""
    if len(timestamps_ns) == 0:
        raise EmptyFlowException()
    iats = np.diff(np.asarray(timestamps_ns, dtype=np.int64)) / 1e9
    return _stats_from_iats(iats, ip_lens, tcp_flag_triples)


def flow_key(packet: ParsedPacket) -> Optional[FlowKey]:
    if packet.transport not in (Transport.TCP, Transport.UDP):
        return None
    return FlowKey(packet.ip_src, packet.ip_dest, packet.prt_src, packet.prt_dst, int(packet.transport))


@dataclass
class _Direction:
    timestamps: List[float] = field(default_factory=list)
    timestamps_ns: List[Optional[int]] = field(default_factory=list)
    ip_lens: List[int] = field(default_factory=list)
    flags: List[Tuple[int, int, int]] = field(default_factory=list)

    def add(self, packet: ParsedPacket) -> None:
        self.timestamps.append(packet.timestamp)
        self.timestamps_ns.append(packet.timestamp_ns)
        self.ip_lens.append(packet.ip_len)
        flags = packet.tcp_flags
        self.flags.append((int(flags.push), int(flags.reset), int(flags.urg)))

    def stats(self) -> FlowStats:
        if not self.timestamps:
            return FlowStats()
        if None in self.timestamps_ns:
            return summarize_stats(self.timestamps, self.ip_lens, self.flags)
        return summarize_stats_ns(self.timestamps_ns, self.ip_lens, self.flags)


@dataclass
class _Flow:
    key: FlowKey  # forward direction
    first: ParsedPacket
    order: int  # position of the first packet in the stream
    forward: _Direction = field(default_factory=_Direction)
    backward: _Direction = field(default_factory=_Direction)
    last_timestamp: float = 0.0


class FlowTable:
    """Single-pass grouping of packets into flows. With `bidirectional` set, a key and its reverse share one flow
    whose forward direction is that of the first packet seen."""

    def __init__(self, cfg: FlowConfig, bidirectional: bool) -> None:
        self._cfg = cfg
        self._bidirectional = bidirectional
        self._active: Dict[FlowKey, _Flow] = {}
        self._finished: List[_Flow] = []
        self._packet_count = 0

    def _expired(self, flow: _Flow, timestamp: float) -> bool:
        return self._cfg.idle_timeout is not None and timestamp - flow.last_timestamp > self._cfg.idle_timeout

    def _retire(self, flow: _Flow) -> None:
        self._finished.append(flow)
        for key in (flow.key, flow.key.reversed()):
            if self._active.get(key) is flow:
                del self._active[key]

    def add(self, packet: ParsedPacket) -> None:
        key = flow_key(packet)
        if key is None:
            return
        order = self._packet_count
        self._packet_count += 1

        flow = self._active.get(key)
        if flow is not None and self._expired(flow, packet.timestamp):
            self._retire(flow)
            flow = None
        if flow is None:
            flow = _Flow(key=key, first=packet, order=order)
            self._active[key] = flow
            if self._bidirectional:
                self._active[key.reversed()] = flow

        if key == flow.key:
            flow.forward.add(packet)
        else:
            flow.backward.add(packet)
        flow.last_timestamp = packet.timestamp

    def flows(self) -> List[_Flow]:
        flows = self._finished + list({id(flow): flow for flow in self._active.values()}.values())
        return sorted(flows, key=lambda flow: (flow.first.timestamp, flow.key.as_tuple(), flow.order))


def _label(flow: _Flow, labels: LabelRuleSet) -> Tuple[int, str]:
    first = flow.first
    return apply_label_rules(first.ip_src, first.ip_dest, labels, first.prt_src, first.prt_dst,
                             int(first.transport))


def assemble_uniflows(packets: Iterable[ParsedPacket], labels: LabelRuleSet,
                      cfg: FlowConfig = FlowConfig()) -> List[UniFlowRecord]:
    table = FlowTable(cfg, bidirectional=False)
    for packet in packets:
        table.add(packet)
    records = []
    for flow in table.flows():
        is_attack, traffic_class = _label(flow, labels)
        records.append(UniFlowRecord(key=flow.key, stats=flow.forward.stats(), is_attack=is_attack,
                                     traffic_class=traffic_class))
    logger.debug(f"Assembled {len(records)} uniflows.")
    return records


def assemble_biflows(packets: Iterable[ParsedPacket], labels: LabelRuleSet,
                     cfg: FlowConfig = FlowConfig()) -> List[BiFlowRecord]:
    table = FlowTable(cfg, bidirectional=True)
    for packet in packets:
        table.add(packet)
    records = []
    for flow in table.flows():
        is_attack, traffic_class = _label(flow, labels)
        records.append(BiFlowRecord(key=flow.key, fwd=flow.forward.stats(), bwd=flow.backward.stats(),
                                    is_attack=is_attack, traffic_class=traffic_class))
    logger.debug(f"Assembled {len(records)} biflows.")
    return records
