import logging
import struct
from typing import AbstractSet, Optional

import dpkt
from dpkt.utils import inet_to_str

from mqtt_ids.data import DataException, ParsedPacket, RawFrame, TcpFlags, Transport
from mqtt_ids.mqtt import decode_mqtt_stream

logger = logging.getLogger(__name__)

DEFAULT_MQTT_PORTS: AbstractSet[int] = frozenset({1883})

IPV4_MIN_HEADER_LEN = 20
TCP_MIN_HEADER_LEN = 20
UDP_HEADER_LEN = 8

# dpkt names the eight classic flag bits; NS is the ninth.
TH_NS = 0x100

# Anything dpkt can raise while unpacking hostile bytes.
_DECODE_ERRORS = (dpkt.dpkt.Error, struct.error, ValueError, IndexError, KeyError, TypeError, AttributeError)


class MalformedHeaderException(DataException):
    def __init__(self, reason: str) -> None:
        super().__init__(f"Malformed packet header: {reason}")


def _tcp_flags(tcp: dpkt.tcp.TCP) -> TcpFlags:
    # offset (4 bits), reserved (3 bits), flags (9 bits)
    off_flags = int.from_bytes(tcp.pack_hdr()[12:14], 'big')
    flags = off_flags & 0x1ff
    return TcpFlags(
        res=bool((off_flags >> 9) & 0x7),
        ns=bool(flags & TH_NS),
        cwr=bool(flags & dpkt.tcp.TH_CWR),
        ecn=bool(flags & dpkt.tcp.TH_ECE),
        urg=bool(flags & dpkt.tcp.TH_URG),
        ack=bool(flags & dpkt.tcp.TH_ACK),
        push=bool(flags & dpkt.tcp.TH_PUSH),
        reset=bool(flags & dpkt.tcp.TH_RST),
        syn=bool(flags & dpkt.tcp.TH_SYN),
        fin=bool(flags & dpkt.tcp.TH_FIN),
    )


def _wire_payload_len(ip: dpkt.ip.IP, ip_header_len: int, transport_header_len: int, captured: int) -> int:
    if ip.len == 0:
        # Segmentation offload leaves the total length unset; fall back to what was captured.
        return captured
    payload_len = ip.len - ip_header_len - transport_header_len
    if payload_len < 0:
        raise MalformedHeaderException(f"IP total length {ip.len} cannot hold a {ip_header_len}-byte IP header "
                                       f"and a {transport_header_len}-byte transport header")
    return payload_len


def parse_packet(frame: RawFrame, mqtt_ports: AbstractSet[int] = DEFAULT_MQTT_PORTS) -> Optional[ParsedPacket]:
    """Decode one Ethernet frame. Returns None (skip) for anything that is not IPv4 and raises
    MalformedHeaderException when the IPv4 or transport header is inconsistent with the frame."""
    try:
        eth = dpkt.ethernet.Ethernet(frame.data)
    except _DECODE_ERRORS as e:
        raise MalformedHeaderException(f"Ethernet frame of {len(frame.data)} bytes could not be decoded ({e})")
    if eth.type != dpkt.ethernet.ETH_TYPE_IP:
        return None

    ip = eth.data
    if not isinstance(ip, dpkt.ip.IP):
        raise MalformedHeaderException("IPv4 header could not be decoded")
    try:
        ip_header_len = ip.hl * 4
        if ip.v != 4:
            raise MalformedHeaderException(f"IP version {ip.v} in an IPv4 frame")
        if len(ip.opts) != ip_header_len - IPV4_MIN_HEADER_LEN:
            raise MalformedHeaderException(f"IP header length {ip_header_len} exceeds the captured bytes")
        if ip.len and ip.len < ip_header_len:
            raise MalformedHeaderException(f"IP total length {ip.len} is below the header length {ip_header_len}")

        transport = Transport.OTHER
        prt_src = prt_dst = 0
        tcp_flags = TcpFlags()
        mqtt_messages = ()
        undecoded = 0
        segment = ip.data

        if ip.offset == 0 and ip.p in (Transport.TCP, Transport.UDP):
            if ip.p == Transport.TCP:
                if not isinstance(segment, dpkt.tcp.TCP):
                    raise MalformedHeaderException("TCP header could not be decoded")
                tcp_header_len = segment.off * 4
                if len(segment.opts) != tcp_header_len - TCP_MIN_HEADER_LEN:
                    raise MalformedHeaderException(f"TCP header length {tcp_header_len} exceeds the captured bytes")
                transport = Transport.TCP
                tcp_flags = _tcp_flags(segment)
                payload_len = _wire_payload_len(ip, ip_header_len, tcp_header_len, len(segment.data))
                if segment.data and (segment.sport in mqtt_ports or segment.dport in mqtt_ports):
                    messages, undecoded = decode_mqtt_stream(bytes(segment.data))
                    mqtt_messages = tuple(messages)
            else:
                if not isinstance(segment, dpkt.udp.UDP):
                    raise MalformedHeaderException("UDP header could not be decoded")
                transport = Transport.UDP
                payload_len = _wire_payload_len(ip, ip_header_len, UDP_HEADER_LEN, len(segment.data))
            prt_src, prt_dst = segment.sport, segment.dport
        else:
            payload_len = _wire_payload_len(ip, ip_header_len, 0, len(segment))

        return ParsedPacket(
            timestamp=frame.timestamp,
            ip_src=inet_to_str(ip.src),
            ip_dest=inet_to_str(ip.dst),
            ttl=ip.ttl,
            ip_len=ip.len,
            ip_flag_df=bool(ip.df),
            ip_flag_mf=bool(ip.mf),
            ip_flag_rb=bool(ip.rf),
            transport=transport,
            prt_src=prt_src,
            prt_dst=prt_dst,
            tcp_flags=tcp_flags,
            payload_len=payload_len,
            mqtt_messages=mqtt_messages,
            mqtt_undecoded=undecoded,
            timestamp_ns=frame.timestamp_ns,
        )
    except _DECODE_ERRORS as e:
        raise MalformedHeaderException(f"IPv4 packet could not be decoded ({e})")
