import ipaddress
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import dpkt
import numpy as np

from mqtt_ids.capture import pcap_bytes
from mqtt_ids.data import DataException, RawFrame, Scenario, TrafficClass
from mqtt_ids.labels import LabelRuleSet, save_label_rules
from mqtt_ids.mqtt import MqttControlPacketType, encode_connect, encode_packet, encode_publish

logger = logging.getLogger(__name__)

BASE_EPOCH = 1590000000
MIN_FRAME_LEN = 60
LABELS_SUFFIX = ".labels.json"

CAMERA_PORT = 5004
STACK_TTL = 64
RAW_SOCKET_TTL_RANGE = (37, 59)
EPHEMERAL_PORTS = (32768, 60999)
CONNACK_ACCEPTED = 0
CONNACK_NOT_AUTHORIZED = 5

# Sensor i publishes payloads of SENSOR_PAYLOAD_MIN + i * SENSOR_PAYLOAD_STEP bytes, up to SENSOR_PAYLOAD_WIDTH more.
SENSOR_PAYLOAD_MIN = 16
SENSOR_PAYLOAD_STEP = 24
SENSOR_PAYLOAD_WIDTH = 32

_SENSOR, _CAMERA, _BROKER, _ATTACK = "sensor", "camera", "broker", "attack"
# Index into ScenarioConfig.drop_rates for each benign sender.
_DROP_RATE_INDEX = {_SENSOR: 0, _CAMERA: 1, _BROKER: 2}


class InvalidConfigException(DataException):
    def __init__(self, reason) -> None:
        super().__init__(f"Invalid scenario configuration: {reason}")


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: Scenario = Scenario.NORMAL
    duration: float = 60.0
    sensor_count: int = 12
    sensor_publish_period_range: Tuple[float, float] = (1.0, 10.0)
    publishes_per_session: Tuple[int, int] = (1, 4)
    drop_rates: Tuple[float, float, float] = (0.002, 0.01, 0.0013)
    attacker_ip: str = "192.168.1.66"
    broker_ip: str = "192.168.1.10"
    camera_ips: Tuple[str, str] = ("192.168.1.20", "192.168.1.21")
    sensor_ip_start: str = "192.168.1.101"
    camera_rate: float = 20.0
    attack_count: int = 100
    attack_start: float = 0.1
    scan_ports: Tuple[int, int] = (1, 1024)
    mqtt_port: int = 1883
    ssh_port: int = 22
    seed: int = 0

    @property
    def sensor_ips(self) -> List[str]:
        start = ipaddress.IPv4Address(self.sensor_ip_start)
        return [str(start + i) for i in range(self.sensor_count)]

    def validate(self) -> None:
        if not isinstance(self.scenario, Scenario):
            raise InvalidConfigException(f"unknown scenario {self.scenario!r}")
        if self.duration <= 0:
            raise InvalidConfigException(f"duration must be positive, got {self.duration}")
        if self.sensor_count < 1:
            raise InvalidConfigException(f"sensor_count must be at least 1, got {self.sensor_count}")
        if len(self.drop_rates) != 3 or any(not 0 <= rate < 1 for rate in self.drop_rates):
            raise InvalidConfigException(f"drop_rates must be three values in [0, 1), got {self.drop_rates}")
        low, high = self.sensor_publish_period_range
        if not 0 < low <= high:
            raise InvalidConfigException(f"sensor_publish_period_range must satisfy 0 < low <= high, got "
                                         f"{self.sensor_publish_period_range}")
        low, high = self.publishes_per_session
        if not 1 <= low <= high:
            raise InvalidConfigException(f"publishes_per_session must satisfy 1 <= low <= high, got "
                                         f"{self.publishes_per_session}")
        low, high = self.scan_ports
        if not 1 <= low <= high <= 65535:
            raise InvalidConfigException(f"scan_ports must satisfy 1 <= low <= high <= 65535, got {self.scan_ports}")
        if self.camera_rate <= 0:
            raise InvalidConfigException(f"camera_rate must be positive, got {self.camera_rate}")
        if self.attack_count < 0:
            raise InvalidConfigException(f"attack_count cannot be negative, got {self.attack_count}")
        if not 0 <= self.attack_start < 1:
            raise InvalidConfigException(f"attack_start must be a fraction in [0, 1), got {self.attack_start}")
        for port in (self.mqtt_port, self.ssh_port):
            if not 1 <= port <= 65535:
                raise InvalidConfigException(f"port {port} is out of range")
        try:
            addresses = [self.attacker_ip, self.broker_ip, *self.camera_ips] + self.sensor_ips
            for address in addresses:
                ipaddress.IPv4Address(address)
        except (ipaddress.AddressValueError, ValueError) as e:
            raise InvalidConfigException(f"bad IPv4 address. Details: {e}")
        if len(self.camera_ips) != 2:
            raise InvalidConfigException(f"camera_ips must hold a source and a destination, got {self.camera_ips}")
        if len(set(addresses)) != len(addresses):
            raise InvalidConfigException("attacker, broker, camera and sensor addresses must all differ")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["scenario"] = self.scenario.value
        return {name: list(value) if isinstance(value, tuple) else value for name, value in out.items()}

    @classmethod
    def from_dict(cls, source_dict: dict) -> "ScenarioConfig":
        values = dict(source_dict)
        try:
            if "scenario" in values:
                values["scenario"] = Scenario(values["scenario"])
            for name, value in values.items():
                if isinstance(value, list):
                    values[name] = tuple(value)
            return cls(**values)
        except (ValueError, TypeError) as e:
            raise InvalidConfigException(e)


@dataclass
class GroundTruth:
    """Per emitted packet, in capture order: is_attack (0/1) and class."""
    is_attack: List[int] = field(default_factory=list)
    classes: List[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.is_attack)

    def to_json(self) -> str:
        return json.dumps([{"is_attack": flag, "class": label} for flag, label in zip(self.is_attack, self.classes)])

    @classmethod
    def from_json(cls, text: str) -> "GroundTruth":
        rows = json.loads(text)
        return cls(is_attack=[int(row["is_attack"]) for row in rows], classes=[row["class"] for row in rows])


@dataclass
class _Event:
    timestamp: float
    data: bytes
    sender: str


def _mac(ip: str) -> bytes:
    return b"\x02\x00" + ipaddress.IPv4Address(ip).packed


class FrameBuilder:
    """Ethernet/IPv4 frames, padded to the Ethernet minimum. IP identifiers are drawn from `rng`."""

    def __init__(self, rng: np.random.Generator) -> None:
        self._rng = rng

    def ipv4(self, src: str, dst: str, segment: dpkt.Packet, proto: int, ttl: int = STACK_TTL,
             df: bool = True) -> bytes:
        ip = dpkt.ip.IP(src=ipaddress.IPv4Address(src).packed, dst=ipaddress.IPv4Address(dst).packed, p=proto,
                        ttl=ttl, id=int(self._rng.integers(0, 65536)), data=segment)
        ip.df = int(df)
        ip.len = len(ip)
        eth = dpkt.ethernet.Ethernet(src=_mac(src), dst=_mac(dst), type=dpkt.ethernet.ETH_TYPE_IP, data=ip)
        return bytes(eth).ljust(MIN_FRAME_LEN, b"\x00")

    def udp(self, src: str, dst: str, sport: int, dport: int, payload: bytes, ttl: int = STACK_TTL,
            df: bool = True) -> bytes:
        segment = dpkt.udp.UDP(sport=sport, dport=dport, ulen=8 + len(payload), data=payload)
        return self.ipv4(src, dst, segment, dpkt.ip.IP_PROTO_UDP, ttl, df)


class TcpConversation:
    """Sequence-number bookkeeping for one TCP connection between a client and a server port."""

    def __init__(self, frames: FrameBuilder, rng: np.random.Generator, client: str, server: str,
                 client_port: int, server_port: int, client_ttl: int = STACK_TTL, client_df: bool = True) -> None:
        self._frames = frames
        self._client = (client, client_port, client_ttl, client_df)
        self._server = (server, server_port, STACK_TTL, True)
        self._seq = {True: int(rng.integers(0, 2 ** 32)), False: int(rng.integers(0, 2 ** 32))}

    def segment(self, from_client: bool, flags: int, payload: bytes = b"") -> bytes:
        src, sport, ttl, df = self._client if from_client else self._server
        dst, dport, _, _ = self._server if from_client else self._client
        ack = self._seq[not from_client] if flags & dpkt.tcp.TH_ACK else 0
        tcp = dpkt.tcp.TCP(sport=sport, dport=dport, seq=self._seq[from_client], ack=ack, flags=flags,
                           win=64240, data=payload)
        consumed = len(payload) + (1 if flags & (dpkt.tcp.TH_SYN | dpkt.tcp.TH_FIN) else 0)
        self._seq[from_client] = (self._seq[from_client] + consumed) % 2 ** 32
        return self._frames.ipv4(src, dst, tcp, dpkt.ip.IP_PROTO_TCP, ttl, df)


_SYN = dpkt.tcp.TH_SYN
_SYN_ACK = dpkt.tcp.TH_SYN | dpkt.tcp.TH_ACK
_ACK = dpkt.tcp.TH_ACK
_PSH_ACK = dpkt.tcp.TH_PUSH | dpkt.tcp.TH_ACK
_FIN_ACK = dpkt.tcp.TH_FIN | dpkt.tcp.TH_ACK
_RST = dpkt.tcp.TH_RST
_RST_ACK = dpkt.tcp.TH_RST | dpkt.tcp.TH_ACK


def _rtt(rng: np.random.Generator) -> float:
    return float(rng.uniform(0.0005, 0.002))


def _ephemeral_port(rng: np.random.Generator) -> int:
    return int(rng.integers(EPHEMERAL_PORTS[0], EPHEMERAL_PORTS[1] + 1))


def _ascii(rng: np.random.Generator, low: int, high: int) -> bytes:
    alphabet = np.frombuffer(b"abcdefghijklmnopqrstuvwxyz0123456789", dtype=np.uint8)
    return rng.choice(alphabet, size=int(rng.integers(low, high + 1))).tobytes()


def _connack(return_code: int) -> bytes:
    return encode_packet(MqttControlPacketType.CONNACK, bytes([0, return_code]))


class _Timeline:
    def __init__(self, sender_default: str) -> None:
        self.events: List[_Event] = []
        self._sender_default = sender_default

    def add(self, timestamp: float, data: bytes, sender: Optional[str] = None) -> None:
        self.events.append(_Event(timestamp, data, sender or self._sender_default))


def _sensor_events(cfg: ScenarioConfig, index: int, rng: np.random.Generator) -> List[_Event]:
    """Connect, publish a few messages one period apart, close the connection, and reconnect later."""
    frames = FrameBuilder(rng)
    timeline = _Timeline(_SENSOR)
    ip = cfg.sensor_ips[index]
    period = float(rng.uniform(*cfg.sensor_publish_period_range))
    payload_low = SENSOR_PAYLOAD_MIN + index * SENSOR_PAYLOAD_STEP
    client_id = f"sensor-{index:02d}".encode()
    username = f"sensor{index:02d}".encode()
    password = _ascii(rng, 8, 16)
    topic = f"sensors/{index:02d}/reading".encode()

    t = float(rng.uniform(0.0, period))
    while t < cfg.duration:
        conn = TcpConversation(frames, rng, ip, cfg.broker_ip, _ephemeral_port(rng), cfg.mqtt_port)
        timeline.add(t, conn.segment(True, _SYN))
        t += _rtt(rng)
        timeline.add(t, conn.segment(False, _SYN_ACK), _BROKER)
        t += _rtt(rng)
        timeline.add(t, conn.segment(True, _ACK))
        t += 0.0003
        timeline.add(t, conn.segment(True, _PSH_ACK, encode_connect(client_id, username, password)))
        t += _rtt(rng)
        timeline.add(t, conn.segment(False, _PSH_ACK, _connack(CONNACK_ACCEPTED)), _BROKER)

        for _ in range(int(rng.integers(cfg.publishes_per_session[0], cfg.publishes_per_session[1] + 1))):
            t += period * float(rng.uniform(0.9, 1.1))
            message = rng.bytes(int(rng.integers(payload_low, payload_low + SENSOR_PAYLOAD_WIDTH + 1)))
            timeline.add(t, conn.segment(True, _PSH_ACK, encode_publish(topic, message)))
            t += _rtt(rng)
            timeline.add(t, conn.segment(False, _ACK), _BROKER)

        t += period * 0.5
        timeline.add(t, conn.segment(True, _FIN_ACK))
        t += _rtt(rng)
        timeline.add(t, conn.segment(False, _FIN_ACK), _BROKER)
        t += _rtt(rng)
        timeline.add(t, conn.segment(True, _ACK))
        t += period * float(rng.uniform(0.5, 1.5))
    return timeline.events


def _camera_events(cfg: ScenarioConfig, rng: np.random.Generator) -> List[_Event]:
    frames = FrameBuilder(rng)
    timeline = _Timeline(_CAMERA)
    source, destination = cfg.camera_ips
    t = float(rng.uniform(0.0, 1.0 / cfg.camera_rate))
    while t < cfg.duration:
        payload = rng.bytes(int(rng.integers(200, 1401)))
        timeline.add(t, frames.udp(source, destination, CAMERA_PORT, CAMERA_PORT, payload))
        t += float(rng.exponential(1.0 / cfg.camera_rate))
    return timeline.events


def _mqtt_bf_events(cfg: ScenarioConfig, rng: np.random.Generator) -> List[_Event]:
    """Every attempt is a fresh connection whose credentialed CONNECT is refused."""
    frames = FrameBuilder(rng)
    timeline = _Timeline(_ATTACK)
    t = cfg.attack_start * cfg.duration
    for _ in range(cfg.attack_count):
        conn = TcpConversation(frames, rng, cfg.attacker_ip, cfg.broker_ip, _ephemeral_port(rng), cfg.mqtt_port)
        connect = encode_connect(_ascii(rng, 6, 12), username=_ascii(rng, 4, 12), password=_ascii(rng, 6, 16))
        timeline.add(t, conn.segment(True, _SYN))
        t += _rtt(rng)
        timeline.add(t, conn.segment(False, _SYN_ACK))
        t += _rtt(rng)
        timeline.add(t, conn.segment(True, _ACK))
        t += 0.0003
        timeline.add(t, conn.segment(True, _PSH_ACK, connect))
        t += _rtt(rng)
        timeline.add(t, conn.segment(False, _PSH_ACK, _connack(CONNACK_NOT_AUTHORIZED)))
        t += 0.0002
        timeline.add(t, conn.segment(False, _FIN_ACK))
        t += _rtt(rng)
        timeline.add(t, conn.segment(True, _FIN_ACK))
        t += _rtt(rng)
        timeline.add(t, conn.segment(False, _ACK))
        t += float(rng.uniform(0.05, 0.4))
    return timeline.events


def _sparta_events(cfg: ScenarioConfig, rng: np.random.Generator) -> List[_Event]:
    """Short SSH connections: banner exchange, one small client message, close."""
    frames = FrameBuilder(rng)
    timeline = _Timeline(_ATTACK)
    t = cfg.attack_start * cfg.duration
    for _ in range(cfg.attack_count):
        conn = TcpConversation(frames, rng, cfg.attacker_ip, cfg.broker_ip, _ephemeral_port(rng), cfg.ssh_port)
        timeline.add(t, conn.segment(True, _SYN))
        t += _rtt(rng)
        timeline.add(t, conn.segment(False, _SYN_ACK))
        t += _rtt(rng)
        timeline.add(t, conn.segment(True, _ACK))
        t += 0.002
        timeline.add(t, conn.segment(False, _PSH_ACK, b"SSH-2.0-OpenSSH_7.6p1\r\n"))
        t += _rtt(rng)
        timeline.add(t, conn.segment(True, _PSH_ACK, b"SSH-2.0-sparta\r\n"))
        t += _rtt(rng)
        timeline.add(t, conn.segment(True, _PSH_ACK, rng.bytes(int(rng.integers(40, 121)))))
        t += _rtt(rng)
        timeline.add(t, conn.segment(False, _FIN_ACK))
        t += _rtt(rng)
        timeline.add(t, conn.segment(True, _FIN_ACK))
        t += _rtt(rng)
        timeline.add(t, conn.segment(False, _ACK))
        t += float(rng.uniform(0.05, 0.3))
    return timeline.events


def _scan_ports(cfg: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    return rng.permutation(np.arange(cfg.scan_ports[0], cfg.scan_ports[1] + 1))


def _raw_ttl(rng: np.random.Generator) -> int:
    return int(rng.integers(RAW_SOCKET_TTL_RANGE[0], RAW_SOCKET_TTL_RANGE[1] + 1))


def _scan_a_events(cfg: ScenarioConfig, rng: np.random.Generator) -> List[_Event]:
    """SYN probes from a raw socket. Open ports answer SYN/ACK and get reset; closed ports answer RST/ACK."""
    frames = FrameBuilder(rng)
    timeline = _Timeline(_ATTACK)
    open_ports = {cfg.mqtt_port, cfg.ssh_port}
    source_port = _ephemeral_port(rng)
    t = cfg.attack_start * cfg.duration
    for port in _scan_ports(cfg, rng):
        conn = TcpConversation(frames, rng, cfg.attacker_ip, cfg.broker_ip, source_port, int(port),
                                client_ttl=_raw_ttl(rng), client_df=False)
        timeline.add(t, conn.segment(True, _SYN))
        if int(port) in open_ports:
            t += _rtt(rng)
            timeline.add(t, conn.segment(False, _SYN_ACK))
            t += _rtt(rng)
            timeline.add(t, conn.segment(True, _RST))
        else:
            timeline.add(t + _rtt(rng), conn.segment(False, _RST_ACK))
        t += float(rng.uniform(0.0005, 0.003))
    return timeline.events


def _scan_su_events(cfg: ScenarioConfig, rng: np.random.Generator) -> List[_Event]:
    """Empty UDP probes; closed ports stay silent."""
    frames = FrameBuilder(rng)
    timeline = _Timeline(_ATTACK)
    source_port = _ephemeral_port(rng)
    t = cfg.attack_start * cfg.duration
    for port in _scan_ports(cfg, rng):
        timeline.add(t, frames.udp(cfg.attacker_ip, cfg.broker_ip, source_port, int(port), b"",
                                   ttl=_raw_ttl(rng), df=False))
        t += float(rng.uniform(0.0005, 0.003))
    return timeline.events


_ATTACK_GENERATORS = {
    Scenario.MQTT_BF: _mqtt_bf_events,
    Scenario.SPARTA: _sparta_events,
    Scenario.SCAN_A: _scan_a_events,
    Scenario.SCAN_SU: _scan_su_events,
}


def _to_frames(events: List[_Event]) -> List[RawFrame]:
    micros = np.rint(np.array([event.timestamp for event in events]) * 1e6).astype(np.int64)
    # Capture timestamps are strictly increasing.
    for i in range(1, len(micros)):
        if micros[i] <= micros[i - 1]:
            micros[i] = micros[i - 1] + 1
    return [RawFrame(ts_sec=BASE_EPOCH + int(us // 1_000_000), ts_frac=int(us % 1_000_000),
                     captured_len=len(event.data), original_len=len(event.data), data=event.data)
            for us, event in zip(micros, events)]


def generate_capture(cfg: ScenarioConfig) -> Tuple[bytes, GroundTruth]:
    """A little-endian microsecond pcap of the scenario and its per-packet ground truth. The same config always
    produces the same bytes."""
    cfg.validate()
    sensor_seeds, camera_seed, attack_seed, drop_seed = np.random.SeedSequence(cfg.seed).spawn(4)
    components: List[List[_Event]] = [_sensor_events(cfg, i, np.random.default_rng(seed))
                                      for i, seed in enumerate(sensor_seeds.spawn(cfg.sensor_count))]
    components.append(_camera_events(cfg, np.random.default_rng(camera_seed)))

    drop_rng = np.random.default_rng(drop_seed)
    benign = []
    dropped = 0
    for events in components:
        for event in events:
            if drop_rng.random() < cfg.drop_rates[_DROP_RATE_INDEX[event.sender]]:
                dropped += 1
            else:
                benign.append(event)

    attack: List[_Event] = []
    if cfg.scenario != Scenario.NORMAL:
        attack = _ATTACK_GENERATORS[cfg.scenario](cfg, np.random.default_rng(attack_seed))

    tagged = [(event, False) for event in benign] + [(event, True) for event in attack]
    tagged.sort(key=lambda pair: pair[0].timestamp)
    frames = _to_frames([event for event, _ in tagged])

    attack_class = LabelRuleSet.for_scenario(cfg.scenario).attack_class.value
    truth = GroundTruth(is_attack=[int(is_attack) for _, is_attack in tagged],
                        classes=[attack_class if is_attack else TrafficClass.BENIGN.value for _, is_attack in tagged])
    logger.info(f"Generated {len(frames)} packets for scenario {cfg.scenario.value} ({len(attack)} attack, "
                f"{dropped} benign packets dropped).")
    return pcap_bytes(frames), truth


def label_rules(cfg: ScenarioConfig) -> LabelRuleSet:
    """Label rules that reproduce the generator's ground truth from packet addresses."""
    return LabelRuleSet.for_scenario(cfg.scenario, frozenset({cfg.attacker_ip}))


def labels_path(path: Union[str, Path]) -> Path:
    return Path(f"{path}{LABELS_SUFFIX}")


def write_capture(cfg: ScenarioConfig, path: Union[str, Path],
                  rules_path: Optional[Union[str, Path]] = None) -> GroundTruth:
    capture, truth = generate_capture(cfg)
    with open(path, 'wb') as capture_file:
        capture_file.write(capture)
    with open(labels_path(path), 'w') as labels_file:
        labels_file.write(truth.to_json())
        labels_file.write("\n")
    if rules_path is not None:
        save_label_rules(label_rules(cfg), rules_path)
    return truth


def describe(cfg: ScenarioConfig) -> Dict[str, str]:
    """Role of every address in the scenario."""
    roles = {cfg.broker_ip: "broker", cfg.camera_ips[0]: "camera", cfg.camera_ips[1]: "camera-sink"}
    roles.update({ip: "sensor" for ip in cfg.sensor_ips})
    if cfg.scenario != Scenario.NORMAL:
        roles[cfg.attacker_ip] = "attacker"
    return roles


