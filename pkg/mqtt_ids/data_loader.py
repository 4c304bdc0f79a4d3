import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import IO, AbstractSet, Generator, Union

from mqtt_ids.capture import iter_capture, read_capture
from mqtt_ids.data import ParsedPacket
from mqtt_ids.packets import DEFAULT_MQTT_PORTS, MalformedHeaderException, parse_packet

logger = logging.getLogger(__name__)


@dataclass
class CaptureDiagnostics:
    frames: int = 0
    packets: int = 0
    non_ipv4: int = 0
    malformed: int = 0
    extra_mqtt_messages: int = 0  # messages after the first in a segment; they do not reach the features
    mqtt_undecoded_bytes: int = 0  # partial packets split across segments, or non-MQTT bytes on an MQTT port

    def as_dict(self) -> dict:
        return asdict(self)


class CaptureLoader:
    """Streams the decoded IPv4 packets of one capture, counting what had to be skipped along the way."""

    def __init__(self, input: Union[str, Path, IO[bytes]], mqtt_ports: AbstractSet[int] = DEFAULT_MQTT_PORTS) -> None:
        self._input = input
        self.mqtt_ports = frozenset(mqtt_ports)
        self.diagnostics = CaptureDiagnostics()

    @property
    def source(self) -> str:
        if isinstance(self._input, (str, Path)):
            return str(self._input)
        return getattr(self._input, 'name', '<stream>')

    def _frames(self):
        if isinstance(self._input, (str, Path)):
            return read_capture(self._input)
        return iter_capture(self._input, source=self.source)

    def next_input(self) -> Generator[ParsedPacket, None, None]:
        for index, frame in enumerate(self._frames()):
            self.diagnostics.frames += 1
            try:
                packet = parse_packet(frame, self.mqtt_ports)
            except MalformedHeaderException as e:
                self.diagnostics.malformed += 1
                logger.debug(f"Frame {index} was skipped. {e}")
                continue
            if packet is None:
                self.diagnostics.non_ipv4 += 1
                continue
            self.diagnostics.packets += 1
            self.diagnostics.extra_mqtt_messages += max(0, len(packet.mqtt_messages) - 1)
            self.diagnostics.mqtt_undecoded_bytes += packet.mqtt_undecoded
            yield packet
        logger.info(f"Finished reading {self.source}: {self.diagnostics.as_dict()}")
