import logging
from pathlib import Path
from typing import IO, Generator, Iterable, Union

import dpkt

from mqtt_ids.data import DataException, RawFrame

logger = logging.getLogger(__name__)

FILE_HEADER_LEN = 24
RECORD_HEADER_LEN = 16
DEFAULT_SNAPLEN = 65535

# Magic numbers as they read when the first four bytes are taken big-endian.
_BIG_ENDIAN_MAGICS = {dpkt.pcap.TCPDUMP_MAGIC: False, dpkt.pcap.TCPDUMP_MAGIC_NANO: True}
_LITTLE_ENDIAN_MAGICS = {dpkt.pcap.PMUDPCT_MAGIC: False, dpkt.pcap.PMUDPCT_MAGIC_NANO: True}


class BadMagicException(DataException):
    def __init__(self, source, magic) -> None:
        super().__init__(f"'{source}' is not a pcap capture: unrecognized magic number {magic}.")


class UnsupportedLinkTypeException(DataException):
    def __init__(self, source, linktype) -> None:
        super().__init__(f"'{source}' has link type {linktype}; only Ethernet ({dpkt.pcap.DLT_EN10MB}) "
                         "captures are supported.")


class TruncatedRecordException(DataException):
    def __init__(self, source, record_index, expected, actual) -> None:
        super().__init__(f"Record {record_index} of '{source}' is truncated: {expected} bytes were expected "
                         f"but only {actual} remain.")


def iter_capture(stream: IO[bytes], source: str = "<stream>") -> Generator[RawFrame, None, None]:
    """Yield the frames of an open pcap stream in file order."""
    header = stream.read(FILE_HEADER_LEN)
    magic = int.from_bytes(header[:4], 'big') if len(header) >= 4 else None
    if magic in _BIG_ENDIAN_MAGICS:
        file_header_cls, record_header_cls = dpkt.pcap.FileHdr, dpkt.pcap.PktHdr
        nanosecond = _BIG_ENDIAN_MAGICS[magic]
    elif magic in _LITTLE_ENDIAN_MAGICS:
        file_header_cls, record_header_cls = dpkt.pcap.LEFileHdr, dpkt.pcap.LEPktHdr
        nanosecond = _LITTLE_ENDIAN_MAGICS[magic]
    else:
        raise BadMagicException(source, hex(magic) if magic is not None else "(file too short)")
    if len(header) < FILE_HEADER_LEN:
        raise TruncatedRecordException(source, "header", FILE_HEADER_LEN, len(header))

    file_header = file_header_cls(header)
    if file_header.linktype != dpkt.pcap.DLT_EN10MB:
        raise UnsupportedLinkTypeException(source, file_header.linktype)

    record_index = 0
    while True:
        record = stream.read(RECORD_HEADER_LEN)
        if not record:
            return
        if len(record) < RECORD_HEADER_LEN:
            raise TruncatedRecordException(source, record_index, RECORD_HEADER_LEN, len(record))
        record_header = record_header_cls(record)
        data = stream.read(record_header.caplen)
        if len(data) < record_header.caplen:
            raise TruncatedRecordException(source, record_index, record_header.caplen, len(data))

        original_len = record_header.len
        if original_len < record_header.caplen:
            logger.warning(f"Record {record_index} of '{source}' claims an original length ({original_len}) "
                           f"shorter than its captured length ({record_header.caplen}).")
            original_len = record_header.caplen
        yield RawFrame(ts_sec=record_header.tv_sec, ts_frac=record_header.tv_usec,
                       captured_len=record_header.caplen, original_len=original_len, data=data,
                       nanosecond=nanosecond)
        record_index += 1


def read_capture(path: Union[str, Path]) -> Generator[RawFrame, None, None]:
    with open(path, 'rb') as stream:
        yield from iter_capture(stream, source=str(path))


def pcap_file_header(snaplen: int = DEFAULT_SNAPLEN, little_endian: bool = True, nanosecond: bool = False) -> bytes:
    header_cls = dpkt.pcap.LEFileHdr if little_endian else dpkt.pcap.FileHdr
    magic = dpkt.pcap.TCPDUMP_MAGIC_NANO if nanosecond else dpkt.pcap.TCPDUMP_MAGIC
    return bytes(header_cls(magic=magic, snaplen=snaplen, linktype=dpkt.pcap.DLT_EN10MB))


def pcap_record(frame: RawFrame, little_endian: bool = True) -> bytes:
    header_cls = dpkt.pcap.LEPktHdr if little_endian else dpkt.pcap.PktHdr
    return bytes(header_cls(tv_sec=frame.ts_sec, tv_usec=frame.ts_frac, caplen=len(frame.data),
                            len=frame.original_len)) + frame.data


def pcap_bytes(frames: Iterable[RawFrame], little_endian: bool = True, nanosecond: bool = False) -> bytes:
    """Serialize frames as a pcap file. All frames must use the timestamp resolution given by `nanosecond`."""
    parts = [pcap_file_header(little_endian=little_endian, nanosecond=nanosecond)]
    parts.extend(pcap_record(frame, little_endian) for frame in frames)
    return b"".join(parts)
