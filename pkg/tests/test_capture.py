from io import BytesIO

import dpkt
import pytest

from mqtt_ids.capture import (BadMagicException, TruncatedRecordException, UnsupportedLinkTypeException,
                              iter_capture, pcap_bytes, pcap_record, read_capture)
from mqtt_ids.data import RawFrame

FRAMES = [
    RawFrame(ts_sec=1590000000, ts_frac=1, captured_len=60, original_len=60, data=bytes(range(60))),
    RawFrame(ts_sec=1590000000, ts_frac=999999, captured_len=64, original_len=1514, data=b"\xab" * 64),
    RawFrame(ts_sec=1590000001, ts_frac=0, captured_len=0, original_len=0, data=b""),
]


def test_WHEN_little_endian_capture_written_THEN_frames_read_back_in_order():
    frames = list(iter_capture(BytesIO(pcap_bytes(FRAMES))))
    assert frames == FRAMES


def test_WHEN_big_endian_nanosecond_capture_written_THEN_frames_read_back_with_nanosecond_timestamps():
    nano = [RawFrame(ts_sec=f.ts_sec, ts_frac=f.ts_frac, captured_len=f.captured_len, original_len=f.original_len,
                     data=f.data, nanosecond=True) for f in FRAMES]
    frames = list(iter_capture(BytesIO(pcap_bytes(nano, little_endian=False, nanosecond=True))))
    assert frames == nano
    assert frames[1].timestamp == pytest.approx(1590000000.000999999)


def test_WHEN_capture_read_from_path_THEN_same_as_stream(tmp_path):
    path = tmp_path / "capture.pcap"
    path.write_bytes(pcap_bytes(FRAMES))
    assert list(read_capture(path)) == FRAMES


def test_WHEN_magic_unknown_THEN_bad_magic():
    with pytest.raises(BadMagicException):
        list(iter_capture(BytesIO(b"NOTAPCAPFILE" * 4)))


def test_WHEN_file_empty_THEN_bad_magic():
    with pytest.raises(BadMagicException):
        list(iter_capture(BytesIO(b"")))


def test_WHEN_link_type_not_ethernet_THEN_unsupported():
    header = bytes(dpkt.pcap.LEFileHdr(linktype=101))
    with pytest.raises(UnsupportedLinkTypeException):
        list(iter_capture(BytesIO(header)))


def test_WHEN_last_record_truncated_THEN_earlier_frames_yielded_before_error():
    capture = pcap_bytes(FRAMES[:2])[:-10]
    frames = iter_capture(BytesIO(capture))
    assert next(frames) == FRAMES[0]
    with pytest.raises(TruncatedRecordException):
        next(frames)


def test_WHEN_record_header_cut_short_THEN_truncated():
    capture = pcap_bytes(FRAMES[:1]) + pcap_record(FRAMES[1])[:7]
    with pytest.raises(TruncatedRecordException):
        list(iter_capture(BytesIO(capture)))


def test_WHEN_original_length_below_captured_THEN_raised_to_captured_length():
    odd = RawFrame(ts_sec=1, ts_frac=0, captured_len=60, original_len=20, data=bytes(60))
    frames = list(iter_capture(BytesIO(pcap_bytes([odd]))))
    assert frames[0].original_len == 60
