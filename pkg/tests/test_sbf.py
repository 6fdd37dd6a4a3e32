import struct
from pathlib import Path

import pytest

from osnma_ttfaf.records import read_jsonl
from osnma_ttfaf.sbf import NoInavBlocks, encode_galrawinav, ingest_sbf, sbf_crc, write_sbf

DATA = Path(__file__).parent / "data"


def bitwise_ccitt(data: bytes) -> int:
    crc = 0
    for byte in data:
        crc ^= byte << 8
        for _ in range(8):
            crc = ((crc << 1) ^ 0x1021 if crc & 0x8000 else crc << 1) & 0xFFFF
    return crc


def test_crc_matches_bitwise():
    assert sbf_crc(b"123456789") == bitwise_ccitt(b"123456789") == 0x31C3


def test_golden_file():
    result = ingest_sbf(DATA / "galrawinav_golden.sbf")
    assert result.records == read_jsonl(DATA / "galrawinav_golden.jsonl")
    assert (result.blocks, result.crc_skipped, result.other_signals, result.page_crc_failed) == (7, 0, 1, 1)
    for rec in result.records:
        rec.to_page()


def test_encode_reproduces_golden_blocks():
    data = (DATA / "galrawinav_golden.sbf").read_bytes()
    for rec in read_jsonl(DATA / "galrawinav_golden.jsonl"):
        block = encode_galrawinav(rec, rx_channel=5)
        assert block in data


def test_round_trip(ideal, tmp_path):
    records = ideal[0][:300]
    path = tmp_path / "x.sbf"
    write_sbf(path, records)
    assert ingest_sbf(path).records == records
    assert ingest_sbf(path.read_bytes()).records == records


def test_unrelated_blocks_only():
    tail = struct.pack("<HH", 4007, 16) + bytes(12)
    block = b"$@" + struct.pack("<H", sbf_crc(tail)) + tail
    with pytest.raises(NoInavBlocks):
        ingest_sbf(block * 3)
    with pytest.raises(NoInavBlocks):
        ingest_sbf(b"")


def test_corrupted_block_is_skipped(ideal):
    records = ideal[0][:5]
    blocks = [bytearray(encode_galrawinav(r)) for r in records]
    blocks[2][20] ^= 0xFF
    result = ingest_sbf(b"".join(bytes(b) for b in blocks))
    assert result.crc_skipped == 1
    assert result.records == records[:2] + records[3:]


def test_truncated_tail_ignored(ideal):
    records = ideal[0][:3]
    data = b"".join(encode_galrawinav(r) for r in records)
    result = ingest_sbf(data + encode_galrawinav(records[0])[:30])
    assert result.records == records
