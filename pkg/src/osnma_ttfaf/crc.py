"""CRC-24Q as used by the Galileo I/NAV page."""

CRC24Q_POLY = 0x1864CFB


def _make_table() -> list[int]:
    table = []
    for byte in range(256):
        crc = byte << 16
        for _ in range(8):
            crc <<= 1
            if crc & 0x1000000:
                crc ^= CRC24Q_POLY
        table.append(crc & 0xFFFFFF)
    return table


_TABLE = _make_table()


def crc24q(data: bytes, crc: int = 0) -> int:
    for byte in data:
        crc = ((crc << 8) & 0xFFFFFF) ^ _TABLE[(crc >> 16) ^ byte]
    return crc


def crc24q_bits(value: int, nbits: int) -> int:
    """CRC over the ``nbits`` least significant bits of ``value``.

    Leading zero bits do not change a zero-init CRC, so the message is
    left-padded to whole bytes.
    """
    nbytes = (nbits + 7) // 8
    return crc24q(value.to_bytes(nbytes, "big"))
