"""Shared utility functions."""
import re
from datetime import date, datetime
from typing import Tuple, Union

from dateutil import tz
from eth_utils import encode_hex, to_bytes, to_int

ADDRESS_BYTES = 20
STORAGE_KEY_BYTES = 32

_HEX_RE = re.compile(r"^0[xX][0-9a-fA-F]*$")

HexLike = Union[str, int, bytes]


def _fixed_width_hex(value: HexLike, width: int, what: str) -> str:
    if isinstance(value, bool):
        raise ValueError(f"{what} must be hex, got {value!r}")
    if isinstance(value, int):
        if value < 0 or value >= 1 << (8 * width):
            raise ValueError(f"{what} out of range: {value}")
        raw = value.to_bytes(width, "big")
    elif isinstance(value, bytes):
        raw = value
    elif isinstance(value, str) and _HEX_RE.match(value):
        raw = to_bytes(hexstr=value)
    else:
        raise ValueError(f"{what} must be a 0x-prefixed hex string, got {value!r}")
    if len(raw) > width:
        raise ValueError(f"{what} longer than {width} bytes: {value!r}")
    return encode_hex(raw.rjust(width, b"\x00"))


def to_address(value: HexLike) -> str:
    """Canonical address: lowercase, 0x-prefixed, zero-padded to 20 bytes."""
    return _fixed_width_hex(value, ADDRESS_BYTES, "address")


def to_storage_key(value: HexLike) -> str:
    """Canonical storage key: lowercase, 0x-prefixed, zero-padded to 32 bytes."""
    return _fixed_width_hex(value, STORAGE_KEY_BYTES, "storage key")


def word_to_address(word: HexLike) -> str:
    """Address held in the low 160 bits of a 32-byte stack word."""
    number = word if isinstance(word, int) else int(word, 16)
    return to_address(number & ((1 << 160) - 1))


def quantity(value: Union[str, int, None], default: int = 0) -> int:
    """Decode a JSON-RPC quantity ("0x..." or int)."""
    if value is None:
        return default
    if isinstance(value, int):
        return value
    return to_int(hexstr=value)


def utc_date(timestamp: int) -> date:
    """Calendar day (UTC) of a unix timestamp."""
    return datetime.fromtimestamp(timestamp, tz=tz.UTC).date()


def parse_block_range(text: str) -> Tuple[int, int]:
    """Parse an inclusive block range "A..B" (or a single block "A")."""
    start, sep, end = text.partition("..")
    try:
        first = int(start, 0)
        last = int(end, 0) if sep else first
    except ValueError:
        raise ValueError(f"invalid block range {text!r}, expected A..B")
    if first < 0 or last < first:
        raise ValueError(f"empty or negative block range {text!r}")
    return first, last
