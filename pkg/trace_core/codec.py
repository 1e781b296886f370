"""Canonical JSON encoding of access lists, traces and declared-TAL rows."""
import json
from typing import Annotated, Any, List, Optional

from pydantic import AfterValidator, BaseModel, ConfigDict, StringConstraints, TypeAdapter, ValidationError

from shared.exceptions import SchemaError, TraceError
from trace_core.models import AccessList, AccessListEntry, AccessTrace, DeclaredTal
from trace_core.validation import json_path, validate_trace

_COMPACT = (",", ":")

# Transaction accessList fields are fixed width; short hex is rejected, not padded.
_lowered = AfterValidator(lambda value: value.lower())
WireAddress = Annotated[str, StringConstraints(pattern=r"^0x[0-9a-fA-F]{40}$"), _lowered]
WireStorageKey = Annotated[str, StringConstraints(pattern=r"^0x[0-9a-fA-F]{64}$"), _lowered]


class _WireEntry(BaseModel):
    """accessList element exactly as it appears in a transaction."""
    model_config = ConfigDict(extra="forbid")

    address: WireAddress
    storageKeys: List[WireStorageKey]


_WIRE_LIST = TypeAdapter(List[_WireEntry])


def tal_to_wire(tal: AccessList) -> List[dict]:
    return [
        {"address": entry.address, "storageKeys": list(entry.storage_keys)}
        for entry in tal.entries
    ]


def tal_from_wire(data: Any, root: str = "$") -> AccessList:
    """Validate a decoded accessList value."""
    try:
        entries = _WIRE_LIST.validate_python(data)
    except ValidationError as e:
        error = e.errors()[0]
        raise SchemaError(error["msg"], path=json_path(error["loc"], root)) from e
    return AccessList(entries=tuple(
        AccessListEntry(address=entry.address, storage_keys=tuple(entry.storageKeys))
        for entry in entries
    ))


def encode_tal(tal: AccessList) -> str:
    """Canonical JSON text of an access list (lowercase fixed-width hex)."""
    return json.dumps(tal_to_wire(tal), separators=_COMPACT)


def decode_tal(text: str) -> AccessList:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError(f"invalid JSON: {e.msg}", path="$") from e
    return tal_from_wire(data)


def encode_trace(trace: AccessTrace) -> str:
    """One NDJSON line (without newline) for a trace."""
    return json.dumps(trace.model_dump(mode="json"), separators=_COMPACT)


def decode_trace(text: str, line: Optional[int] = None) -> AccessTrace:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError(f"invalid JSON: {e.msg}", path="$", line=line) from e
    try:
        return validate_trace(data)
    except SchemaError as e:
        raise SchemaError(e.detail, path=e.path, line=line) from e
    except TraceError as e:
        if line is None:
            raise
        raise SchemaError(str(e), path="$.events", line=line) from e


def encode_declared(row: DeclaredTal) -> str:
    payload = {
        "tx_hash": row.tx_hash,
        "block_number": row.block_number,
        "tx_index": row.tx_index,
        "access_list": None if row.access_list is None else tal_to_wire(row.access_list),
    }
    return json.dumps(payload, separators=_COMPACT)


def decode_declared(text: str, line: Optional[int] = None) -> DeclaredTal:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError(f"invalid JSON: {e.msg}", path="$", line=line) from e
    if not isinstance(data, dict):
        raise SchemaError("declared row must be an object", path="$", line=line)
    raw_list = data.get("access_list")
    try:
        access_list = None if raw_list is None else tal_from_wire(raw_list, "$.access_list")
    except SchemaError as e:
        raise SchemaError(e.detail, path=e.path, line=line) from e
    try:
        return DeclaredTal(
            tx_hash=data.get("tx_hash"),
            block_number=data.get("block_number"),
            tx_index=data.get("tx_index"),
            access_list=access_list,
        )
    except ValidationError as e:
        error = e.errors()[0]
        raise SchemaError(error["msg"], path=json_path(error["loc"]), line=line) from e
