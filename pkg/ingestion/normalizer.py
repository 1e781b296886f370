"""Turns raw tracer output into access traces."""
import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Literal, Optional, Tuple

import structlog
from pydantic import BaseModel, ValidationError

from ingestion.models import RawTraceDocument
from shared.exceptions import ConfigError, NormalizationError, SchemaError, TraceError
from shared.utils import to_address, to_storage_key, word_to_address
from trace_core.models import AccessTrace, EventKind, StateLabel, TxContext
from trace_core.validation import validate_trace

logger = structlog.get_logger()

PRESTATE_TRACER = "prestateTracer"
CALL_TRACER = "callTracer"
STRUCT_LOGS = "structLogs"


class _StackOperand(BaseModel):
    stack_index: int


class _CallOperand(_StackOperand):
    storage_context: Literal["callee", "caller"]


class _StorageOperand(_StackOperand):
    kind: Literal["StorageRead", "StorageWrite"]


class _OpcodeTable(BaseModel):
    schema_version: str
    fork: str
    address_opcodes: Dict[str, _StackOperand]
    call_opcodes: Dict[str, _CallOperand]
    storage_opcodes: Dict[str, _StorageOperand]
    create_opcodes: List[str]


class OpcodeMap:
    """Opcode to access-event mapping, loaded from JSON so forks can extend it."""

    def __init__(self, map_path: Optional[Path] = None):
        if map_path is None:
            map_path = Path(__file__).parent / "opcode-map.json"
        self.map_path = Path(map_path)
        self._load_map()

    def _load_map(self) -> None:
        try:
            with open(self.map_path, "r") as f:
                table = _OpcodeTable.model_validate(json.load(f))
        except FileNotFoundError as e:
            raise ConfigError(f"opcode map not found: {self.map_path}") from e
        except (json.JSONDecodeError, ValidationError) as e:
            raise ConfigError(f"invalid opcode map {self.map_path}: {e}") from e

        self.fork = table.fork
        self.address_opcodes = {op: operand.stack_index for op, operand in table.address_opcodes.items()}
        self.call_opcodes = {
            op: (operand.stack_index, operand.storage_context == "callee") for op, operand in table.call_opcodes.items()
        }
        self.storage_opcodes = {
            op: (operand.stack_index, EventKind(operand.kind)) for op, operand in table.storage_opcodes.items()
        }
        self.create_opcodes = frozenset(table.create_opcodes)
        logger.debug(
            "Loaded opcode map",
            fork=self.fork,
            address_ops=len(self.address_opcodes),
            call_ops=len(self.call_opcodes),
            storage_ops=len(self.storage_opcodes),
        )


class _StorageContext:
    """Contract whose storage SLOAD/SSTORE touch; address may be known only after a create returns."""

    __slots__ = ("address",)

    def __init__(self, address: Optional[str]):
        self.address = address


def _finish(doc: RawTraceDocument, ctx: TxContext, accesses: Iterable[Tuple], label: StateLabel) -> AccessTrace:
    try:
        return validate_trace(AccessTrace.build(ctx, accesses, label))
    except (ValidationError, SchemaError, TraceError, ValueError) as e:
        raise NormalizationError(f"{doc.tracer_name} output for {doc.tx_hash} is not a valid trace: {e}", raw=doc.payload) from e


def _address(value: Any, doc: RawTraceDocument) -> str:
    try:
        return to_address(value)
    except ValueError as e:
        raise NormalizationError(f"bad address {value!r} in {doc.tracer_name} output", raw=doc.payload) from e


def normalize_prestate(
    doc: RawTraceDocument,
    ctx: TxContext,
    state_label: StateLabel,
    skip_addresses: Iterable[str] = (),
) -> AccessTrace:
    """Access trace from prestateTracer output.

    Every listed account is an address access and every listed slot a storage
    read. Accounts in skip_addresses (block producers, which the tracer lists
    for fee crediting) are dropped unless storage of theirs was read.
    Addresses and keys are emitted in sorted order.
    """
    payload = doc.payload
    if not isinstance(payload, dict):
        raise NormalizationError(f"prestate output for {doc.tx_hash} is not an object", raw=payload)
    skipped = set(skip_addresses)

    accounts: Dict[str, List[str]] = {}
    for raw_address, account in payload.items():
        address = _address(raw_address, doc)
        if account is None:
            account = {}
        if not isinstance(account, dict):
            raise NormalizationError(f"prestate account {raw_address} is not an object", raw=payload)
        storage = account.get("storage") or {}
        if not isinstance(storage, dict):
            raise NormalizationError(f"prestate storage of {raw_address} is not an object", raw=payload)
        try:
            keys = sorted(to_storage_key(key) for key in storage)
        except ValueError as e:
            raise NormalizationError(f"bad storage key under {raw_address}: {e}", raw=payload) from e
        if address in skipped and not keys:
            continue
        accounts.setdefault(address, []).extend(keys)

    accesses = []
    for address in sorted(accounts):
        accesses.append((EventKind.ADDRESS_ACCESS, address, None))
        accesses.extend((EventKind.STORAGE_READ, address, key) for key in accounts[address])
    return _finish(doc, ctx, accesses, state_label)


def created_from_call_frames(doc: RawTraceDocument) -> Tuple[str, ...]:
    """Contracts created by successful CREATE/CREATE2 frames of callTracer output, in call order."""
    created: List[str] = []

    def walk(frame: Any) -> None:
        if not isinstance(frame, dict):
            raise NormalizationError(f"call frame of {doc.tx_hash} is not an object", raw=doc.payload)
        if frame.get("type") in ("CREATE", "CREATE2") and not frame.get("error") and frame.get("to"):
            created.append(_address(frame["to"], doc))
        for child in frame.get("calls") or ():
            walk(child)

    walk(doc.payload)
    return tuple(dict.fromkeys(created))


def normalize_struct_logs(
    doc: RawTraceDocument,
    ctx: TxContext,
    state_label: StateLabel,
    opcode_map: OpcodeMap,
) -> AccessTrace:
    """Access trace from structured opcode logs filtered through the opcode map.

    Storage opcodes act on the current storage context: CALL and STATICCALL
    switch it to the callee, DELEGATECALL and CALLCODE keep the caller's.
    A CREATE frame's address is read from the stack once it returns; created
    contracts found that way are added to the context.
    """
    payload = doc.payload
    steps = payload.get("structLogs") if isinstance(payload, dict) else None
    if not isinstance(steps, list):
        raise NormalizationError(f"no structLogs in trace of {doc.tx_hash}", raw=payload)

    root = ctx.recipient or (ctx.created_contracts[0] if ctx.created_contracts else None)
    frames: List[Tuple[_StorageContext, bool]] = [(_StorageContext(root), False)]
    pending: Optional[Tuple[_StorageContext, bool]] = None
    created: List[str] = []
    accesses: List[Tuple[EventKind, Any, Optional[str]]] = []
    previous_depth: Optional[int] = None

    for index, step in enumerate(steps):
        if not isinstance(step, dict) or not isinstance(step.get("op"), str) or not isinstance(step.get("depth"), int):
            raise NormalizationError(f"malformed struct log step {index} of {doc.tx_hash}", raw=payload)
        op, depth = step["op"], step["depth"]
        stack = step.get("stack") or []

        try:
            if previous_depth is not None:
                if depth > previous_depth:
                    if pending is None or depth != previous_depth + 1:
                        raise NormalizationError(f"depth jumps to {depth} without a call at step {index}", raw=payload)
                    frames.append(pending)
                elif depth < previous_depth:
                    for _ in range(previous_depth - depth):
                        if len(frames) == 1:
                            raise NormalizationError(f"depth underflow at step {index}", raw=payload)
                        context, creates = frames.pop()
                        if creates and context.address is None and stack:
                            context.address = _created_address(stack[-1])
                            if context.address:
                                created.append(context.address)
                elif pending is not None and pending[1] and stack:
                    # create that ran no code
                    address = _created_address(stack[-1])
                    if address:
                        created.append(address)
            pending = None

            if op in opcode_map.address_opcodes:
                target = word_to_address(stack[opcode_map.address_opcodes[op]])
                accesses.append((EventKind.ADDRESS_ACCESS, target, None))
            elif op in opcode_map.call_opcodes:
                stack_index, enters_callee = opcode_map.call_opcodes[op]
                target = word_to_address(stack[stack_index])
                accesses.append((EventKind.ADDRESS_ACCESS, target, None))
                context = _StorageContext(target) if enters_callee else frames[-1][0]
                pending = (context, False)
            elif op in opcode_map.storage_opcodes:
                stack_index, kind = opcode_map.storage_opcodes[op]
                key = to_storage_key(_word(stack[stack_index]))
                accesses.append((kind, frames[-1][0], key))
            elif op in opcode_map.create_opcodes:
                pending = (_StorageContext(None), True)
        except IndexError as e:
            raise NormalizationError(f"stack underflow for {op} at step {index} of {doc.tx_hash}", raw=payload) from e
        except ValueError as e:
            raise NormalizationError(f"bad operand for {op} at step {index} of {doc.tx_hash}: {e}", raw=payload) from e
        previous_depth = depth

    resolved = []
    for kind, target, key in accesses:
        if isinstance(target, _StorageContext):
            if target.address is None:
                raise NormalizationError(
                    f"storage access in a contract of unknown address in {doc.tx_hash}", raw=payload
                )
            target = target.address
        resolved.append((kind, target, key))

    if created:
        ctx = ctx.model_copy(update={"created_contracts": tuple(dict.fromkeys((*ctx.created_contracts, *created)))})
    return _finish(doc, ctx, resolved, state_label)


def _word(value: Any) -> int:
    return int(value, 16) if isinstance(value, str) else int(value)


def _created_address(word: Any) -> Optional[str]:
    value = _word(word)
    return word_to_address(value) if value else None
