"""Trace validation and first-touch sets."""
from typing import Any, Mapping, Sequence, Union

from pydantic import ValidationError

from shared.exceptions import (
    MalformedAddress,
    MissingKey,
    NonMonotonicSeq,
    SchemaError,
    UnexpectedKey,
)
from trace_core.models import AccessEvent, AccessTrace, EventKind, StateLabel, TxContext, WarmSets


def json_path(loc: Sequence[Union[str, int]], root: str = "$") -> str:
    """Render a pydantic error location as a JSON path."""
    path = root
    for part in loc:
        path += f"[{part}]" if isinstance(part, int) else f".{part}"
    return path


def _check_events(events: Sequence[AccessEvent]) -> None:
    previous = None
    for index, event in enumerate(events):
        if event.kind.is_storage and event.key is None:
            raise MissingKey(f"{event.kind.value} event without storage key", index=index)
        if not event.kind.is_storage and event.key is not None:
            raise UnexpectedKey("AddressAccess event with storage key", index=index)
        if previous is not None and event.seq <= previous:
            raise NonMonotonicSeq(f"seq {event.seq} does not follow {previous}", index=index)
        previous = event.seq


def _parse_event(raw: Any, index: int) -> AccessEvent:
    path = f"$.events[{index}]"
    if not isinstance(raw, Mapping):
        raise SchemaError("event must be an object", path=path)
    try:
        kind = EventKind(raw.get("kind"))
    except ValueError:
        raise SchemaError(f"unknown event kind {raw.get('kind')!r}", path=f"{path}.kind")
    if kind.is_storage and raw.get("key") is None:
        raise MissingKey(f"{kind.value} event without storage key", index=index)
    if not kind.is_storage and raw.get("key") is not None:
        raise UnexpectedKey("AddressAccess event with storage key", index=index)
    try:
        return AccessEvent.model_validate(raw)
    except ValidationError as e:
        error = e.errors()[0]
        field = error["loc"][0] if error["loc"] else None
        if field in ("address", "key"):
            raise MalformedAddress(f"malformed {field}: {error['msg']}", index=index) from e
        raise SchemaError(error["msg"], path=json_path(error["loc"], path)) from e


def validate_trace(raw: Union[AccessTrace, Mapping[str, Any]]) -> AccessTrace:
    """Return the trace iff every trace invariant holds.

    Accepts an already-built trace or its decoded JSON form. Errors name the
    offending event index.
    """
    if isinstance(raw, AccessTrace):
        _check_events(raw.events)
        return raw

    if not isinstance(raw, Mapping):
        raise SchemaError("trace must be an object", path="$")
    try:
        ctx = TxContext.model_validate(raw.get("ctx"))
    except ValidationError as e:
        error = e.errors()[0]
        raise SchemaError(error["msg"], path=json_path(error["loc"], "$.ctx")) from e

    raw_events = raw.get("events", [])
    if not isinstance(raw_events, list):
        raise SchemaError("events must be an array", path="$.events")
    events = tuple(_parse_event(event, index) for index, event in enumerate(raw_events))

    try:
        label = StateLabel(raw.get("state_label", StateLabel.IBS.value))
    except ValueError:
        raise SchemaError(f"unknown state label {raw.get('state_label')!r}", path="$.state_label")

    _check_events(events)
    return AccessTrace(ctx=ctx, events=events, state_label=label)


def first_touch_sets(trace: AccessTrace) -> WarmSets:
    """Distinct accessed addresses and (address, key) pairs of a trace.

    A storage event implies its address was touched.
    """
    addresses = set()
    slots = set()
    for event in trace.events:
        addresses.add(event.address)
        if event.kind.is_storage:
            slots.add((event.address, event.key))
    return WarmSets(accessed_addresses=frozenset(addresses), accessed_storage_keys=frozenset(slots))
