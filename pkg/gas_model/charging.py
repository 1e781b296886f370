"""Auto-warm derivation and deterministic charging of a trace under an access list."""
from functools import lru_cache
from typing import Dict, Tuple

from gas_model.models import ForkConfig, GasBreakdown, GasSchedule, WarmReason, WarmSets
from shared.exceptions import UnsupportedSchedule
from shared.utils import to_address
from trace_core.models import AccessList, AccessTrace, TxContext
from trace_core.validation import validate_trace


@lru_cache(maxsize=None)
def precompile_addresses(precompile_max: int) -> Tuple[str, ...]:
    return tuple(to_address(ordinal) for ordinal in range(1, precompile_max + 1))


def auto_warm_reasons(ctx: TxContext, fork: ForkConfig) -> Dict[str, WarmReason]:
    """Addresses warm at transaction start, each with the first reason that applies.

    Order: sender, recipient, block producer, created contracts, precompiles.
    """
    reasons: Dict[str, WarmReason] = {}
    reasons.setdefault(ctx.sender, WarmReason.SENDER)
    if ctx.recipient is not None:
        reasons.setdefault(ctx.recipient, WarmReason.RECIPIENT)
    if fork.coinbase_auto_warm:
        reasons.setdefault(ctx.block_producer, WarmReason.PRODUCER)
    for created in ctx.created_contracts:
        reasons.setdefault(created, WarmReason.CREATED)
    for precompile in precompile_addresses(fork.precompile_max):
        reasons.setdefault(precompile, WarmReason.PRECOMPILE)
    return reasons


def auto_warm_addresses(ctx: TxContext, fork: ForkConfig) -> WarmSets:
    return WarmSets(accessed_addresses=frozenset(auto_warm_reasons(ctx, fork)))


def tal_upfront_cost(tal: AccessList, schedule: GasSchedule) -> int:
    """Upfront charge of an access list; duplicates are charged per occurrence."""
    schedule.require_access_lists()
    return sum(
        schedule.access_list_address_cost
        + len(entry.storage_keys) * schedule.access_list_storage_key_cost
        for entry in tal.entries
    )


def _charge_flat(trace: AccessTrace, schedule: GasSchedule) -> GasBreakdown:
    address_events = sum(1 for event in trace.events if not event.kind.is_storage)
    slot_events = len(trace.events) - address_events
    access_gas = address_events * schedule.cold_account_access_cost + slot_events * schedule.cold_sload_cost
    return GasBreakdown(
        access_gas=access_gas,
        total=access_gas,
        cold_address_events=address_events,
        cold_slot_events=slot_events,
    )


def charge_accesses(
    trace: AccessTrace,
    tal: AccessList,
    schedule: GasSchedule,
    fork: ForkConfig,
) -> GasBreakdown:
    """Charge every access of the trace, starting from auto-warm plus access-list warmth.

    Storage writes pay the same cold/warm surcharge as reads.
    """
    validate_trace(trace)
    if not schedule.tracks_warmth:
        if tal.entries:
            raise UnsupportedSchedule(f"schedule {schedule.name!r} has no access list pricing")
        return _charge_flat(trace, schedule)

    upfront = tal_upfront_cost(tal, schedule)
    warm_addresses = set(auto_warm_reasons(trace.ctx, fork))
    warm_slots = set()
    for entry in tal.entries:
        warm_addresses.add(entry.address)
        warm_slots.update((entry.address, key) for key in entry.storage_keys)

    cold_address = warm_address = cold_slot = warm_slot = 0
    for event in trace.events:
        if event.kind.is_storage:
            slot = (event.address, event.key)
            if slot in warm_slots:
                warm_slot += 1
            else:
                cold_slot += 1
                warm_slots.add(slot)
        elif event.address in warm_addresses:
            warm_address += 1
        else:
            cold_address += 1
            warm_addresses.add(event.address)

    access_gas = (
        cold_address * schedule.cold_account_access_cost
        + warm_address * schedule.warm_access_cost
        + cold_slot * schedule.cold_sload_cost
        + warm_slot * schedule.warm_access_cost
    )
    return GasBreakdown(
        upfront_tal_cost=upfront,
        access_gas=access_gas,
        total=upfront + access_gas,
        cold_address_events=cold_address,
        warm_address_events=warm_address,
        cold_slot_events=cold_slot,
        warm_slot_events=warm_slot,
    )
