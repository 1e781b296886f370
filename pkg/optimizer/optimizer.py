"""Optimal access list generation and gas delta evaluation."""
from typing import AbstractSet, Dict, List, NamedTuple

import structlog

from gas_model.charging import auto_warm_reasons, charge_accesses
from gas_model.models import ForkConfig, GasSchedule, WarmReason
from optimizer.models import TalDelta
from shared.exceptions import TxMismatch
from trace_core.models import AccessList, AccessListEntry, AccessTrace
from trace_core.validation import validate_trace

logger = structlog.get_logger()

ALL_EXCLUSIONS: AbstractSet[WarmReason] = frozenset(WarmReason)
NO_EXCLUSIONS: AbstractSet[WarmReason] = frozenset()


class AddressAccesses(NamedTuple):
    keys: List[str]         # distinct keys, first-touch order
    address_event: bool     # the address itself was accessed (not only its slots)


def access_profile(trace: AccessTrace) -> Dict[str, AddressAccesses]:
    """Accessed addresses in first-touch order with their distinct accessed keys."""
    profile: Dict[str, AddressAccesses] = {}
    seen_slots = set()
    for event in trace.events:
        accesses = profile.get(event.address)
        if accesses is None:
            accesses = profile[event.address] = AddressAccesses(keys=[], address_event=False)
        if event.kind.is_storage:
            if (event.address, event.key) not in seen_slots:
                seen_slots.add((event.address, event.key))
                accesses.keys.append(event.key)
        elif not accesses.address_event:
            profile[event.address] = accesses._replace(address_event=True)
    return profile


def entry_gain(
    schedule: GasSchedule,
    n_keys: int,
    address_event: bool,
    auto_warm: bool,
) -> int:
    """Gas saved by listing an address with n of its accessed keys (negative = loss)."""
    address_saving = 0
    if address_event and not auto_warm:
        address_saving = schedule.cold_account_access_cost - schedule.warm_access_cost
    return address_saving - schedule.access_list_address_cost + n_keys * schedule.per_key_saving


def optimal_tal(
    trace: AccessTrace,
    schedule: GasSchedule,
    fork: ForkConfig,
    exclusions: AbstractSet[WarmReason] = ALL_EXCLUSIONS,
) -> AccessList:
    """Gas-minimal access list for a trace.

    An address is listed only when doing so strictly saves gas; break-even
    ties are left out. ``exclusions`` names the auto-warm categories the
    generator knows about; leaving some out reproduces generators that list
    auto-warm addresses anyway.
    """
    schedule.require_access_lists()
    validate_trace(trace)
    known_warm = {
        address for address, reason in auto_warm_reasons(trace.ctx, fork).items()
        if reason in exclusions
    }
    list_keys = schedule.per_key_saving > 0

    entries = []
    for address, accesses in access_profile(trace).items():
        keys = accesses.keys if list_keys else []
        gain = entry_gain(schedule, len(keys), accesses.address_event, address in known_warm)
        if gain > 0:
            entries.append(AccessListEntry(address=address, storage_keys=tuple(keys)))
    return AccessList(entries=tuple(entries))


def tal_delta(
    trace: AccessTrace,
    tal: AccessList,
    schedule: GasSchedule,
    fork: ForkConfig,
) -> TalDelta:
    """Charge the trace with and without the access list and return the difference."""
    schedule.require_access_lists()
    with_tal = charge_accesses(trace, tal, schedule, fork)
    without_tal = charge_accesses(trace, AccessList(), schedule, fork)
    vs_empty = with_tal.total - without_tal.total
    return TalDelta(
        vs_empty=vs_empty,
        vs_empty_wei=vs_empty * trace.ctx.effective_gas_price,
        breakdown_with=with_tal,
        breakdown_without=without_tal,
    )


def cross_state_delta(
    gen_trace: AccessTrace,
    exec_trace: AccessTrace,
    schedule: GasSchedule,
    fork: ForkConfig,
) -> TalDelta:
    """Delta of an access list generated on one state and executed on another."""
    if gen_trace.tx_hash != exec_trace.tx_hash:
        raise TxMismatch(f"generation trace {gen_trace.tx_hash} != execution trace {exec_trace.tx_hash}")
    tal = optimal_tal(gen_trace, schedule, fork)
    delta = tal_delta(exec_trace, tal, schedule, fork)
    logger.debug(
        "Evaluated cross-state access list",
        tx_hash=exec_trace.tx_hash,
        generated_on=gen_trace.state_label.value,
        executed_on=exec_trace.state_label.value,
        vs_empty=delta.vs_empty,
    )
    return delta
