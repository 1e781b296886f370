"""Classification of declared access list imperfections."""
from typing import Dict, List, Tuple

import structlog

from auditor.models import AUTO_WARM_REASONS, AuditReport, Finding, Reason
from gas_model.charging import auto_warm_reasons
from gas_model.models import ForkConfig, GasSchedule
from optimizer.optimizer import access_profile, entry_gain, optimal_tal, tal_delta
from trace_core.models import AccessList, AccessTrace
from trace_core.validation import first_touch_sets

logger = structlog.get_logger()


def audit(
    trace: AccessTrace,
    declared: AccessList,
    schedule: GasSchedule,
    fork: ForkConfig,
) -> AuditReport:
    """Compare a declared access list with the optimal one for the same trace.

    Every finding carries the gas it accounts for; findings of one report sum
    to its regret. Entries are tagged with the first applicable reason in the
    order Duplicate, AutoWarm*, NeverAccessed. An entry that is gas-neutral
    (break-even tie) is not a finding.
    """
    schedule.require_access_lists()
    optimal = optimal_tal(trace, schedule, fork)
    optimal_keys = {entry.address: entry.storage_keys for entry in optimal.entries}
    profile = access_profile(trace)
    touched_slots = first_touch_sets(trace).accessed_storage_keys
    warm = auto_warm_reasons(trace.ctx, fork)
    key_saving = schedule.per_key_saving

    address_findings: List[Tuple[int, Finding]] = []
    key_findings: List[Finding] = []
    first_entry: Dict[str, int] = {}
    useful_keys: Dict[str, int] = {}
    declared_slots = set()

    for index, entry in enumerate(declared.entries):
        address = entry.address
        if address in first_entry:
            address_findings.append((index, Finding(
                address=address, reason=Reason.DUPLICATE, regret=schedule.access_list_address_cost,
            )))
        else:
            first_entry[address] = index
            useful_keys[address] = 0

        for key in entry.storage_keys:
            slot = (address, key)
            if slot in declared_slots:
                reason, regret = Reason.DUPLICATE, schedule.access_list_storage_key_cost
            elif slot not in touched_slots:
                reason, regret = Reason.NEVER_ACCESSED, schedule.access_list_storage_key_cost
            elif key_saving < 0:
                reason, regret = Reason.UNPROFITABLE, -key_saving
            else:
                reason = None
                useful_keys[address] += 1
            declared_slots.add(slot)
            if reason is not None:
                key_findings.append(Finding(address=address, key=key, reason=reason, regret=regret))

    for address, index in first_entry.items():
        if address in optimal_keys:
            continue
        accesses = profile.get(address)
        gain = entry_gain(
            schedule,
            useful_keys[address],
            accesses.address_event if accesses else False,
            address in warm,
        )
        if gain >= 0:
            continue
        if address in warm:
            reason = AUTO_WARM_REASONS[warm[address]]
        elif accesses is None:
            reason = Reason.NEVER_ACCESSED
        else:
            reason = Reason.UNPROFITABLE
        address_findings.append((index, Finding(address=address, reason=reason, regret=-gain)))

    missing_addresses = []
    missing_keys = []
    for address, keys in optimal_keys.items():
        if address not in first_entry:
            # The whole entry is one row: its keys may be what pays for the address.
            missing_addresses.append(Finding(
                address=address,
                reason=Reason.MISSING_ADDRESS,
                regret=entry_gain(schedule, len(keys), profile[address].address_event, address in warm),
            ))
            continue
        missing_keys.extend(
            Finding(address=address, key=key, reason=Reason.MISSING_KEY, regret=key_saving)
            for key in keys
            if (address, key) not in declared_slots
        )

    declared_delta = tal_delta(trace, declared, schedule, fork)
    optimal_delta = tal_delta(trace, optimal, schedule, fork)
    report = AuditReport(
        tx_hash=trace.tx_hash,
        superfluous_addresses=tuple(finding for _, finding in sorted(address_findings, key=lambda f: f[0])),
        superfluous_keys=tuple(key_findings),
        missing_addresses=tuple(missing_addresses),
        missing_keys=tuple(missing_keys),
        delta_declared=declared_delta.vs_empty,
        delta_optimal=optimal_delta.vs_empty,
        delta_declared_wei=declared_delta.vs_empty_wei,
        delta_optimal_wei=optimal_delta.vs_empty_wei,
        regret=declared_delta.vs_empty - optimal_delta.vs_empty,
    )
    if report.is_imperfect:
        logger.debug(
            "Declared access list is imperfect",
            tx_hash=report.tx_hash,
            regret=report.regret,
            reasons=sorted(reason.value for reason in report.reasons()),
        )
    return report
