"""Auditor models."""
from enum import Enum
from typing import Dict, Iterator, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, computed_field, model_validator

from gas_model.models import WarmReason
from trace_core.models import Address, StorageKey, TxHash


class Reason(str, Enum):
    """Why an access list item costs gas it does not need to."""
    DUPLICATE = "Duplicate"
    AUTO_WARM_SENDER = "AutoWarmSender"
    AUTO_WARM_RECIPIENT = "AutoWarmRecipient"
    AUTO_WARM_PRODUCER = "AutoWarmProducer"
    AUTO_WARM_CREATED = "AutoWarmCreated"
    AUTO_WARM_PRECOMPILE = "AutoWarmPrecompile"
    NEVER_ACCESSED = "NeverAccessed"
    UNPROFITABLE = "Unprofitable"
    MISSING_ADDRESS = "MissingAddress"
    MISSING_KEY = "MissingKey"


AUTO_WARM_REASONS: Dict[WarmReason, Reason] = {
    WarmReason.SENDER: Reason.AUTO_WARM_SENDER,
    WarmReason.RECIPIENT: Reason.AUTO_WARM_RECIPIENT,
    WarmReason.PRODUCER: Reason.AUTO_WARM_PRODUCER,
    WarmReason.CREATED: Reason.AUTO_WARM_CREATED,
    WarmReason.PRECOMPILE: Reason.AUTO_WARM_PRECOMPILE,
}


class Finding(BaseModel):
    """One defective or missing access list item and the gas it accounts for."""
    model_config = ConfigDict(frozen=True)

    address: Address
    key: Optional[StorageKey] = None
    reason: Reason
    regret: int


class AuditReport(BaseModel):
    """Imperfections of one declared access list against its trace."""
    model_config = ConfigDict(frozen=True)

    tx_hash: TxHash
    superfluous_addresses: Tuple[Finding, ...] = ()
    superfluous_keys: Tuple[Finding, ...] = ()
    missing_addresses: Tuple[Finding, ...] = ()
    missing_keys: Tuple[Finding, ...] = ()
    delta_declared: int = 0
    delta_optimal: int = 0
    delta_declared_wei: int = 0
    delta_optimal_wei: int = 0
    regret: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _regret_is_difference(self) -> "AuditReport":
        if self.regret != self.delta_declared - self.delta_optimal:
            raise ValueError("regret must equal delta_declared - delta_optimal")
        return self

    @property
    def is_imperfect(self) -> bool:
        return self.regret > 0

    @property
    def pays_more(self) -> bool:
        return self.delta_declared > 0

    def findings(self) -> Iterator[Finding]:
        yield from self.superfluous_addresses
        yield from self.superfluous_keys
        yield from self.missing_addresses
        yield from self.missing_keys

    def reasons(self) -> set:
        return {finding.reason for finding in self.findings()}


class TxMeta(BaseModel):
    """Per-transaction flags feeding aggregation."""
    model_config = ConfigDict(frozen=True)

    tx_hash: TxHash
    has_tal: bool
    delta_optimal: int = 0
    delta_optimal_wei: int = 0


def bucket_index(value: int) -> int:
    """Signed decade of a delta: 0 for zero, +/-n for |value| in [10**(n-1), 10**n)."""
    if value == 0:
        return 0
    digits = len(str(abs(value)))
    return digits if value > 0 else -digits


def bucket_edges(index: int) -> Tuple[int, int]:
    if index == 0:
        return 0, 0
    if index > 0:
        return 10 ** (index - 1), 10 ** index
    return -(10 ** -index), -(10 ** (-index - 1))


class DeltaHistogram(BaseModel):
    """Log-spaced, sign-symmetric histogram of gas and wei deltas."""

    gas: Dict[int, int] = Field(default_factory=dict)
    wei: Dict[int, int] = Field(default_factory=dict)

    def add(self, delta_gas: int, delta_wei: int) -> None:
        index = bucket_index(delta_gas)
        self.gas[index] = self.gas.get(index, 0) + 1
        index = bucket_index(delta_wei)
        self.wei[index] = self.wei.get(index, 0) + 1

    def merge(self, other: "DeltaHistogram") -> "DeltaHistogram":
        merged = DeltaHistogram(gas=dict(self.gas), wei=dict(self.wei))
        for index, count in other.gas.items():
            merged.gas[index] = merged.gas.get(index, 0) + count
        for index, count in other.wei.items():
            merged.wei[index] = merged.wei.get(index, 0) + count
        return merged

    def rows(self, axis: str) -> List[Tuple[int, int, int]]:
        """(bucket_low, bucket_high, count) over the contiguous occupied range."""
        counts = self.gas if axis == "gas" else self.wei
        if not counts:
            return []
        return [
            (*bucket_edges(index), counts.get(index, 0))
            for index in range(min(counts), max(counts) + 1)
        ]


class AggregateStats(BaseModel):
    """Corpus-level audit statistics. Partial values merge associatively."""

    n_txs: int = 0
    n_with_tal: int = 0
    n_imperfect: int = 0
    n_pays_more: int = 0
    n_would_benefit: int = 0
    counts_by_reason: Dict[Reason, int] = Field(default_factory=dict)
    total_gas_saved_declared: int = 0
    total_gas_saved_optimal: int = 0
    total_wei_saved_declared: int = 0
    total_wei_saved_optimal: int = 0
    histogram_declared: DeltaHistogram = Field(default_factory=DeltaHistogram)
    histogram_optimal: DeltaHistogram = Field(default_factory=DeltaHistogram)

    @staticmethod
    def _ratio(numerator: int, denominator: int) -> float:
        return numerator / denominator if denominator else 0.0

    @computed_field
    @property
    def frac_with_tal(self) -> float:
        return self._ratio(self.n_with_tal, self.n_txs)

    @computed_field
    @property
    def frac_imperfect(self) -> float:
        """Share of declared access lists with positive regret."""
        return self._ratio(self.n_imperfect, self.n_with_tal)

    @computed_field
    @property
    def frac_pays_more(self) -> float:
        """Share of declared access lists that cost more than sending none."""
        return self._ratio(self.n_pays_more, self.n_with_tal)

    @computed_field
    @property
    def frac_would_benefit(self) -> float:
        return self._ratio(self.n_would_benefit, self.n_txs)

    @computed_field
    @property
    def capture_ratio_gas(self) -> float:
        """Declared savings as a share of the savings optimal lists would give all txs."""
        return self._ratio(self.total_gas_saved_declared, self.total_gas_saved_optimal)

    @computed_field
    @property
    def capture_ratio_wei(self) -> float:
        return self._ratio(self.total_wei_saved_declared, self.total_wei_saved_optimal)

    def merge(self, other: "AggregateStats") -> "AggregateStats":
        counts = dict(self.counts_by_reason)
        for reason, count in other.counts_by_reason.items():
            counts[reason] = counts.get(reason, 0) + count
        return AggregateStats(
            n_txs=self.n_txs + other.n_txs,
            n_with_tal=self.n_with_tal + other.n_with_tal,
            n_imperfect=self.n_imperfect + other.n_imperfect,
            n_pays_more=self.n_pays_more + other.n_pays_more,
            n_would_benefit=self.n_would_benefit + other.n_would_benefit,
            counts_by_reason=counts,
            total_gas_saved_declared=self.total_gas_saved_declared + other.total_gas_saved_declared,
            total_gas_saved_optimal=self.total_gas_saved_optimal + other.total_gas_saved_optimal,
            total_wei_saved_declared=self.total_wei_saved_declared + other.total_wei_saved_declared,
            total_wei_saved_optimal=self.total_wei_saved_optimal + other.total_wei_saved_optimal,
            histogram_declared=self.histogram_declared.merge(other.histogram_declared),
            histogram_optimal=self.histogram_optimal.merge(other.histogram_optimal),
        )
