"""Trace and access list data model."""
from enum import Enum
from typing import Annotated, FrozenSet, Iterable, Optional, Sequence, Tuple

from pydantic import BaseModel, BeforeValidator, ConfigDict, Field

from shared.utils import HexLike, to_address, to_storage_key

Address = Annotated[str, BeforeValidator(to_address)]
StorageKey = Annotated[str, BeforeValidator(to_storage_key)]
TxHash = Annotated[str, BeforeValidator(to_storage_key)]


class EventKind(str, Enum):
    """Kind of a state access."""
    ADDRESS_ACCESS = "AddressAccess"
    STORAGE_READ = "StorageRead"
    STORAGE_WRITE = "StorageWrite"

    @property
    def is_storage(self) -> bool:
        return self is not EventKind.ADDRESS_ACCESS


class StateLabel(str, Enum):
    """State a trace was recorded on. Metadata only."""
    SOB = "SOB"
    IBS = "IBS"
    DECLARED = "Declared"
    OTHER = "Other"


class AccessEvent(BaseModel):
    """One state access of a transaction."""
    model_config = ConfigDict(frozen=True)

    kind: EventKind
    address: Address
    key: Optional[StorageKey] = None
    seq: int = Field(ge=0)


class TxContext(BaseModel):
    """Transaction facts that decide which addresses start warm."""
    model_config = ConfigDict(frozen=True)

    tx_hash: TxHash
    sender: Address
    recipient: Optional[Address] = None  # None for contract creation
    block_producer: Address
    block_number: int = Field(ge=0)
    tx_index: int = Field(ge=0)
    created_contracts: Tuple[Address, ...] = ()
    effective_gas_price: int = Field(default=0, ge=0)  # wei per gas
    block_timestamp: Optional[int] = None
    gas_used: Optional[int] = Field(default=None, ge=0)


Access = Tuple[EventKind, HexLike, Optional[HexLike]]


class AccessTrace(BaseModel):
    """Ordered state accesses of one transaction plus its context."""
    model_config = ConfigDict(frozen=True)

    ctx: TxContext
    events: Tuple[AccessEvent, ...] = ()
    state_label: StateLabel = StateLabel.IBS

    @property
    def tx_hash(self) -> str:
        return self.ctx.tx_hash

    @classmethod
    def build(
        cls,
        ctx: TxContext,
        accesses: Iterable[Access],
        state_label: StateLabel = StateLabel.IBS,
    ) -> "AccessTrace":
        """Build a trace from (kind, address, key) triples, numbering them in order."""
        events = tuple(
            AccessEvent(kind=kind, address=address, key=key, seq=seq)
            for seq, (kind, address, key) in enumerate(accesses)
        )
        return cls(ctx=ctx, events=events, state_label=state_label)


class AccessListEntry(BaseModel):
    """One access list entry: an address and the storage keys listed under it."""
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    address: Address
    storage_keys: Tuple[StorageKey, ...] = Field(default=(), alias="storageKeys")


class AccessList(BaseModel):
    """Transaction access list. Duplicate entries are legal."""
    model_config = ConfigDict(frozen=True)

    entries: Tuple[AccessListEntry, ...] = ()

    @classmethod
    def of(cls, pairs: Iterable[Tuple[HexLike, Sequence[HexLike]]]) -> "AccessList":
        return cls(entries=tuple(
            AccessListEntry(address=address, storage_keys=tuple(keys)) for address, keys in pairs
        ))

    @property
    def storage_key_count(self) -> int:
        return sum(len(entry.storage_keys) for entry in self.entries)


class WarmSets(BaseModel):
    """Warm addresses and warm (address, key) pairs.

    Address warmth and slot warmth are independent.
    """
    model_config = ConfigDict(frozen=True)

    accessed_addresses: FrozenSet[Address] = frozenset()
    accessed_storage_keys: FrozenSet[Tuple[Address, StorageKey]] = frozenset()


class DeclaredTal(BaseModel):
    """Access list a transaction actually carried; None when the field is absent."""
    model_config = ConfigDict(frozen=True)

    tx_hash: TxHash
    block_number: int = Field(ge=0)
    tx_index: int = Field(ge=0)
    access_list: Optional[AccessList] = None


