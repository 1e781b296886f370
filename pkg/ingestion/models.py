"""Ingestion models."""
from enum import Enum
from typing import Any, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator

from trace_core.models import AccessList, AccessTrace, Address, DeclaredTal, TxHash


class TraceMode(str, Enum):
    """State a transaction is traced on."""
    IBS = "IBS"  # its real position in the block
    SOB = "SOB"  # end of the parent block


class NodeEndpoint(BaseModel):
    """JSON-RPC endpoint of an execution client."""
    model_config = ConfigDict(frozen=True)

    url: str
    max_concurrent_requests: int = Field(default=8, ge=1)
    request_timeout: float = Field(default=30.0, gt=0)

    @field_validator("url")
    @classmethod
    def _http_url(cls, value: str) -> str:
        if not value.startswith(("http://", "https://")):
            raise ValueError("endpoint url must be http(s)")
        return value


class RawTraceDocument(BaseModel):
    """Tracer output exactly as the node returned it."""
    model_config = ConfigDict(frozen=True)

    tx_hash: TxHash
    tracer_name: str
    payload: Any


class BlockHeader(BaseModel):
    model_config = ConfigDict(frozen=True)

    number: int
    hash: TxHash
    parent_hash: TxHash
    miner: Address
    timestamp: int
    base_fee_per_gas: Optional[int] = None


class BlockTransaction(BaseModel):
    """Transaction as listed in a block, with its declared access list if any."""
    model_config = ConfigDict(frozen=True)

    hash: TxHash
    tx_index: int
    tx_type: int = 0
    sender: Address
    recipient: Optional[Address] = None
    declared_tal: Optional[AccessList] = None  # None: field absent
    gas: int = 0
    value: int = 0
    input: str = "0x"
    gas_price: Optional[int] = None
    max_fee_per_gas: Optional[int] = None
    max_priority_fee_per_gas: Optional[int] = None


class FetchedBlock(BaseModel):
    model_config = ConfigDict(frozen=True)

    header: BlockHeader
    transactions: Tuple[BlockTransaction, ...] = ()


class Receipt(BaseModel):
    model_config = ConfigDict(frozen=True)

    tx_hash: TxHash
    status: int = 1
    gas_used: int = 0
    effective_gas_price: int = 0
    contract_address: Optional[Address] = None


class SkippedTx(BaseModel):
    """Transaction left out of a corpus, with the reason."""
    model_config = ConfigDict(frozen=True)

    tx_hash: TxHash
    block_number: int
    error: str


class BlockBundle(BaseModel):
    """Everything ingested for one block, in transaction order."""
    model_config = ConfigDict(frozen=True)

    block_number: int
    timestamp: Optional[int] = None
    traces: Tuple[AccessTrace, ...] = ()
    declared: Tuple[DeclaredTal, ...] = ()
    skipped: Tuple[SkippedTx, ...] = ()
