"""Fetches blocks, receipts and access traces from an execution client."""
import asyncio
from typing import Any, Dict, List, Optional, Sequence, Tuple

import structlog
from pydantic import ValidationError

from ingestion.client import METHOD_NOT_FOUND, RpcClient
from ingestion.config import IngestionConfig
from ingestion.models import (
    BlockBundle,
    BlockHeader,
    BlockTransaction,
    FetchedBlock,
    RawTraceDocument,
    Receipt,
    SkippedTx,
    TraceMode,
)
from ingestion.normalizer import (
    CALL_TRACER,
    PRESTATE_TRACER,
    STRUCT_LOGS,
    OpcodeMap,
    created_from_call_frames,
    normalize_prestate,
    normalize_struct_logs,
)
from shared.exceptions import NormalizationError, NotFound, RpcError, SchemaError, TracerUnsupported
from shared.utils import quantity, to_storage_key
from trace_core.codec import tal_from_wire
from trace_core.models import AccessTrace, DeclaredTal, StateLabel, TxContext

logger = structlog.get_logger()

_STRUCT_LOG_OPTIONS = {"disableStorage": True, "enableMemory": False, "enableReturnData": False}


def _unsupported(error: RpcError) -> bool:
    message = str(error).lower()
    return error.code == METHOD_NOT_FOUND or "tracer" in message and ("not found" in message or "unknown" in message)


def parse_block(raw: Any, number: int) -> FetchedBlock:
    """Decode an eth_getBlockByNumber result requested with full transactions."""
    if not isinstance(raw, dict):
        raise SchemaError("block is not an object", path="$")
    try:
        header = BlockHeader(
            number=quantity(raw.get("number"), number),
            hash=raw.get("hash"),
            parent_hash=raw.get("parentHash"),
            miner=raw.get("miner"),
            timestamp=quantity(raw.get("timestamp")),
            base_fee_per_gas=quantity(raw["baseFeePerGas"]) if raw.get("baseFeePerGas") is not None else None,
        )
    except (ValidationError, ValueError) as e:
        raise SchemaError(f"invalid header of block {number}: {e}", path="$") from e

    transactions = []
    for index, tx in enumerate(raw.get("transactions") or ()):
        root = f"$.transactions[{index}]"
        if not isinstance(tx, dict):
            raise SchemaError("transaction is not an object (request full transactions)", path=root)
        declared = None
        if "accessList" in tx and tx["accessList"] is not None:
            declared = tal_from_wire(tx["accessList"], f"{root}.accessList")
        try:
            transactions.append(BlockTransaction(
                hash=tx.get("hash"),
                tx_index=quantity(tx.get("transactionIndex"), index),
                tx_type=quantity(tx.get("type")),
                sender=tx.get("from"),
                recipient=tx.get("to"),
                declared_tal=declared,
                gas=quantity(tx.get("gas")),
                value=quantity(tx.get("value")),
                input=tx.get("input") or "0x",
                gas_price=quantity(tx["gasPrice"]) if tx.get("gasPrice") is not None else None,
                max_fee_per_gas=quantity(tx["maxFeePerGas"]) if tx.get("maxFeePerGas") is not None else None,
                max_priority_fee_per_gas=(
                    quantity(tx["maxPriorityFeePerGas"]) if tx.get("maxPriorityFeePerGas") is not None else None
                ),
            ))
        except (ValidationError, ValueError) as e:
            raise SchemaError(f"invalid transaction: {e}", path=root) from e
    return FetchedBlock(header=header, transactions=tuple(transactions))


def parse_receipt(raw: Any, tx_hash: str) -> Receipt:
    if raw is None:
        raise NotFound(f"no receipt for {tx_hash}")
    if not isinstance(raw, dict):
        raise SchemaError("receipt is not an object", path="$")
    try:
        return Receipt(
            tx_hash=raw.get("transactionHash", tx_hash),
            status=quantity(raw.get("status"), 1),
            gas_used=quantity(raw.get("gasUsed")),
            effective_gas_price=quantity(raw.get("effectiveGasPrice")),
            contract_address=raw.get("contractAddress"),
        )
    except (ValidationError, ValueError) as e:
        raise SchemaError(f"invalid receipt of {tx_hash}: {e}", path="$") from e


def call_object(tx: BlockTransaction) -> Dict[str, Any]:
    """Call arguments replaying a transaction with the same sender, recipient, input and gas."""
    call: Dict[str, Any] = {"from": tx.sender, "gas": hex(tx.gas), "value": hex(tx.value), "input": tx.input}
    if tx.recipient is not None:
        call["to"] = tx.recipient
    if tx.declared_tal is not None:
        call["accessList"] = [
            {"address": entry.address, "storageKeys": list(entry.storage_keys)}
            for entry in tx.declared_tal.entries
        ]
    return call


class NodeFetcher:
    """Block, receipt and trace retrieval on top of an RpcClient."""

    def __init__(self, client: RpcClient, config: IngestionConfig, opcode_map: Optional[OpcodeMap] = None):
        self.client = client
        self.config = config
        self.tracer = config.tracer
        self._opcode_map = opcode_map
        self._headers: Dict[int, BlockHeader] = {}

    @property
    def opcode_map(self) -> OpcodeMap:
        if self._opcode_map is None:
            self._opcode_map = OpcodeMap()
        return self._opcode_map

    async def fetch_block(self, number: int) -> FetchedBlock:
        raw = await self.client.call("eth_getBlockByNumber", [hex(number), True])
        if raw is None:
            raise NotFound(f"block {number} not found")
        block = parse_block(raw, number)
        self._headers[block.header.number] = block.header
        logger.debug("Fetched block", block=number, transactions=len(block.transactions))
        return block

    async def _header(self, number: int) -> BlockHeader:
        if number not in self._headers:
            raw = await self.client.call("eth_getBlockByNumber", [hex(number), False])
            if raw is None:
                raise NotFound(f"block {number} not found")
            if not isinstance(raw, dict):
                raise SchemaError("block is not an object", path="$")
            block = parse_block({**raw, "transactions": []}, number)
            self._headers[number] = block.header
        return self._headers[number]

    async def fetch_receipt(self, tx_hash: str) -> Receipt:
        raw = await self.client.call("eth_getTransactionReceipt", [tx_hash])
        return parse_receipt(raw, tx_hash)

    async def fetch_transaction_block(self, tx_hash: str) -> Tuple[int, int]:
        """(block number, index) of a mined transaction."""
        raw = await self.client.call("eth_getTransactionByHash", [tx_hash])
        if not isinstance(raw, dict) or raw.get("blockNumber") is None:
            raise NotFound(f"transaction {tx_hash} not found or pending")
        return quantity(raw["blockNumber"]), quantity(raw.get("transactionIndex"))

    async def _trace(self, tx: BlockTransaction, mode: TraceMode, header: BlockHeader, tracer: str) -> Any:
        options: Dict[str, Any] = dict(_STRUCT_LOG_OPTIONS) if tracer == STRUCT_LOGS else {"tracer": tracer}
        if mode is TraceMode.IBS:
            return await self.client.call("debug_traceTransaction", [tx.hash, options])
        return await self.client.call("debug_traceCall", [call_object(tx), hex(header.number - 1), options])

    async def _created_contracts(self, tx: BlockTransaction, mode: TraceMode, header: BlockHeader, receipt: Receipt) -> Tuple[str, ...]:
        fallback = (receipt.contract_address,) if receipt.contract_address else ()
        try:
            frames = await self._trace(tx, mode, header, CALL_TRACER)
        except RpcError as e:
            if not _unsupported(e):
                raise
            logger.warning("callTracer unavailable, created contracts from receipt only", tx_hash=tx.hash)
            return fallback
        created = created_from_call_frames(RawTraceDocument(tx_hash=tx.hash, tracer_name=CALL_TRACER, payload=frames))
        return tuple(dict.fromkeys((*fallback, *created)))

    async def trace_transaction(
        self,
        tx: BlockTransaction,
        header: BlockHeader,
        receipt: Receipt,
        mode: TraceMode,
    ) -> AccessTrace:
        """Access trace of a block transaction on IBS or SOB state."""
        label = StateLabel.IBS if mode is TraceMode.IBS else StateLabel.SOB
        ctx = TxContext(
            tx_hash=tx.hash,
            sender=tx.sender,
            recipient=tx.recipient,
            block_producer=header.miner,
            block_number=header.number,
            tx_index=tx.tx_index,
            created_contracts=(receipt.contract_address,) if receipt.contract_address else (),
            effective_gas_price=receipt.effective_gas_price,
            block_timestamp=header.timestamp,
            gas_used=receipt.gas_used,
        )

        if self.tracer == PRESTATE_TRACER:
            try:
                payload = await self._trace(tx, mode, header, PRESTATE_TRACER)
            except RpcError as e:
                if not _unsupported(e):
                    raise
                logger.warning("prestateTracer unavailable, falling back to structLogs", tx_hash=tx.hash)
                self.tracer = STRUCT_LOGS
            else:
                created = await self._created_contracts(tx, mode, header, receipt)
                ctx = ctx.model_copy(update={"created_contracts": created})
                producers = {header.miner}
                if mode is TraceMode.SOB:
                    producers.add((await self._header(header.number - 1)).miner)
                doc = RawTraceDocument(tx_hash=tx.hash, tracer_name=PRESTATE_TRACER, payload=payload)
                return normalize_prestate(doc, ctx, label, skip_addresses=producers)

        try:
            payload = await self._trace(tx, mode, header, STRUCT_LOGS)
        except RpcError as e:
            if e.code == METHOD_NOT_FOUND:
                raise TracerUnsupported(f"node does not support {'debug_traceTransaction' if mode is TraceMode.IBS else 'debug_traceCall'}") from e
            raise
        doc = RawTraceDocument(tx_hash=tx.hash, tracer_name=STRUCT_LOGS, payload=payload)
        return normalize_struct_logs(doc, ctx, label, self.opcode_map)

    async def fetch_trace(self, tx_hash: str, mode: TraceMode) -> AccessTrace:
        """Trace a single mined transaction by hash."""
        number, index = await self.fetch_transaction_block(tx_hash)
        block = await self.fetch_block(number)
        tx = next((tx for tx in block.transactions if tx.hash == to_storage_key(tx_hash)), None)
        if tx is None:
            raise NotFound(f"transaction {tx_hash} not in block {number}")
        receipt = await self.fetch_receipt(tx.hash)
        return await self.trace_transaction(tx, block.header, receipt, mode)

    async def fetch_block_bundle(
        self,
        number: int,
        modes: Sequence[TraceMode] = (TraceMode.IBS,),
        tx_hashes: Optional[set] = None,
    ) -> BlockBundle:
        """Traces in every requested mode plus declared access lists for one block.

        Transactions whose tracer output cannot be normalized are skipped and
        reported; every other error aborts the block.
        """
        block = await self.fetch_block(number)
        transactions = [tx for tx in block.transactions if tx_hashes is None or tx.hash in tx_hashes]

        async def one(tx: BlockTransaction) -> Tuple[List[AccessTrace], Optional[SkippedTx]]:
            if not modes:
                return [], None
            receipt = await self.fetch_receipt(tx.hash)
            try:
                traces = [await self.trace_transaction(tx, block.header, receipt, mode) for mode in modes]
            except NormalizationError as e:
                logger.warning("Skipping transaction", tx_hash=tx.hash, block=number, error=str(e))
                return [], SkippedTx(tx_hash=tx.hash, block_number=number, error=str(e))
            return traces, None

        results = await asyncio.gather(*(one(tx) for tx in transactions))
        traces: List[AccessTrace] = []
        declared: List[DeclaredTal] = []
        skipped: List[SkippedTx] = []
        for tx, (tx_traces, skip) in zip(transactions, results):
            if skip is not None:
                skipped.append(skip)
                continue
            traces.extend(tx_traces)
            declared.append(DeclaredTal(
                tx_hash=tx.hash, block_number=number, tx_index=tx.tx_index, access_list=tx.declared_tal,
            ))
        logger.info(
            "Fetched block bundle",
            block=number,
            transactions=len(transactions),
            traces=len(traces),
            skipped=len(skipped),
        )
        return BlockBundle(
            block_number=number,
            timestamp=block.header.timestamp,
            traces=tuple(traces),
            declared=tuple(declared),
            skipped=tuple(skipped),
        )
