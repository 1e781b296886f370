"""Per-block input streams from a corpus directory or an RPC endpoint."""
import asyncio
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Dict, Iterable, Iterator, List, Optional, Sequence, Set, Tuple, TypeVar

import httpx
import structlog

from cli.config import InputSource, RunConfig
from ingestion.client import RpcClient
from ingestion.config import IngestionConfig
from ingestion.corpus import Corpus
from ingestion.fetcher import NodeFetcher
from ingestion.models import BlockBundle, TraceMode
from shared.exceptions import DuplicateTx
from trace_core.models import AccessTrace, DeclaredTal, StateLabel

logger = structlog.get_logger()

T = TypeVar("T")
R = TypeVar("R")

Block = Tuple[int, List[AccessTrace], List[DeclaredTal]]


def split_states(traces: Iterable[AccessTrace]) -> Tuple[Dict[str, AccessTrace], Dict[str, AccessTrace]]:
    """(execution traces, start-of-block traces) keyed by tx hash, in input order."""
    execution: Dict[str, AccessTrace] = {}
    start_of_block: Dict[str, AccessTrace] = {}
    for trace in traces:
        target = start_of_block if trace.state_label is StateLabel.SOB else execution
        if trace.tx_hash in target:
            raise DuplicateTx(f"two {trace.state_label.value} traces for {trace.tx_hash}")
        target[trace.tx_hash] = trace
    return execution, start_of_block


def ordered_map(fn: Callable[[T], R], items: Iterable[T], workers: int) -> Iterator[R]:
    """Map over items in worker processes, yielding results in input order.

    At most twice the worker count of items is in flight.
    """
    if workers <= 1:
        for item in items:
            yield fn(item)
        return
    with ProcessPoolExecutor(max_workers=workers) as executor:
        pending = deque()
        for item in items:
            pending.append(executor.submit(fn, item))
            if len(pending) >= 2 * workers:
                yield pending.popleft().result()
        while pending:
            yield pending.popleft().result()


def corpus_blocks(cfg: RunConfig) -> Iterator[Block]:
    for number, traces, declared in Corpus(cfg.corpus).blocks():
        if cfg.blocks is not None and number > cfg.blocks[1]:
            break
        traces = [trace for trace in traces if cfg.selects(number, trace.tx_hash)]
        declared = [row for row in declared if cfg.selects(number, row.tx_hash)]
        if traces:
            yield number, traces, declared


async def _plan(fetcher: NodeFetcher, cfg: RunConfig) -> List[Tuple[int, Optional[Set[str]]]]:
    """Blocks to fetch, each with the transactions wanted from it (None: all)."""
    if not cfg.tx_hashes:
        first, last = cfg.blocks
        return [(number, None) for number in range(first, last + 1)]
    hashes = sorted(cfg.tx_hashes)
    positions = await asyncio.gather(*(fetcher.fetch_transaction_block(tx_hash) for tx_hash in hashes))
    by_block: Dict[int, Set[str]] = {}
    for tx_hash, (number, _) in zip(hashes, positions):
        if cfg.blocks is None or cfg.blocks[0] <= number <= cfg.blocks[1]:
            by_block.setdefault(number, set()).add(tx_hash)
    return sorted(by_block.items())


def rpc_bundles(
    cfg: RunConfig,
    modes: Sequence[TraceMode],
    transport: Optional[httpx.AsyncBaseTransport] = None,
) -> Iterator[BlockBundle]:
    """Fetch block bundles one block at a time; requests inside a block run concurrently."""
    settings = IngestionConfig()
    client = RpcClient(
        settings.endpoint(cfg.rpc_url),
        max_retries=settings.max_retries,
        retry_backoff=settings.retry_backoff,
        transport=transport,
    )
    fetcher = NodeFetcher(client, settings)
    loop = asyncio.new_event_loop()
    try:
        plan = loop.run_until_complete(_plan(fetcher, cfg))
        logger.info("Fetching blocks", blocks=len(plan), modes=[mode.value for mode in modes])
        for number, tx_hashes in plan:
            yield loop.run_until_complete(fetcher.fetch_block_bundle(number, modes, tx_hashes))
    finally:
        loop.run_until_complete(client.close())
        loop.close()


def input_blocks(
    cfg: RunConfig,
    modes: Sequence[TraceMode] = (TraceMode.IBS,),
    transport: Optional[httpx.AsyncBaseTransport] = None,
) -> Iterator[Block]:
    """Traces and declared rows per block from whichever source the run names."""
    if cfg.source is InputSource.CORPUS:
        yield from corpus_blocks(cfg)
        return
    for bundle in rpc_bundles(cfg, modes, transport):
        if bundle.traces:
            yield bundle.block_number, list(bundle.traces), list(bundle.declared)
