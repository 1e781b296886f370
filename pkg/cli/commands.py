"""Subcommand implementations.

Each command streams its input one block at a time, fans the per-block
analysis out over worker processes and writes reports from a single writer.
Any failure removes the files the command had started.
"""
import functools
from contextlib import contextmanager
from typing import Dict, Iterator, List, Tuple

import pandas as pd
import structlog

from auditor.aggregation import DETAIL_COLUMNS, STATS_COLUMNS, aggregate, detail_rows, histogram_frame, stats_rows
from auditor.auditor import audit
from auditor.models import AggregateStats, AuditReport, TxMeta
from cli.config import InputSource, RunConfig
from cli.reports import OutputSet, ReportWriter, write_frame, write_table
from cli.sources import Block, corpus_blocks, input_blocks, ordered_map, rpc_bundles, split_states
from gas_model.models import ForkConfig, GasSchedule
from ingestion.corpus import DECLARED_FILE, TRACES_FILE, CorpusWriter
from ingestion.models import TraceMode
from optimizer.optimizer import NO_EXCLUSIONS, cross_state_delta, optimal_tal, tal_delta
from shared.exceptions import AnalysisError, DuplicateTx, MissingPair, TxMismatch
from shared.utils import utc_date
from trace_core.codec import encode_tal

logger = structlog.get_logger()

OPTIMIZE_COLUMNS = [
    "tx_hash", "block_number", "tx_index", "n_addresses", "n_storage_keys",
    "vs_empty_gas", "vs_empty_wei", "naive_vs_empty_gas", "naive_vs_empty_wei", "relative_saving",
]
BLOCK_TX_COLUMNS = [
    "block_number", "tx_hash", "tx_index", "ibs_delta_gas", "sob_delta_gas",
    "ibs_delta_wei", "sob_delta_wei", "profitable", "sob_suboptimal",
]
BLOCK_COLUMNS = [
    "block_number", "n_txs", "n_profitable", "n_sob_suboptimal", "frac_sob_suboptimal",
    "total_ibs_delta_gas", "total_sob_delta_gas", "total_ibs_delta_wei", "total_sob_delta_wei",
]
ADOPTION_COLUMNS = ["date", "n_txs", "n_with_tal", "fraction"]
FETCH_ERROR_COLUMNS = ["tx_hash", "block_number", "error"]


@contextmanager
def _removed_on_error(outputs: OutputSet) -> Iterator[OutputSet]:
    try:
        outputs.prepare()
        yield outputs
    except BaseException:
        outputs.discard()
        raise


def _declared_by_hash(block: Block) -> Dict[str, object]:
    rows = {}
    for row in block[2]:
        if row.tx_hash in rows:
            raise DuplicateTx(f"two declared access list rows for {row.tx_hash}")
        rows[row.tx_hash] = row.access_list
    return rows


# Per-block workers. Module level so worker processes can unpickle them.

def optimize_block(block: Block, schedule: GasSchedule, fork: ForkConfig) -> List[Tuple[str, str, tuple]]:
    number, traces, _ = block
    execution, _ = split_states(traces)
    results = []
    for trace in execution.values():
        tal = optimal_tal(trace, schedule, fork)
        delta = tal_delta(trace, tal, schedule, fork)
        naive = tal_delta(trace, optimal_tal(trace, schedule, fork, exclusions=NO_EXCLUSIONS), schedule, fork)
        saving = delta.relative_saving(trace.ctx.gas_used)
        results.append((trace.tx_hash, encode_tal(tal), (
            trace.tx_hash, number, trace.ctx.tx_index, len(tal.entries), tal.storage_key_count,
            delta.vs_empty, delta.vs_empty_wei, naive.vs_empty, naive.vs_empty_wei,
            "" if saving is None else saving,
        )))
    return results


def audit_block(block: Block, schedule: GasSchedule, fork: ForkConfig) -> Tuple[List[tuple], AggregateStats]:
    execution, _ = split_states(block[1])
    declared = _declared_by_hash(block)
    reports: List[AuditReport] = []
    metas: List[TxMeta] = []
    for tx_hash, trace in execution.items():
        if tx_hash not in declared:
            raise TxMismatch(f"no declared access list row for {tx_hash}")
        tal = declared[tx_hash]
        optimal = tal_delta(trace, optimal_tal(trace, schedule, fork), schedule, fork)
        has_tal = tal is not None and bool(tal.entries)
        metas.append(TxMeta(
            tx_hash=tx_hash,
            has_tal=has_tal,
            delta_optimal=optimal.vs_empty,
            delta_optimal_wei=optimal.vs_empty_wei,
        ))
        if has_tal:
            reports.append(audit(trace, tal, schedule, fork))
    details = [row for report in reports for row in detail_rows(report)]
    return details, aggregate(reports, metas)


def block_report_block(block: Block, schedule: GasSchedule, fork: ForkConfig) -> Tuple[List[tuple], tuple]:
    number, traces, _ = block
    ibs, sob = split_states(traces)
    unpaired = sorted(set(ibs).symmetric_difference(sob))
    if unpaired:
        raise MissingPair(f"{len(unpaired)} transactions of block {number} lack a SOB or IBS trace, e.g. {unpaired[0]}")

    rows = []
    for tx_hash, trace in ibs.items():
        ideal = tal_delta(trace, optimal_tal(trace, schedule, fork), schedule, fork)
        from_sob = cross_state_delta(sob[tx_hash], trace, schedule, fork)
        rows.append((
            number, tx_hash, trace.ctx.tx_index, ideal.vs_empty, from_sob.vs_empty,
            ideal.vs_empty_wei, from_sob.vs_empty_wei, ideal.vs_empty < 0, from_sob.vs_empty > ideal.vs_empty,
        ))

    n_profitable = sum(1 for row in rows if row[7])
    n_suboptimal = sum(1 for row in rows if row[7] and row[8])
    totals = (
        number, len(rows), n_profitable, n_suboptimal,
        n_suboptimal / n_profitable if n_profitable else 0.0,
        sum(row[3] for row in rows), sum(row[4] for row in rows),
        sum(row[5] for row in rows), sum(row[6] for row in rows),
    )
    return rows, totals


def adoption_block(block: Block) -> List[Tuple[str, bool]]:
    execution, _ = split_states(block[1])
    declared = _declared_by_hash(block)
    rows = []
    for tx_hash, trace in execution.items():
        if trace.ctx.block_timestamp is None:
            raise AnalysisError(f"trace {tx_hash} has no block timestamp")
        if tx_hash not in declared:
            raise TxMismatch(f"no declared access list row for {tx_hash}")
        tal = declared[tx_hash]
        rows.append((utc_date(trace.ctx.block_timestamp).isoformat(), tal is not None and bool(tal.entries)))
    return rows


# Commands

def cmd_optimize(cfg: RunConfig) -> None:
    """Optimal access list per transaction plus a delta summary."""
    schedule, fork = cfg.gas.gas_schedule(), cfg.gas.fork()
    worker = functools.partial(optimize_block, schedule=schedule, fork=fork)
    with _removed_on_error(OutputSet(cfg.out_dir)) as outputs:
        tal_dir = outputs.directory("tals")
        with ReportWriter(outputs, "optimize-summary", OPTIMIZE_COLUMNS, cfg.report_format) as summary:
            for results in ordered_map(worker, input_blocks(cfg), cfg.workers):
                for tx_hash, tal_text, _ in results:
                    (tal_dir / f"{tx_hash}.json").write_text(tal_text, encoding="utf-8")
                summary.write(row for _, _, row in results)
    logger.info("Optimized access lists", transactions=summary.rows_written, out_dir=str(cfg.out_dir))


def cmd_audit(cfg: RunConfig) -> None:
    """Per-entry defects of declared access lists, corpus statistics and delta histograms."""
    schedule, fork = cfg.gas.gas_schedule(), cfg.gas.fork()
    worker = functools.partial(audit_block, schedule=schedule, fork=fork)
    stats = AggregateStats()
    with _removed_on_error(OutputSet(cfg.out_dir)) as outputs:
        with ReportWriter(outputs, "audit-detail", DETAIL_COLUMNS, cfg.report_format) as detail:
            for rows, block_stats in ordered_map(worker, input_blocks(cfg), cfg.workers):
                detail.write(rows)
                stats = stats.merge(block_stats)
        write_table(outputs, "audit-stats", STATS_COLUMNS, stats_rows(stats), cfg.report_format)
        for series in ("declared", "optimal"):
            for axis in ("gas", "wei"):
                write_frame(outputs, f"audit-histogram-{series}-{axis}", histogram_frame(stats, axis, series), cfg.report_format)
    logger.info(
        "Audited declared access lists",
        transactions=stats.n_txs,
        with_tal=stats.n_with_tal,
        imperfect=stats.n_imperfect,
        frac_imperfect=stats.frac_imperfect,
        frac_pays_more=stats.frac_pays_more,
    )


def cmd_block_report(cfg: RunConfig) -> None:
    """Start-of-block against intra-block generation, per transaction and per block."""
    schedule, fork = cfg.gas.gas_schedule(), cfg.gas.fork()
    worker = functools.partial(block_report_block, schedule=schedule, fork=fork)
    n_profitable = n_suboptimal = 0
    with _removed_on_error(OutputSet(cfg.out_dir)) as outputs:
        with ReportWriter(outputs, "block-report-txs", BLOCK_TX_COLUMNS, cfg.report_format) as txs, \
                ReportWriter(outputs, "block-report-blocks", BLOCK_COLUMNS, cfg.report_format) as blocks:
            for rows, totals in ordered_map(worker, input_blocks(cfg, (TraceMode.IBS, TraceMode.SOB)), cfg.workers):
                txs.write(rows)
                blocks.write([totals])
                n_profitable += totals[2]
                n_suboptimal += totals[3]
    logger.info(
        "Compared start-of-block generation",
        blocks=blocks.rows_written,
        profitable=n_profitable,
        sob_suboptimal=n_suboptimal,
        frac_sob_suboptimal=n_suboptimal / n_profitable if n_profitable else 0.0,
    )


def _adoption_rows(cfg: RunConfig) -> Iterator[List[Tuple[str, bool]]]:
    if cfg.source is InputSource.CORPUS:
        yield from ordered_map(adoption_block, corpus_blocks(cfg), cfg.workers)
        return
    # headers and transaction lists are enough; no tracing
    for bundle in rpc_bundles(cfg, modes=()):
        yield [
            (utc_date(bundle.timestamp).isoformat(), row.access_list is not None and bool(row.access_list.entries))
            for row in bundle.declared
        ]


def cmd_stats(cfg: RunConfig) -> None:
    """Per-day share of transactions that carry a non-empty access list."""
    counts: Dict[str, List[int]] = {}
    for rows in _adoption_rows(cfg):
        if not rows:
            continue
        frame = pd.DataFrame(rows, columns=["date", "has_tal"])
        for day, group in frame.groupby("date", sort=False):
            total = counts.setdefault(day, [0, 0])
            total[0] += len(group)
            total[1] += int(group["has_tal"].sum())

    adoption = pd.DataFrame(
        [(day, n_txs, n_with_tal) for day, (n_txs, n_with_tal) in sorted(counts.items())],
        columns=ADOPTION_COLUMNS[:3],
    )
    adoption["fraction"] = (adoption["n_with_tal"] / adoption["n_txs"]).astype(float) if len(adoption) else []
    with _removed_on_error(OutputSet(cfg.out_dir)) as outputs:
        write_table(
            outputs, "adoption", ADOPTION_COLUMNS,
            ((day, int(n), int(k), float(f)) for day, n, k, f in adoption.itertuples(index=False, name=None)),
            cfg.report_format,
        )
    logger.info("Computed adoption series", days=len(adoption), transactions=int(adoption["n_txs"].sum()) if len(adoption) else 0)


def cmd_fetch(cfg: RunConfig) -> None:
    """Write a corpus: traces (IBS, plus SOB with --sob), declared access lists and skipped transactions."""
    modes = (TraceMode.IBS, TraceMode.SOB) if cfg.sob else (TraceMode.IBS,)
    with _removed_on_error(OutputSet(cfg.out_dir)) as outputs:
        outputs.path(TRACES_FILE)
        outputs.path(DECLARED_FILE)
        with CorpusWriter(cfg.out_dir) as corpus, \
                ReportWriter(outputs, "fetch-errors", FETCH_ERROR_COLUMNS, cfg.report_format) as errors:
            for bundle in rpc_bundles(cfg, modes):
                corpus.write(bundle.traces, bundle.declared)
                errors.write((skip.tx_hash, skip.block_number, skip.error) for skip in bundle.skipped)
    logger.info(
        "Fetched corpus",
        traces=corpus.n_traces,
        declared=corpus.n_declared,
        skipped=errors.rows_written,
        out_dir=str(cfg.out_dir),
    )


COMMANDS = {
    "optimize": cmd_optimize,
    "audit": cmd_audit,
    "block-report": cmd_block_report,
    "stats": cmd_stats,
    "fetch": cmd_fetch,
}
