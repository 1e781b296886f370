"""Corpus-level aggregation of audit reports and report row builders."""
from typing import Dict, Iterable, List, Literal, Tuple

import pandas as pd
import structlog

from auditor.models import AggregateStats, AuditReport, Reason, TxMeta
from shared.exceptions import DuplicateTx, TxMismatch

logger = structlog.get_logger()

DETAIL_COLUMNS = ["tx_hash", "reason", "address", "key", "regret"]
STATS_COLUMNS = ["metric", "value"]
HISTOGRAM_COLUMNS = ["bucket_low", "bucket_high", "count"]


def aggregate(reports: Iterable[AuditReport], traces_meta: Iterable[TxMeta]) -> AggregateStats:
    """Fold audit reports and per-transaction flags into corpus statistics.

    Every report must belong to a transaction flagged as carrying an access
    list. Reason counts are per access list, not per entry.
    """
    by_hash: Dict[str, AuditReport] = {}
    for report in reports:
        if report.tx_hash in by_hash:
            raise DuplicateTx(f"report for {report.tx_hash} seen twice")
        by_hash[report.tx_hash] = report

    stats = AggregateStats()
    counts: Dict[Reason, int] = {}
    seen = set()
    for meta in traces_meta:
        if meta.tx_hash in seen:
            raise DuplicateTx(f"transaction {meta.tx_hash} seen twice")
        seen.add(meta.tx_hash)

        stats.n_txs += 1
        stats.total_gas_saved_optimal -= meta.delta_optimal
        stats.total_wei_saved_optimal -= meta.delta_optimal_wei
        stats.histogram_optimal.add(meta.delta_optimal, meta.delta_optimal_wei)
        if meta.delta_optimal < 0:
            stats.n_would_benefit += 1

        report = by_hash.pop(meta.tx_hash, None)
        if not meta.has_tal:
            if report is not None:
                raise TxMismatch(f"report for {meta.tx_hash}, which declares no access list")
            continue
        if report is None:
            raise TxMismatch(f"no report for {meta.tx_hash}, which declares an access list")

        stats.n_with_tal += 1
        stats.total_gas_saved_declared -= report.delta_declared
        stats.total_wei_saved_declared -= report.delta_declared_wei
        stats.histogram_declared.add(report.delta_declared, report.delta_declared_wei)
        if report.is_imperfect:
            stats.n_imperfect += 1
        if report.pays_more:
            stats.n_pays_more += 1
        for reason in report.reasons():
            counts[reason] = counts.get(reason, 0) + 1

    if by_hash:
        raise TxMismatch(f"{len(by_hash)} reports without transaction flags")
    stats.counts_by_reason = counts
    return stats


def detail_rows(report: AuditReport) -> List[Tuple[str, str, str, str, int]]:
    """Audit detail rows: tx_hash, reason, address, key, regret."""
    return [
        (report.tx_hash, finding.reason.value, finding.address, finding.key or "", finding.regret)
        for finding in report.findings()
    ]


def stats_rows(stats: AggregateStats) -> List[Tuple[str, object]]:
    """Stats file rows: metric, value. Order is fixed."""
    rows: List[Tuple[str, object]] = [
        ("n_txs", stats.n_txs),
        ("n_with_tal", stats.n_with_tal),
        ("n_imperfect", stats.n_imperfect),
        ("n_pays_more", stats.n_pays_more),
        ("n_would_benefit", stats.n_would_benefit),
        ("frac_with_tal", stats.frac_with_tal),
        ("frac_imperfect", stats.frac_imperfect),
        ("frac_pays_more", stats.frac_pays_more),
        ("frac_would_benefit", stats.frac_would_benefit),
        ("total_gas_saved_declared", stats.total_gas_saved_declared),
        ("total_gas_saved_optimal", stats.total_gas_saved_optimal),
        ("total_wei_saved_declared", stats.total_wei_saved_declared),
        ("total_wei_saved_optimal", stats.total_wei_saved_optimal),
        ("capture_ratio_gas", stats.capture_ratio_gas),
        ("capture_ratio_wei", stats.capture_ratio_wei),
    ]
    rows.extend(
        (f"tals_with_{reason.value}", stats.counts_by_reason.get(reason, 0))
        for reason in Reason
    )
    return rows


def histogram_frame(
    stats: AggregateStats,
    axis: Literal["gas", "wei"],
    series: Literal["declared", "optimal"] = "optimal",
) -> pd.DataFrame:
    histogram = stats.histogram_optimal if series == "optimal" else stats.histogram_declared
    return pd.DataFrame(histogram.rows(axis), columns=HISTOGRAM_COLUMNS, dtype=object)


def histogram_export(
    stats: AggregateStats,
    axis: Literal["gas", "wei"],
    series: Literal["declared", "optimal"] = "optimal",
) -> str:
    """CSV text (bucket_low, bucket_high, count) of a delta histogram.

    The optimal series covers every transaction, the declared series every
    transaction carrying an access list.
    """
    return histogram_frame(stats, axis, series).to_csv(index=False, lineterminator="\n")
