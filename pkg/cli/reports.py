"""Report files written chunk by chunk, plus cleanup of partial output."""
import json
import shutil
from pathlib import Path
from typing import IO, Iterable, List, Optional, Sequence

import pandas as pd
import structlog

from cli.config import ReportFormat
from shared.exceptions import CorpusIOError

logger = structlog.get_logger()

EXTENSIONS = {"csv": ".csv", "json": ".jsonl"}


class OutputSet:
    """Tracks files and directories created by a command so a failure can remove them."""

    def __init__(self, out_dir: Path):
        self.out_dir = Path(out_dir)
        self._created: List[Path] = []

    def prepare(self) -> None:
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise CorpusIOError(f"cannot create output directory {self.out_dir}: {e}") from e

    def path(self, name: str) -> Path:
        path = self.out_dir / name
        self._created.append(path)
        return path

    def directory(self, name: str) -> Path:
        path = self.path(name)
        try:
            path.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise CorpusIOError(f"cannot create {path}: {e}") from e
        return path

    def discard(self) -> None:
        for path in reversed(self._created):
            if path.is_dir():
                shutil.rmtree(path, ignore_errors=True)
            elif path.exists():
                path.unlink()
        if self._created:
            logger.info("Removed partial output", paths=[str(path) for path in self._created])
        self._created.clear()


def _plain(value):
    # numpy scalars coming out of pandas aggregations
    if hasattr(value, "item"):
        return value.item()
    return str(value)


class ReportWriter:
    """Single-writer table file; rows arrive in per-block chunks.

    CSV goes through pandas with an object dtype so integers of any size keep
    their exact decimal form; JSON is one object per line.
    """

    def __init__(self, outputs: OutputSet, stem: str, columns: Sequence[str], fmt: ReportFormat = "csv"):
        self.columns = list(columns)
        self.fmt = fmt
        self.path = outputs.path(stem + EXTENSIONS[fmt])
        self.rows_written = 0
        self._handle: Optional[IO[str]] = None

    def __enter__(self) -> "ReportWriter":
        try:
            self._handle = open(self.path, "w", encoding="utf-8", newline="")
        except OSError as e:
            raise CorpusIOError(f"cannot write {self.path}: {e}") from e
        if self.fmt == "csv":
            self._frame([]).to_csv(self._handle, index=False, lineterminator="\n")
        return self

    def __exit__(self, *exc_info) -> None:
        if self._handle is not None:
            self._handle.close()
            self._handle = None

    def _frame(self, rows: Iterable[Sequence]) -> pd.DataFrame:
        return pd.DataFrame(list(rows), columns=self.columns, dtype=object)

    def write(self, rows: Iterable[Sequence]) -> None:
        frame = self._frame(rows)
        if frame.empty:
            return
        if self.fmt == "csv":
            frame.to_csv(self._handle, index=False, header=False, lineterminator="\n")
        else:
            for record in frame.to_dict(orient="records"):
                self._handle.write(json.dumps(record, separators=(",", ":"), default=_plain) + "\n")
        self.rows_written += len(frame)


def write_table(outputs: OutputSet, stem: str, columns: Sequence[str], rows: Iterable[Sequence], fmt: ReportFormat) -> Path:
    with ReportWriter(outputs, stem, columns, fmt) as writer:
        writer.write(rows)
    return writer.path


def write_frame(outputs: OutputSet, stem: str, frame: pd.DataFrame, fmt: ReportFormat) -> Path:
    return write_table(outputs, stem, list(frame.columns), frame.itertuples(index=False, name=None), fmt)
