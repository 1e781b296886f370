"""NDJSON corpus files: access traces plus the declared access lists of the same transactions."""
import itertools
from pathlib import Path
from typing import Callable, IO, Iterable, Iterator, List, Optional, Tuple, TypeVar, Union

import structlog

from shared.exceptions import CorpusIOError, SchemaError
from trace_core.codec import decode_declared, decode_trace, encode_declared, encode_trace
from trace_core.models import AccessTrace, DeclaredTal

logger = structlog.get_logger()

TRACES_FILE = "traces.ndjson"
DECLARED_FILE = "declared.ndjson"

T = TypeVar("T")
PathLike = Union[str, Path]


def _write_lines(path: Path, items: Iterable[T], encode: Callable[[T], str]) -> int:
    count = 0
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for item in items:
                f.write(encode(item))
                f.write("\n")
                count += 1
    except OSError as e:
        raise CorpusIOError(f"cannot write {path}: {e}") from e
    return count


def _read_lines(path: Path, decode: Callable[[str, int], T]) -> Iterator[T]:
    try:
        f = open(path, "r", encoding="utf-8")
    except OSError as e:
        raise CorpusIOError(f"cannot read {path}: {e}") from e
    with f:
        for number, line in enumerate(f, start=1):
            line = line.strip()
            if line:
                yield decode(line, number)


def store_corpus(path: PathLike, traces: Iterable[AccessTrace]) -> int:
    """Write traces as NDJSON, one canonical line per trace. Returns the count."""
    count = _write_lines(Path(path), traces, encode_trace)
    logger.info("Stored traces", path=str(path), traces=count)
    return count


def load_corpus(path: PathLike) -> Iterator[AccessTrace]:
    """Stream traces back; a bad line raises SchemaError carrying its 1-based number."""
    return _read_lines(Path(path), decode_trace)


def store_declared(path: PathLike, rows: Iterable[DeclaredTal]) -> int:
    count = _write_lines(Path(path), rows, encode_declared)
    logger.info("Stored declared access lists", path=str(path), rows=count)
    return count


def load_declared(path: PathLike) -> Iterator[DeclaredTal]:
    return _read_lines(Path(path), decode_declared)


def _block_order(items: Iterator[T], path: Path, key: Callable[[T], Tuple[int, int]]) -> Iterator[T]:
    previous: Optional[Tuple[int, int]] = None
    for number, item in enumerate(items, start=1):
        current = key(item)
        if previous is not None and current < previous:
            raise SchemaError(f"{path.name} is not ordered by (block, tx_index)", line=number)
        previous = current
        yield item


def group_by_block(items: Iterable[T], block_of: Callable[[T], int]) -> Iterator[Tuple[int, List[T]]]:
    for number, group in itertools.groupby(items, key=block_of):
        yield number, list(group)


class Corpus:
    """A corpus directory holding traces.ndjson and declared.ndjson."""

    def __init__(self, root: PathLike):
        self.root = Path(root)

    @property
    def traces_path(self) -> Path:
        return self.root / TRACES_FILE

    @property
    def declared_path(self) -> Path:
        return self.root / DECLARED_FILE

    @property
    def has_declared(self) -> bool:
        return self.declared_path.is_file()

    def check(self) -> None:
        if not self.traces_path.is_file():
            raise CorpusIOError(f"no {TRACES_FILE} in corpus {self.root}")

    def traces(self) -> Iterator[AccessTrace]:
        self.check()
        return _block_order(
            load_corpus(self.traces_path),
            self.traces_path,
            lambda trace: (trace.ctx.block_number, trace.ctx.tx_index),
        )

    def declared(self) -> Iterator[DeclaredTal]:
        if not self.has_declared:
            raise CorpusIOError(f"no {DECLARED_FILE} in corpus {self.root}")
        return _block_order(
            load_declared(self.declared_path),
            self.declared_path,
            lambda row: (row.block_number, row.tx_index),
        )

    def blocks(self) -> Iterator[Tuple[int, List[AccessTrace], List[DeclaredTal]]]:
        """Per block: its traces and (when the corpus has them) its declared rows.

        Both files are streamed side by side, so memory holds one block at a time.
        """
        trace_blocks = group_by_block(self.traces(), lambda trace: trace.ctx.block_number)
        if not self.has_declared:
            for number, traces in trace_blocks:
                yield number, traces, []
            return

        declared_blocks = group_by_block(self.declared(), lambda row: row.block_number)
        pending = next(declared_blocks, None)
        for number, traces in trace_blocks:
            while pending is not None and pending[0] < number:
                pending = next(declared_blocks, None)
            rows: List[DeclaredTal] = []
            if pending is not None and pending[0] == number:
                rows = pending[1]
                pending = next(declared_blocks, None)
            yield number, traces, rows


class CorpusWriter:
    """Appends blocks to a corpus directory as they arrive."""

    def __init__(self, root: PathLike):
        self.corpus = Corpus(root)
        self._traces: Optional[IO[str]] = None
        self._declared: Optional[IO[str]] = None
        self.n_traces = 0
        self.n_declared = 0

    def __enter__(self) -> "CorpusWriter":
        try:
            self.corpus.root.mkdir(parents=True, exist_ok=True)
            self._traces = open(self.corpus.traces_path, "w", encoding="utf-8", newline="\n")
            self._declared = open(self.corpus.declared_path, "w", encoding="utf-8", newline="\n")
        except OSError as e:
            self.close()
            raise CorpusIOError(f"cannot create corpus {self.corpus.root}: {e}") from e
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    def close(self) -> None:
        for handle in (self._traces, self._declared):
            if handle is not None:
                handle.close()
        self._traces = self._declared = None

    def write(self, traces: Iterable[AccessTrace], declared: Iterable[DeclaredTal]) -> None:
        try:
            for trace in traces:
                self._traces.write(encode_trace(trace) + "\n")
                self.n_traces += 1
            for row in declared:
                self._declared.write(encode_declared(row) + "\n")
                self.n_declared += 1
        except OSError as e:
            raise CorpusIOError(f"cannot write corpus {self.corpus.root}: {e}") from e
