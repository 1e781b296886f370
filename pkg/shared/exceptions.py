"""Custom exceptions for TalInspector."""
from typing import Any, Optional


class TalInspectorException(Exception):
    """Base exception for TalInspector."""
    exit_code = 1


class ConfigError(TalInspectorException):
    """Invalid configuration or command line."""
    exit_code = 2


class IngestionError(TalInspectorException):
    """Fetching, decoding or persisting input data failed."""
    exit_code = 3


class AnalysisError(TalInspectorException):
    """Gas analysis could not be carried out."""
    exit_code = 4


# Ingestion

class RpcError(IngestionError):
    """JSON-RPC transport or remote error."""

    def __init__(self, message: str, method: Optional[str] = None, code: Optional[int] = None):
        super().__init__(message)
        self.method = method
        self.code = code


class NotFound(IngestionError):
    """Requested block or transaction does not exist (yet)."""
    pass


class TracerUnsupported(IngestionError):
    """Node does not offer the requested tracing method."""
    pass


class NormalizationError(IngestionError):
    """Tracer output could not be turned into an access trace."""

    def __init__(self, message: str, raw: Any = None):
        super().__init__(message)
        self.raw = raw


class SchemaError(IngestionError):
    """Document does not match the expected schema."""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        location = []
        if line is not None:
            location.append(f"line {line}")
        if path:
            location.append(path)
        super().__init__(f"{message} ({', '.join(location)})" if location else message)
        self.detail = message
        self.path = path
        self.line = line


class CorpusIOError(IngestionError):
    """Corpus file could not be read or written."""
    pass


# Analysis

class UnsupportedSchedule(AnalysisError):
    """Access-list operation requested on a schedule without warm/cold pricing."""
    pass


class TraceError(AnalysisError):
    """Malformed access trace."""

    def __init__(self, message: str, index: Optional[int] = None):
        super().__init__(message if index is None else f"{message} at event {index}")
        self.index = index


class NonMonotonicSeq(TraceError):
    """Event sequence numbers are not strictly increasing."""
    pass


class MissingKey(TraceError):
    """Storage event without a storage key."""
    pass


class UnexpectedKey(TraceError):
    """Address event carrying a storage key."""
    pass


class MalformedAddress(TraceError):
    """Address or storage key is not a well-formed fixed-width hex string."""
    pass


class TxMismatch(AnalysisError):
    """Two traces expected to describe the same transaction do not."""
    pass


class DuplicateTx(AnalysisError):
    """Transaction hash seen twice in one aggregation."""
    pass


class MissingPair(AnalysisError):
    """Transaction lacks its start-of-block or intra-block trace."""
    pass
