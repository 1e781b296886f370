"""CLI configuration."""
from enum import Enum
from pathlib import Path
from typing import FrozenSet, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator
from pydantic_settings import BaseSettings

from gas_model.config import GasModelConfig
from trace_core.models import TxHash

Command = Literal["optimize", "audit", "block-report", "stats", "fetch"]
ReportFormat = Literal["csv", "json"]


class CliConfig(BaseSettings):
    """CLI defaults."""
    out_dir: Path = Path("out")
    report_format: ReportFormat = "csv"
    workers: int = Field(default=1, ge=1)
    log_level: str = "INFO"
    log_format: Literal["json", "console"] = "json"

    class Config:
        env_file = ".env"
        env_prefix = "TAL_"
        extra = "ignore"


class InputSource(str, Enum):
    RPC = "rpc"
    CORPUS = "corpus"


class RunConfig(BaseModel):
    """Resolved settings of one CLI invocation."""
    model_config = ConfigDict(frozen=True)

    command: Command
    rpc_url: Optional[str] = None
    corpus: Optional[Path] = None
    blocks: Optional[Tuple[int, int]] = None  # inclusive
    tx_hashes: FrozenSet[TxHash] = frozenset()
    gas: GasModelConfig = Field(default_factory=GasModelConfig)
    out_dir: Path = Path("out")
    report_format: ReportFormat = "csv"
    workers: int = Field(default=1, ge=1)
    sob: bool = False

    @model_validator(mode="after")
    def _one_source(self) -> "RunConfig":
        if (self.rpc_url is None) == (self.corpus is None):
            raise ValueError("exactly one input source is required: --rpc-url or --corpus")
        if self.blocks is not None and self.blocks[1] < self.blocks[0]:
            raise ValueError("block range is empty")
        if self.command == "fetch" and self.corpus is not None:
            raise ValueError("fetch reads from an RPC endpoint, not a corpus")
        if self.rpc_url is not None and self.blocks is None and not self.tx_hashes:
            raise ValueError("an RPC source needs --blocks or --tx-file")
        return self

    @property
    def source(self) -> InputSource:
        return InputSource.RPC if self.rpc_url is not None else InputSource.CORPUS

    def selects(self, block_number: int, tx_hash: str) -> bool:
        """Whether a transaction falls inside the requested blocks and transactions."""
        if self.blocks is not None and not self.blocks[0] <= block_number <= self.blocks[1]:
            return False
        return not self.tx_hashes or tx_hash in self.tx_hashes
