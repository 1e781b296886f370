"""Ingestion configuration."""
from typing import Literal, Optional

from pydantic import Field
from pydantic_settings import BaseSettings

from ingestion.models import NodeEndpoint
from shared.exceptions import ConfigError


class IngestionConfig(BaseSettings):
    """Ingestion configuration."""
    url: Optional[str] = None
    max_concurrent_requests: int = Field(default=8, ge=1)
    request_timeout: float = Field(default=30.0, gt=0)
    max_retries: int = Field(default=3, ge=0)
    retry_backoff: float = Field(default=0.5, ge=0)  # seconds, doubled per attempt
    tracer: Literal["prestateTracer", "structLogs"] = "prestateTracer"

    class Config:
        env_file = ".env"
        env_prefix = "RPC_"
        extra = "ignore"

    def endpoint(self, url: Optional[str] = None) -> NodeEndpoint:
        url = url or self.url
        if not url:
            raise ConfigError("no RPC endpoint configured; pass --rpc-url or set RPC_URL")
        return NodeEndpoint(
            url=url,
            max_concurrent_requests=self.max_concurrent_requests,
            request_timeout=self.request_timeout,
        )
