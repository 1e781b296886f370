"""Async JSON-RPC client with a bounded in-flight window."""
import asyncio
import itertools
from typing import Any, List, Optional

import httpx
import structlog

from ingestion.models import NodeEndpoint
from shared.exceptions import RpcError

logger = structlog.get_logger()

METHOD_NOT_FOUND = -32601
RETRYABLE_STATUS = {429, 500, 502, 503, 504}


class RpcClient:
    """JSON-RPC client. All methods used are read-only, so retries are safe."""

    def __init__(
        self,
        endpoint: NodeEndpoint,
        max_retries: int = 3,
        retry_backoff: float = 0.5,
        transport: Optional[httpx.AsyncBaseTransport] = None,
    ):
        self.endpoint = endpoint
        self.max_retries = max_retries
        self.retry_backoff = retry_backoff
        self._semaphore = asyncio.Semaphore(endpoint.max_concurrent_requests)
        self._ids = itertools.count(1)
        self._client = httpx.AsyncClient(timeout=endpoint.request_timeout, transport=transport)

    async def __aenter__(self) -> "RpcClient":
        return self

    async def __aexit__(self, *exc_info) -> None:
        await self.close()

    async def close(self) -> None:
        await self._client.aclose()

    async def call(self, method: str, params: List[Any]) -> Any:
        """Invoke one method and return its result."""
        payload = {"jsonrpc": "2.0", "id": next(self._ids), "method": method, "params": params}
        attempt = 0
        while True:
            try:
                async with self._semaphore:
                    response = await self._client.post(self.endpoint.url, json=payload)
                if response.status_code in RETRYABLE_STATUS:
                    raise httpx.HTTPStatusError(
                        f"HTTP {response.status_code}", request=response.request, response=response
                    )
                response.raise_for_status()
                break
            except (httpx.TransportError, httpx.HTTPStatusError) as e:
                retryable = isinstance(e, httpx.TransportError) or e.response.status_code in RETRYABLE_STATUS
                if not retryable or attempt >= self.max_retries:
                    logger.error("RPC request failed", method=method, error=str(e), attempts=attempt + 1)
                    raise RpcError(f"{method} failed: {e}", method=method) from e
                delay = self.retry_backoff * (2 ** attempt)
                attempt += 1
                logger.warning("Retrying RPC request", method=method, error=str(e), attempt=attempt, delay=delay)
                await asyncio.sleep(delay)

        try:
            body = response.json()
        except ValueError as e:
            raise RpcError(f"{method} returned invalid JSON", method=method) from e
        if not isinstance(body, dict):
            raise RpcError(f"{method} returned a non-object response", method=method)

        error = body.get("error")
        if error:
            code = error.get("code") if isinstance(error, dict) else None
            message = error.get("message", str(error)) if isinstance(error, dict) else str(error)
            raise RpcError(f"{method}: {message}", method=method, code=code)
        return body.get("result")
