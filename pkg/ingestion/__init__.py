"""Block, receipt and access trace ingestion over JSON-RPC, and corpus files."""
