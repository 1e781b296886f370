"""Command-line surface: optimize, audit, block-report, stats and fetch."""
