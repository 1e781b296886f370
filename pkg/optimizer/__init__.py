"""Gas-optimal access list generation and access list gas deltas."""
