"""Gas-cost constants, fork rules, auto-warm derivation and access charging."""
