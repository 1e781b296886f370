"""Trace and access list data model, canonical serialization and validation."""
