"""Declared access list audits and corpus statistics."""
