"""Shared utilities for TalInspector."""
