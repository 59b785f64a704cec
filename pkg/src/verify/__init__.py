"""Verification helper modules."""
