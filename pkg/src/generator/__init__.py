"""Data generation helper modules."""
