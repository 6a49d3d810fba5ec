"""Approximate message passing for sparse and robust regression."""
