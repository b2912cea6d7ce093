"""Federated learning simulator with significance gating and a server-side update cache."""

__version__ = "0.1.0"
