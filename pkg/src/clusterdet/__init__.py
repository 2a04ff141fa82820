"""Cluster-aware two-stage iterative MIMO detection for LEO satellite uplinks."""

__version__ = "0.1.0"
