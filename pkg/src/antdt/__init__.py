"""Straggler mitigation for data-parallel training: data sharding, monitoring,
mitigation policies, batch allocation and a cluster simulator."""

__version__ = "0.1.0"
