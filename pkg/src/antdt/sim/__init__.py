"""Discrete-event simulation of straggler-prone training clusters."""

from .engine import Simulator, run
from .metrics import EventLog, RunMetrics

__all__ = ["Simulator", "run", "EventLog", "RunMetrics"]
