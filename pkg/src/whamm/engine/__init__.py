"""Micro-engine: an interpreter plus the monitor-module attachment interface."""

from .interp import HostFunc, Instance, RunResult, TraceEvent, instantiate, run

__all__ = ["HostFunc", "Instance", "RunResult", "TraceEvent", "instantiate", "run"]
