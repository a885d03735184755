"""The bundled monitor scripts."""

from __future__ import annotations

import pathlib

MONITOR_DIR = pathlib.Path(__file__).resolve().parent / "monitors"
MONITORS = ("branches", "hotness", "imix_map", "imix_per_opcode", "icount", "cache_sim")


def monitor_path(name: str) -> pathlib.Path:
    return MONITOR_DIR / f"{name}.mm"


def monitor_source(name: str) -> str:
    return monitor_path(name).read_text(encoding="utf-8")
