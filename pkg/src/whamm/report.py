"""Collecting the CSV report written by the monitor runtime.

The runtime calls the host import ``whamm.whamm_report(ptr, len)`` once per
row; the bytes live in the memory exported as ``whamm_memory``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Optional

from .engine.interp import HostFunc, Instance
from .errors import Trap
from .wasm.types import I32, FuncType, ModuleIR

HEADER = "name,storage,fid,pc,key,type,value"
COLUMNS = tuple(HEADER.split(","))
REPORT_IMPORT = ("whamm", "whamm_report")
REPORT_SIG = FuncType((I32, I32), ())
REPORT_MEMORY = "whamm_memory"


@dataclass
class ReportSink:
    """Receives rows from one instance's runtime."""

    rows: list = field(default_factory=list)
    instance: Optional[Instance] = None
    memory: int = 0

    def bind(self, instance: Instance):
        self.instance = instance
        kind, idx = instance.module.exports.get(REPORT_MEMORY, ("memory", 0))
        self.memory = idx

    def _write(self, ptr: int, n: int):
        mem = self.instance.memories[self.memory]
        self.rows.append(bytes(mem[ptr:ptr + n]).decode("utf-8"))

    def host_func(self) -> HostFunc:
        return HostFunc(REPORT_SIG, self._write)

    def text(self) -> str:
        return HEADER + "\n" + "".join(self.rows)


def parse_report(text: str) -> list[dict]:
    """Rows of a report as dicts keyed by column name."""
    return list(csv.DictReader(io.StringIO(text)))


def needs_report_import(m: ModuleIR) -> bool:
    return any((imp.module, imp.name) == REPORT_IMPORT for imp in m.imports)


@dataclass
class Outcome:
    values: list
    trap: Optional[Trap]
    report: str

    @property
    def rows(self) -> list[dict]:
        return parse_report(self.report)


def run_instrumented(m: ModuleIR, entry: str = "main", args=(), imports: Optional[dict] = None,
                     max_depth: Optional[int] = None) -> Outcome:
    """Run a module produced by the rewriting target and collect its report."""
    sink = ReportSink()
    imps = dict(imports or {})
    if needs_report_import(m):
        imps[REPORT_IMPORT] = sink.host_func()
    kw = {} if max_depth is None else {"max_depth": max_depth}
    inst = Instance(m, imps, run_start=False, **kw)
    sink.bind(inst)
    values: list = []
    trap = None
    try:
        if m.start is not None:
            inst.invoke(m.start, [])
        values = inst.invoke(entry, list(args))
    except Trap as t:
        trap = t
    return Outcome(values, trap, sink.text())
