"""Static linking of library modules into a module under construction.

Library functions, memories, globals and data segments are copied into the
target with every index rewritten.  Imports of all libraries are added
first so that function indices handed out afterwards stay stable.
"""

from __future__ import annotations

import functools
import pathlib
from dataclasses import dataclass, field

from .errors import LinkError
from .seal import Seal
from .wasm import load
from .wasm.types import Global, Instr, ModuleIR

LIB_DIR = pathlib.Path(__file__).resolve().parent / "lib"


@functools.lru_cache(maxsize=None)
def _bundled_bytes(name: str) -> bytes:
    path = LIB_DIR / f"{name}.wasm"
    if not path.exists():
        raise LinkError(f"no bundled library named {name!r}")
    return path.read_bytes()


def bundled(name: str) -> ModuleIR:
    """A bundled library module (``rt`` is the monitor runtime)."""
    return load(_bundled_bytes(name))


def bundled_names() -> list[str]:
    return sorted(p.stem for p in LIB_DIR.glob("*.wasm") if p.stem != "rt")


@dataclass
class LinkedLib:
    name: str
    funcs: dict = field(default_factory=dict)  # export name -> function index
    memories: dict = field(default_factory=dict)  # library memidx -> target memidx
    heap_base: int = 0

    def func(self, export: str) -> int:
        try:
            return self.funcs[export]
        except KeyError:
            raise LinkError(f"library {self.name!r} has no exported function {export!r}") \
                from None

    @property
    def memory(self) -> int:
        return self.memories[0]


def _const_i32(expr: list, what: str) -> int:
    if len(expr) == 1 and expr[0].op == "i32.const":
        return expr[0].imm[0]
    raise LinkError(f"{what} must be an i32 constant")


def _check_linkable(name: str, lib: ModuleIR):
    if lib.start is not None:
        raise LinkError(f"library {name!r} has a start function")
    if lib.elements:
        raise LinkError(f"library {name!r} uses tables, which cannot be linked")
    for imp in lib.imports:
        if imp.kind != "func":
            raise LinkError(f"library {name!r} imports a {imp.kind}, only functions are supported")
    for f in lib.funcs:
        for ins in f.body:
            if ins.op == "call_indirect":
                raise LinkError(f"library {name!r} uses call_indirect")


def link_all(builder: Seal, libs: dict) -> dict:
    """Link every ``name -> ModuleIR`` in ``libs`` into ``builder``."""
    for name, lib in libs.items():
        _check_linkable(name, lib)
    # imports first: adding one shifts every defined function
    for lib in libs.values():
        for imp in lib.imports:
            builder.add_import_func(imp.module, imp.name, lib.types[imp.desc])
    return {name: _link_one(builder, name, lib) for name, lib in libs.items()}


def _link_one(builder: Seal, name: str, lib: ModuleIR) -> LinkedLib:
    m = builder.m
    out = LinkedLib(name)
    fmap: dict[int, int] = {}
    for i, imp in enumerate(lib.imported("func")):
        fmap[i] = builder.add_import_func(imp.module, imp.name, lib.types[imp.desc])
    base = m.num_funcs
    nimp = lib.num_imported_funcs
    for k in range(len(lib.funcs)):
        fmap[nimp + k] = base + k
    mmap = {}
    for i, limits in enumerate(lib.all_memories()):
        mmap[i] = builder.add_memory(limits)
    gmap = {}
    for i, g in enumerate(lib.globals):
        gmap[i] = builder.add_global(Global(g.valtype, g.mutable, list(g.init)))
    for f in lib.funcs:
        body = [_relocate(ins, fmap, gmap, mmap) for ins in f.body]
        fid = builder.add_function(f.sig, list(f.locals), body, name=f"{name}.{lib.func_name(f.fid)}")
        assert fid == fmap[f.fid]
    for seg in lib.data:
        builder.add_data(mmap[seg.memory], _const_i32(seg.offset, "data offset"), seg.data)
    for export, (kind, idx) in lib.exports.items():
        if kind == "func":
            out.funcs[export] = fmap[idx]
        elif kind == "global" and export == "__heap_base":
            out.heap_base = _const_i32(lib.globals[idx].init, "__heap_base")
    out.memories = mmap
    return out


def _relocate(ins: Instr, fmap, gmap, mmap) -> Instr:
    op = ins.op
    if op == "call":
        return Instr(op, (fmap[ins.imm[0]],))
    if op in ("global.get", "global.set"):
        return Instr(op, (gmap[ins.imm[0]],))
    if op in ("memory.size", "memory.grow"):
        return Instr(op, (mmap[ins.imm[0]],))
    if len(ins.imm) == 3 and (".load" in op or ".store" in op):
        align, offset, memidx = ins.imm
        return Instr(op, (align, offset, mmap[memidx]))
    return ins
