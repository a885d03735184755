"""Decorator-based code injection over :class:`ModuleIR`.

A :class:`Seal` builder records decorators (code attached before, after or
instead of an instruction, or at a function's entry/exit) and structural
additions (locals, functions, imports, memories, globals).  Nothing touches
the original bodies until :meth:`Seal.apply`, which splices all code in one
pass and re-validates the result.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional, Union

from .errors import DuplicateAlternate, TargetNotFound, ValidationFailed
from .wasm import build as B
from .wasm.errors import ValidationError
from .wasm.types import (
    I32,
    DataSegment,
    FunctionIR,
    FuncType,
    Global,
    Import,
    Instr,
    Limits,
    ModuleIR,
    Site,
)
from .wasm.validate import validate

KINDS = ("before", "after", "alternate", "entry", "exit")


@dataclass(frozen=True)
class Decorator:
    target: Union[Site, tuple, int]  # Site, (fid, pc), or fid for entry/exit
    kind: str
    code: tuple
    order: int = 0

    @property
    def fid(self) -> int:
        if isinstance(self.target, Site):
            return self.target.fid
        if isinstance(self.target, tuple):
            return self.target[0]
        return self.target

    @property
    def pc(self) -> Optional[int]:
        if isinstance(self.target, Site):
            return self.target.pc
        if isinstance(self.target, tuple):
            return self.target[1]
        return None


@dataclass(frozen=True)
class LocalSlot:
    fid: int
    index: int
    ty: str


def _remap_calls(body: list, fmap) -> list:
    out = []
    for ins in body:
        if ins.op == "call":
            ins = Instr("call", (fmap(ins.imm[0]),))
        out.append(ins)
    return out


class Seal:
    def __init__(self, m: ModuleIR):
        self.m = m.copy()
        self._decorators: list[tuple[int, Decorator]] = []
        self._seq = 0
        self._orig_locals = {f.fid: len(f.local_types) for f in self.m.funcs}

    # decorators ---------------------------------------------------------

    def attach(self, d: Decorator) -> "Seal":
        if d.kind not in KINDS:
            raise ValueError(f"unknown decorator kind {d.kind!r}")
        f = self._func(d.fid)
        if d.kind in ("entry", "exit"):
            if d.pc is not None:
                raise TargetNotFound(f"{d.kind} decorators target a function, not an instruction")
        else:
            if d.pc is None or not 0 <= d.pc < len(f.body):
                raise TargetNotFound(f"no instruction at func {d.fid} pc {d.pc}")
            op = f.body[d.pc].op
            if d.kind == "after" and op == "unreachable":
                raise ValueError("an after decorator on 'unreachable' can never run")
            if d.kind == "alternate":
                for _, other in self._decorators:
                    if other.kind == "alternate" and (other.fid, other.pc) == (d.fid, d.pc):
                        raise DuplicateAlternate((d.fid, d.pc))
        self._decorators.append((self._seq, dataclasses.replace(d, code=tuple(d.code))))
        self._seq += 1
        return self

    def decorators(self) -> list[Decorator]:
        return [d for _, d in self._decorators]

    # structural additions ----------------------------------------------

    def _func(self, fid: int) -> FunctionIR:
        try:
            return self.m.func(fid)
        except (KeyError, IndexError):
            raise TargetNotFound(f"no defined function {fid}") from None

    def add_local(self, fid: int, ty: str) -> LocalSlot:
        f = self._func(fid)
        f.locals.append(ty)
        return LocalSlot(fid, len(f.local_types) - 1, ty)

    def add_function(self, sig: FuncType, locals_: list, body: list,
                     name: Optional[str] = None, export: Optional[str] = None) -> int:
        type_idx = self.m.add_type(sig)
        fid = self.m.num_funcs
        body = list(body)
        if not body or body[-1].op != "end":
            body.append(B.op("end"))
        self.m.funcs.append(FunctionIR(fid, type_idx, sig, list(locals_), body))
        if name is not None:
            self.m.names[fid] = name
        if export is not None:
            self.add_export(export, "func", fid)
        return fid

    def add_import_func(self, module: str, name: str, sig: FuncType) -> int:
        """Add a function import; every defined function index shifts up by one."""
        for i, imp in enumerate(self.m.imported("func")):
            if (imp.module, imp.name) == (module, name):
                if self.m.types[imp.desc] != sig:
                    raise TargetNotFound(f"import {module}.{name} exists with another type")
                return i
        m = self.m
        type_idx = m.add_type(sig)
        new_idx = m.num_imported_funcs

        def fmap(i):
            return i + 1 if i >= new_idx else i

        last_func_import = max((k for k, imp in enumerate(m.imports) if imp.kind == "func"),
                               default=-1)
        m.imports.insert(last_func_import + 1, Import(module, name, "func", type_idx))
        for f in m.funcs:
            f.fid = fmap(f.fid)
            f.body = _remap_calls(f.body, fmap)
            f.sites = []
        m.exports = {k: (kind, fmap(i) if kind == "func" else i)
                     for k, (kind, i) in m.exports.items()}
        if m.start is not None:
            m.start = fmap(m.start)
        for seg in m.elements:
            seg.funcs = [fmap(i) for i in seg.funcs]
        m.names = {fmap(i): n for i, n in m.names.items()}
        # local-name (and other per-function) subsections would need re-keying
        m.name_extra = []
        self._decorators = [
            (seq, dataclasses.replace(d, target=self._shift_target(d.target, fmap),
                                      code=tuple(_remap_calls(list(d.code), fmap))))
            for seq, d in self._decorators
        ]
        self._orig_locals = {fmap(k): v for k, v in self._orig_locals.items()}
        return new_idx

    @staticmethod
    def _shift_target(target, fmap):
        if isinstance(target, Site):
            return dataclasses.replace(target, fid=fmap(target.fid))
        if isinstance(target, tuple):
            return (fmap(target[0]), target[1])
        return fmap(target)

    def add_memory(self, limits: Limits) -> int:
        self.m.memories.append(limits)
        return len(self.m.all_memories()) - 1

    def add_global(self, g: Global) -> int:
        self.m.globals.append(g)
        return len(self.m.all_globals()) - 1

    def add_data(self, memory: int, offset: int, data: bytes):
        self.m.data.append(DataSegment([B.i32_const(offset)], bytes(data), memory))

    def add_export(self, name: str, kind: str, idx: int):
        if name in self.m.exports:
            raise TargetNotFound(f"export {name!r} already exists")
        self.m.exports[name] = (kind, idx)

    # materialization ----------------------------------------------------

    def apply(self) -> ModuleIR:
        m = self.m.copy()
        by_func: dict[int, list[Decorator]] = {}
        for _, d in sorted(self._decorators, key=lambda p: (p[1].order, p[0])):
            by_func.setdefault(d.fid, []).append(d)
        for fid, decs in by_func.items():
            f = m.func(fid)
            f.body = _splice(f, decs)
        try:
            return validate(m)
        except ValidationError as e:
            raise ValidationFailed(e.fid, e.pc, e.reason) from e


def _func_depths(body: list) -> list[int]:
    """Control depth (number of enclosing blocks) before each instruction."""
    depths = []
    d = 0
    for ins in body:
        if ins.op == "end":
            d -= 1
        depths.append(d)
        if ins.op in ("block", "loop", "if"):
            d += 1
    return depths


def _splice(f: FunctionIR, decs: list[Decorator]) -> list[Instr]:
    before: dict[int, list] = {}
    after: dict[int, list] = {}
    alt: dict[int, tuple] = {}
    entry: list = []
    exits: list = []
    for d in decs:
        if d.kind == "before":
            before.setdefault(d.pc, []).extend(d.code)
        elif d.kind == "after":
            after.setdefault(d.pc, []).extend(d.code)
        elif d.kind == "alternate":
            alt[d.pc] = d.code
        elif d.kind == "entry":
            entry.extend(d.code)
        else:
            exits.extend(d.code)

    body = f.body
    last = len(body) - 1
    depths = _func_depths(body) if exits else None
    tmp = None
    if exits and any(ins.op in ("br_if", "br_table") for ins in body):
        f.locals.append(I32)
        tmp = len(f.local_types) - 1
    out: list[Instr] = list(entry)
    for pc, ins in enumerate(body):
        out.extend(before.get(pc, ()))
        if exits:
            out.extend(_exit_guard(ins, depths[pc], exits, tmp, pc == last))
        if pc in alt:
            out.extend(alt[pc])
        else:
            out.append(ins)
        out.extend(after.get(pc, ()))
    return out


def _exit_guard(ins: Instr, depth: int, code: list, tmp: Optional[int], is_last: bool) -> list:
    """Exit code to run before ``ins`` when ``ins`` may leave the function."""
    op = ins.op
    if op == "return" or is_last:
        return list(code)
    if op == "br":
        return list(code) if ins.imm[0] == depth else []
    if op == "br_if" and ins.imm[0] == depth:
        return [B.local_tee(tmp), B.op("if", None), *code, B.op("end"), B.local_get(tmp)]
    if op == "br_table":
        labels, default = ins.imm
        hits = [i for i, lab in enumerate(labels) if lab == depth]
        if not hits and default != depth:
            return []
        cond: list = []
        for i in hits:
            cond += [B.local_get(tmp), B.i32_const(i), B.op("i32.eq")]
            if len(cond) > 3:
                cond.append(B.op("i32.or"))
        if default == depth:
            cond += [B.local_get(tmp), B.i32_const(len(labels)), B.op("i32.ge_u")]
            if len(cond) > 3:
                cond.append(B.op("i32.or"))
        return [B.local_set(tmp), *cond, B.op("if", None), *code, B.op("end"), B.local_get(tmp)]
    return []


# functional aliases --------------------------------------------------------


def attach(builder: Seal, d: Decorator) -> Seal:
    return builder.attach(d)


def add_local(builder: Seal, fid: int, ty: str) -> LocalSlot:
    return builder.add_local(fid, ty)


def apply(builder: Seal) -> ModuleIR:
    return builder.apply()
