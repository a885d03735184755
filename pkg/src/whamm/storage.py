"""Layout of monitor state in the runtime's memory.

The compiler owns a static region starting at the runtime's heap base:

* interned strings, sorted, each as ``u32 length`` + bytes
* script-level and ``shared`` variables (scalars, or 24-byte map headers)
* the report descriptor table read by ``rt_flush``
* (rewriting target only) one region per match site for ``unshared``
  variables, chained through their headers

A region header is ``[next, fid, pc, directive]`` (16 bytes); variables
follow at fixed offsets shared by every region of a directive.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Optional

from .lang import ast as A
from .lang.typecheck import TypedScript, VarInfo

TYPE_CODES = {"bool": 0, "u8": 1, "i8": 2, "u16": 3, "i16": 4, "u32": 5, "i32": 6,
              "u64": 7, "i64": 8, "f32": 9, "f64": 10, "str": 11}
STORAGE_CODES = {"global": 0, "shared": 1, "unshared": 2}
REGION_HEADER = 16
MAP_HEADER = 24
DESC_SIZE = 28
UNSIGNED_FLAG = 16  # offset of the unsigned-key flag in a map header


def _align(n: int, a: int) -> int:
    return (n + a - 1) // a * a


def scalar_size(t: A.Prim) -> int:
    return 8 if t.name in ("u64", "i64", "f64") else 4


def var_size(info: VarInfo) -> int:
    return MAP_HEADER if info.is_map else scalar_size(info.ty)


def is_unsigned_key(t: A.Prim) -> bool:
    return not t.signed or t.name in ("bool", "str")


def encode_scalar(t: A.Prim, value) -> bytes:
    if t.name in ("u64", "i64"):
        return struct.pack("<Q", int(value) & (2**64 - 1))
    if t.name == "f64":
        return struct.pack("<d", float(value))
    if t.name == "f32":
        return struct.pack("<f", float(value))
    return struct.pack("<I", int(value) & 0xFFFFFFFF)


def type_code(info: VarInfo) -> int:
    t = info.ty.value if info.is_map else info.ty
    return TYPE_CODES[t.name]


@dataclass
class DirectiveRegion:
    """Variable offsets inside one directive's per-site region."""

    directive: int
    offsets: dict = field(default_factory=dict)  # var name -> offset
    size: int = REGION_HEADER
    inits: list = field(default_factory=list)  # (offset, bytes) written at allocation

    @classmethod
    def plan(cls, directive: int, unshared: list) -> "DirectiveRegion":
        r = cls(directive)
        off = REGION_HEADER
        for info in unshared:
            off = _align(off, 8)
            r.offsets[info.name] = off
            init = _initial_bytes(info)
            if init is not None:
                r.inits.append((off, init))
            off += var_size(info)
        r.size = _align(off, 8)
        return r


def _initial_bytes(info: VarInfo) -> Optional[bytes]:
    if info.is_map:
        if is_unsigned_key(info.ty.key):
            return b"\0" * UNSIGNED_FLAG + struct.pack("<I", 1) + b"\0" * 4
        return None
    if info.init is None or info.ty == A.STR:
        return None  # string initializers are patched with the interned pointer
    data = encode_scalar(info.ty, info.init)
    return data if any(data) else None


class StaticLayout:
    """Builds the static region image; addresses are absolute."""

    def __init__(self, base: int):
        self.base = _align(base, 8)
        self.buf = bytearray()
        self.strings: dict[str, int] = {}
        self.vars: dict[str, int] = {}  # VarInfo.key -> address
        self.desc_table = 0
        self.desc_count = 0
        self.regions: dict[int, DirectiveRegion] = {}

    # raw allocation -------------------------------------------------

    def alloc(self, size: int, align: int = 8) -> int:
        off = _align(len(self.buf), align)
        self.buf.extend(b"\0" * (off + size - len(self.buf)))
        return self.base + off

    def write(self, addr: int, data: bytes):
        off = addr - self.base
        self.buf[off:off + len(data)] = data

    @property
    def end(self) -> int:
        return self.base + _align(len(self.buf), 8)

    # contents -------------------------------------------------------

    def intern_all(self, strings):
        for s in sorted(set(strings)):
            data = s.encode("utf-8")
            addr = self.alloc(4 + len(data), 4)
            self.write(addr, struct.pack("<I", len(data)) + data)
            self.strings[s] = addr

    def string(self, s: str) -> int:
        return self.strings[s]

    def place_var(self, info: VarInfo) -> int:
        addr = self.alloc(var_size(info), 8)
        init = _initial_bytes(info)
        if info.ty == A.STR and info.init:
            init = struct.pack("<I", self.string(info.init))
        if init is not None:
            self.write(addr, init)
        self.vars[info.key] = addr
        return addr

    def place_region(self, region: DirectiveRegion, fid: int, pc: int) -> int:
        addr = self.alloc(region.size, 8)
        self.write(addr + 4, struct.pack("<III", fid & 0xFFFFFFFF, pc & 0xFFFFFFFF,
                                         region.directive))
        for off, data in region.inits:
            self.write(addr + off, data)
        return addr

    def chain(self, regions: list[int]) -> tuple[int, int]:
        """Link regions through their ``next`` fields; returns (head, tail)."""
        for a, b in zip(regions, regions[1:]):
            self.write(a, struct.pack("<I", b))
        if not regions:
            return 0, 0
        return regions[0], regions[-1]

    def place_descriptors(self, ts: TypedScript):
        rows = []
        for info in ts.report_vars():
            storage = STORAGE_CODES[info.storage]
            if info.storage == "unshared":
                offset = self.regions[info.directive].offsets[info.name]
            else:
                offset = self.vars[info.key]
            directive = info.directive if info.directive is not None else 0xFFFFFFFF
            key = TYPE_CODES[info.ty.key.name] if info.is_map else 0
            rows.append(struct.pack("<7I", self.string(info.name), storage, directive, offset,
                                    type_code(info), int(info.is_map), key))
        self.desc_count = len(rows)
        self.desc_table = self.alloc(max(DESC_SIZE * len(rows), 4), 4)
        self.write(self.desc_table, b"".join(rows))


def layout_script(ts: TypedScript, base: int, extra_strings=()) -> StaticLayout:
    """Place strings, persistent non-unshared variables and region plans."""
    lay = StaticLayout(base)
    names = [v.name for v in ts.report_vars()]
    lay.intern_all(list(ts.strings) + names + list(extra_strings))
    for info in ts.all_vars():
        if info.storage in ("global", "shared"):
            lay.place_var(info)
    for d in ts.directives:
        unshared = d.unshared_vars()
        if unshared:
            region = DirectiveRegion.plan(d.index, unshared)
            for info in unshared:
                if info.ty == A.STR and info.init:
                    region.inits.append((region.offsets[info.name],
                                         struct.pack("<I", lay.string(info.init))))
            lay.regions[d.index] = region
    return lay
