"""Small helpers for constructing instruction sequences by hand."""

from __future__ import annotations

import struct

from .types import Instr


def signed(value: int, bits: int) -> int:
    value &= (1 << bits) - 1
    return value - (1 << bits) if value >> (bits - 1) else value


def i32_const(v: int) -> Instr:
    return Instr("i32.const", (signed(v, 32),))


def i64_const(v: int) -> Instr:
    return Instr("i64.const", (signed(v, 64),))


def f32_const(x: float) -> Instr:
    return Instr("f32.const", (struct.unpack("<I", struct.pack("<f", x))[0],))


def f64_const(x: float) -> Instr:
    return Instr("f64.const", (struct.unpack("<Q", struct.pack("<d", x))[0],))


def const(valtype: str, v) -> Instr:
    return {"i32": i32_const, "i64": i64_const, "f32": f32_const, "f64": f64_const}[valtype](v)


def mem(op: str, offset: int = 0, memidx: int = 0, align: int | None = None) -> Instr:
    from .opcodes import OPS

    if align is None:
        align = {1: 0, 2: 1, 4: 2, 8: 3}[OPS[op].access]
    return Instr(op, (align, offset, memidx))


def local_get(i: int) -> Instr:
    return Instr("local.get", (i,))


def local_set(i: int) -> Instr:
    return Instr("local.set", (i,))


def local_tee(i: int) -> Instr:
    return Instr("local.tee", (i,))


def call(f: int) -> Instr:
    return Instr("call", (f,))


def op(name: str, *imm) -> Instr:
    return Instr(name, tuple(imm))
