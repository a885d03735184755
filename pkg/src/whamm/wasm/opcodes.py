"""Opcode table for the supported instruction subset.

Each entry records the binary encoding, the immediate layout and, for
monomorphic instructions, the operand signature (inputs bottom-to-top,
outputs).  Polymorphic instructions (``call``, ``select``, ``local.get`` ...)
have ``sig=None`` and are typed by the validator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .types import F32, F64, I32, I64


@dataclass(frozen=True)
class OpInfo:
    name: str
    code: int  # single byte, or 0xFC00 | sub-opcode for prefixed ops
    imm: str
    sig: Optional[tuple[tuple[str, ...], tuple[str, ...]]] = None
    access: int = 0  # bytes touched by a memory op


OPS: dict[str, OpInfo] = {}
BY_CODE: dict[int, OpInfo] = {}


def _op(name, code, imm="none", sig=None, access=0):
    info = OpInfo(name, code, imm, sig, access)
    OPS[name] = info
    BY_CODE[code] = info


_op("unreachable", 0x00)
_op("nop", 0x01)
_op("block", 0x02, "blocktype")
_op("loop", 0x03, "blocktype")
_op("if", 0x04, "blocktype")
_op("else", 0x05)
_op("end", 0x0B)
_op("br", 0x0C, "label")
_op("br_if", 0x0D, "label")
_op("br_table", 0x0E, "br_table")
_op("return", 0x0F)
_op("call", 0x10, "func")
_op("call_indirect", 0x11, "call_indirect")
_op("drop", 0x1A)
_op("select", 0x1B)
_op("local.get", 0x20, "local")
_op("local.set", 0x21, "local")
_op("local.tee", 0x22, "local")
_op("global.get", 0x23, "global")
_op("global.set", 0x24, "global")

_LOADS = [
    ("i32.load", 0x28, I32, 4), ("i64.load", 0x29, I64, 8),
    ("f32.load", 0x2A, F32, 4), ("f64.load", 0x2B, F64, 8),
    ("i32.load8_s", 0x2C, I32, 1), ("i32.load8_u", 0x2D, I32, 1),
    ("i32.load16_s", 0x2E, I32, 2), ("i32.load16_u", 0x2F, I32, 2),
    ("i64.load8_s", 0x30, I64, 1), ("i64.load8_u", 0x31, I64, 1),
    ("i64.load16_s", 0x32, I64, 2), ("i64.load16_u", 0x33, I64, 2),
    ("i64.load32_s", 0x34, I64, 4), ("i64.load32_u", 0x35, I64, 4),
]
for _n, _c, _t, _a in _LOADS:
    _op(_n, _c, "memarg", ((I32,), (_t,)), _a)

_STORES = [
    ("i32.store", 0x36, I32, 4), ("i64.store", 0x37, I64, 8),
    ("f32.store", 0x38, F32, 4), ("f64.store", 0x39, F64, 8),
    ("i32.store8", 0x3A, I32, 1), ("i32.store16", 0x3B, I32, 2),
    ("i64.store8", 0x3C, I64, 1), ("i64.store16", 0x3D, I64, 2),
    ("i64.store32", 0x3E, I64, 4),
]
for _n, _c, _t, _a in _STORES:
    _op(_n, _c, "memarg", ((I32, _t), ()), _a)

_op("memory.size", 0x3F, "memidx", ((), (I32,)))
_op("memory.grow", 0x40, "memidx", ((I32,), (I32,)))
_op("i32.const", 0x41, "i32", ((), (I32,)))
_op("i64.const", 0x42, "i64", ((), (I64,)))
_op("f32.const", 0x43, "f32", ((), (F32,)))
_op("f64.const", 0x44, "f64", ((), (F64,)))


def _family(t, base, names, shape):
    for i, n in enumerate(names):
        _op(f"{t}.{n}", base + i, "none", shape)


_family(I32, 0x45, ["eqz"], ((I32,), (I32,)))
_family(I32, 0x46, ["eq", "ne", "lt_s", "lt_u", "gt_s", "gt_u", "le_s", "le_u", "ge_s", "ge_u"],
        ((I32, I32), (I32,)))
_family(I64, 0x50, ["eqz"], ((I64,), (I32,)))
_family(I64, 0x51, ["eq", "ne", "lt_s", "lt_u", "gt_s", "gt_u", "le_s", "le_u", "ge_s", "ge_u"],
        ((I64, I64), (I32,)))
_family(F32, 0x5B, ["eq", "ne", "lt", "gt", "le", "ge"], ((F32, F32), (I32,)))
_family(F64, 0x61, ["eq", "ne", "lt", "gt", "le", "ge"], ((F64, F64), (I32,)))
_family(I32, 0x67, ["clz", "ctz", "popcnt"], ((I32,), (I32,)))
_INT_BIN = ["add", "sub", "mul", "div_s", "div_u", "rem_s", "rem_u", "and", "or", "xor",
            "shl", "shr_s", "shr_u", "rotl", "rotr"]
_family(I32, 0x6A, _INT_BIN, ((I32, I32), (I32,)))
_family(I64, 0x79, ["clz", "ctz", "popcnt"], ((I64,), (I64,)))
_family(I64, 0x7C, _INT_BIN, ((I64, I64), (I64,)))
_FUN = ["abs", "neg", "ceil", "floor", "trunc", "nearest", "sqrt"]
_FBIN = ["add", "sub", "mul", "div", "min", "max", "copysign"]
_family(F32, 0x8B, _FUN, ((F32,), (F32,)))
_family(F32, 0x92, _FBIN, ((F32, F32), (F32,)))
_family(F64, 0x99, _FUN, ((F64,), (F64,)))
_family(F64, 0xA0, _FBIN, ((F64, F64), (F64,)))

_CONVERSIONS = [
    ("i32.wrap_i64", I64, I32), ("i32.trunc_f32_s", F32, I32), ("i32.trunc_f32_u", F32, I32),
    ("i32.trunc_f64_s", F64, I32), ("i32.trunc_f64_u", F64, I32),
    ("i64.extend_i32_s", I32, I64), ("i64.extend_i32_u", I32, I64),
    ("i64.trunc_f32_s", F32, I64), ("i64.trunc_f32_u", F32, I64),
    ("i64.trunc_f64_s", F64, I64), ("i64.trunc_f64_u", F64, I64),
    ("f32.convert_i32_s", I32, F32), ("f32.convert_i32_u", I32, F32),
    ("f32.convert_i64_s", I64, F32), ("f32.convert_i64_u", I64, F32),
    ("f32.demote_f64", F64, F32),
    ("f64.convert_i32_s", I32, F64), ("f64.convert_i32_u", I32, F64),
    ("f64.convert_i64_s", I64, F64), ("f64.convert_i64_u", I64, F64),
    ("f64.promote_f32", F32, F64),
    ("i32.reinterpret_f32", F32, I32), ("i64.reinterpret_f64", F64, I64),
    ("f32.reinterpret_i32", I32, F32), ("f64.reinterpret_i64", I64, F64),
    ("i32.extend8_s", I32, I32), ("i32.extend16_s", I32, I32),
    ("i64.extend8_s", I64, I64), ("i64.extend16_s", I64, I64), ("i64.extend32_s", I64, I64),
]
for _i, (_n, _a, _r) in enumerate(_CONVERSIONS):
    _op(_n, 0xA7 + _i, "none", ((_a,), (_r,)))

_SAT = [
    ("i32.trunc_sat_f32_s", F32, I32), ("i32.trunc_sat_f32_u", F32, I32),
    ("i32.trunc_sat_f64_s", F64, I32), ("i32.trunc_sat_f64_u", F64, I32),
    ("i64.trunc_sat_f32_s", F32, I64), ("i64.trunc_sat_f32_u", F32, I64),
    ("i64.trunc_sat_f64_s", F64, I64), ("i64.trunc_sat_f64_u", F64, I64),
]
for _i, (_n, _a, _r) in enumerate(_SAT):
    _op(_n, 0xFC00 | _i, "none", ((_a,), (_r,)))

# Opcodes that belong to proposals outside the subset, mapped to the feature
# name reported by UnsupportedFeature.
UNSUPPORTED_CODES = {
    0x06: "exceptions", 0x07: "exceptions", 0x08: "exceptions", 0x09: "exceptions",
    0x0A: "exceptions", 0x18: "exceptions", 0x19: "exceptions", 0x1F: "exceptions",
    0x12: "tail-call", 0x13: "tail-call", 0x14: "function-references",
    0x15: "function-references", 0x1C: "reference-types", 0x25: "reference-types",
    0x26: "reference-types", 0xD0: "reference-types", 0xD1: "reference-types",
    0xD2: "reference-types", 0xD3: "gc", 0xD4: "gc", 0xD5: "gc", 0xD6: "gc",
    0xFB: "gc", 0xFD: "simd", 0xFE: "threads",
}


def is_load(name: str) -> bool:
    return OPS[name].imm == "memarg" and ".load" in name


def is_store(name: str) -> bool:
    return OPS[name].imm == "memarg" and ".store" in name


def is_memory_access(name: str) -> bool:
    return OPS[name].imm == "memarg"


def access_size(name: str) -> int:
    return OPS[name].access


CATEGORIES = ["control", "load", "store", "arith", "compare", "const", "local/global",
              "call", "other"]

_CONTROL = {"unreachable", "block", "loop", "if", "else", "end", "br", "br_if", "br_table",
            "return"}
_COMPARE = {"eqz", "eq", "ne", "lt_s", "lt_u", "gt_s", "gt_u", "le_s", "le_u", "ge_s",
            "ge_u", "lt", "gt", "le", "ge"}
_ARITH = set(_INT_BIN) | set(_FUN) | set(_FBIN) | {"clz", "ctz", "popcnt", "div"}


def category(name: str) -> str:
    if name in _CONTROL:
        return "control"
    if name in ("call", "call_indirect"):
        return "call"
    if name.startswith(("local.", "global.")):
        return "local/global"
    if is_load(name):
        return "load"
    if is_store(name):
        return "store"
    if name.endswith(".const"):
        return "const"
    suffix = name.split(".", 1)[-1]
    if "." in name and suffix in _COMPARE:
        return "compare"
    if "." in name and suffix in _ARITH:
        return "arith"
    return "other"


def category_id(name: str) -> int:
    return CATEGORIES.index(category(name))


ALL_OPCODES: tuple[str, ...] = tuple(OPS)
