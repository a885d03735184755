"""Bit-exact semantics of the numeric instructions.

Integers are held as unsigned Python ints masked to their width; floats are
Python floats (f32 values are always rounded to single precision).
"""

from __future__ import annotations

import math
import struct

from ..wasm.types import F32, F64, I32, I64

M32 = 0xFFFFFFFF
M64 = 0xFFFFFFFFFFFFFFFF


class NumericTrap(Exception):
    def __init__(self, kind: str):
        super().__init__(kind)
        self.kind = kind


def s32(v: int) -> int:
    return v - (1 << 32) if v & 0x80000000 else v


def s64(v: int) -> int:
    return v - (1 << 64) if v & 0x8000000000000000 else v


def f32_round(x: float) -> float:
    try:
        return struct.unpack("<f", struct.pack("<f", x))[0]
    except OverflowError:
        return math.copysign(math.inf, x)


def f32_from_bits(b: int) -> float:
    return struct.unpack("<f", struct.pack("<I", b & M32))[0]


def f32_to_bits(x: float) -> int:
    return struct.unpack("<I", struct.pack("<f", x))[0]


def f64_from_bits(b: int) -> float:
    return struct.unpack("<d", struct.pack("<Q", b & M64))[0]


def f64_to_bits(x: float) -> int:
    return struct.unpack("<Q", struct.pack("<d", x))[0]


def int_to_f32(v: int) -> float:
    """Round an arbitrary integer to the nearest f32 (ties to even) in one step."""
    if v == 0:
        return 0.0
    neg = v < 0
    a = -v if neg else v
    bits = a.bit_length()
    if bits > 24:
        shift = bits - 24
        q, r = divmod(a, 1 << shift)
        half = 1 << (shift - 1)
        if r > half or (r == half and q & 1):
            q += 1
        a = q << shift
    out = float(a)
    return -out if neg else out


def _clz(v, w):
    return w - v.bit_length()


def _ctz(v, w):
    return w if v == 0 else (v & -v).bit_length() - 1


def _popcnt(v):
    return bin(v).count("1")


def _rotl(v, n, w, m):
    n %= w
    return ((v << n) | (v >> (w - n))) & m


def _idiv_s(a, b, w):
    if b == 0:
        raise NumericTrap("div-by-zero")
    sa, sb = (s32(a), s32(b)) if w == 32 else (s64(a), s64(b))
    if sa == -(1 << (w - 1)) and sb == -1:
        raise NumericTrap("int-overflow")
    q = abs(sa) // abs(sb)
    return (-q if (sa < 0) != (sb < 0) else q) & ((1 << w) - 1)


def _irem_s(a, b, w):
    if b == 0:
        raise NumericTrap("div-by-zero")
    sa, sb = (s32(a), s32(b)) if w == 32 else (s64(a), s64(b))
    r = abs(sa) % abs(sb)
    return (-r if sa < 0 else r) & ((1 << w) - 1)


def _idiv_u(a, b):
    if b == 0:
        raise NumericTrap("div-by-zero")
    return a // b


def _irem_u(a, b):
    if b == 0:
        raise NumericTrap("div-by-zero")
    return a % b


def _fmin(a, b):
    if math.isnan(a) or math.isnan(b):
        return math.nan
    if a == b == 0:
        return a if math.copysign(1, a) < 0 else b
    return min(a, b)


def _fmax(a, b):
    if math.isnan(a) or math.isnan(b):
        return math.nan
    if a == b == 0:
        return a if math.copysign(1, a) > 0 else b
    return max(a, b)


def _nearest(x):
    if math.isnan(x) or math.isinf(x) or x == 0:
        return x
    r = float(round(x))  # Python rounds half to even
    return math.copysign(r, x) if r == 0 else r


def _ftrunc(x):
    if math.isnan(x) or math.isinf(x):
        return x
    return math.copysign(float(math.trunc(x)), x)


def _fceil(x):
    if math.isnan(x) or math.isinf(x):
        return x
    return math.copysign(float(math.ceil(x)), x)


def _ffloor(x):
    if math.isnan(x) or math.isinf(x):
        return x
    return math.copysign(float(math.floor(x)), x)


def _fsqrt(x):
    if math.isnan(x) or x < 0:
        return math.nan
    return math.sqrt(x)


def _fdiv(a, b):
    if b == 0:
        if math.isnan(a) or a == 0:
            return math.nan
        return math.copysign(math.inf, a) * math.copysign(1, b)
    return a / b


def _feq(a, b):
    return int(a == b)


def _trunc(x, lo, hi, w):
    if math.isnan(x):
        raise NumericTrap("invalid-conversion")
    t = math.trunc(x) if not math.isinf(x) else None
    if t is None or t < lo or t > hi:
        raise NumericTrap("int-overflow")
    return t & ((1 << w) - 1)


def _trunc_sat(x, lo, hi, w):
    if math.isnan(x):
        return 0
    if x <= lo:
        return lo & ((1 << w) - 1)
    if x >= hi:
        return hi & ((1 << w) - 1)
    return math.trunc(x) & ((1 << w) - 1)


def _sext(v, from_bits, w):
    v &= (1 << from_bits) - 1
    if v & (1 << (from_bits - 1)):
        v -= 1 << from_bits
    return v & ((1 << w) - 1)


def _build_tables():
    un: dict = {}
    bi: dict = {}
    for t, w, m in ((I32, 32, M32), (I64, 64, M64)):
        sx = s32 if w == 32 else s64
        un[f"{t}.eqz"] = lambda a: int(a == 0)
        un[f"{t}.clz"] = lambda a, w=w: _clz(a, w)
        un[f"{t}.ctz"] = lambda a, w=w: _ctz(a, w)
        un[f"{t}.popcnt"] = _popcnt
        bi[f"{t}.add"] = lambda a, b, m=m: (a + b) & m
        bi[f"{t}.sub"] = lambda a, b, m=m: (a - b) & m
        bi[f"{t}.mul"] = lambda a, b, m=m: (a * b) & m
        bi[f"{t}.div_s"] = lambda a, b, w=w: _idiv_s(a, b, w)
        bi[f"{t}.div_u"] = _idiv_u
        bi[f"{t}.rem_s"] = lambda a, b, w=w: _irem_s(a, b, w)
        bi[f"{t}.rem_u"] = _irem_u
        bi[f"{t}.and"] = lambda a, b: a & b
        bi[f"{t}.or"] = lambda a, b: a | b
        bi[f"{t}.xor"] = lambda a, b: a ^ b
        bi[f"{t}.shl"] = lambda a, b, w=w, m=m: (a << (b % w)) & m
        bi[f"{t}.shr_u"] = lambda a, b, w=w: a >> (b % w)
        bi[f"{t}.shr_s"] = lambda a, b, w=w, m=m, sx=sx: (sx(a) >> (b % w)) & m
        bi[f"{t}.rotl"] = lambda a, b, w=w, m=m: _rotl(a, b, w, m)
        bi[f"{t}.rotr"] = lambda a, b, w=w, m=m: _rotl(a, w - (b % w), w, m)
        bi[f"{t}.eq"] = lambda a, b: int(a == b)
        bi[f"{t}.ne"] = lambda a, b: int(a != b)
        bi[f"{t}.lt_u"] = lambda a, b: int(a < b)
        bi[f"{t}.gt_u"] = lambda a, b: int(a > b)
        bi[f"{t}.le_u"] = lambda a, b: int(a <= b)
        bi[f"{t}.ge_u"] = lambda a, b: int(a >= b)
        bi[f"{t}.lt_s"] = lambda a, b, sx=sx: int(sx(a) < sx(b))
        bi[f"{t}.gt_s"] = lambda a, b, sx=sx: int(sx(a) > sx(b))
        bi[f"{t}.le_s"] = lambda a, b, sx=sx: int(sx(a) <= sx(b))
        bi[f"{t}.ge_s"] = lambda a, b, sx=sx: int(sx(a) >= sx(b))

    for t in (F32, F64):
        rnd = f32_round if t == F32 else (lambda x: x)
        un[f"{t}.abs"] = lambda a: math.copysign(a, 1.0) if not math.isnan(a) else abs(a)
        un[f"{t}.neg"] = lambda a: -a
        un[f"{t}.ceil"] = _fceil
        un[f"{t}.floor"] = _ffloor
        un[f"{t}.trunc"] = _ftrunc
        un[f"{t}.nearest"] = _nearest
        un[f"{t}.sqrt"] = lambda a, rnd=rnd: rnd(_fsqrt(a))
        bi[f"{t}.add"] = lambda a, b, rnd=rnd: rnd(a + b)
        bi[f"{t}.sub"] = lambda a, b, rnd=rnd: rnd(a - b)
        bi[f"{t}.mul"] = lambda a, b, rnd=rnd: rnd(a * b)
        bi[f"{t}.div"] = lambda a, b, rnd=rnd: rnd(_fdiv(a, b))
        bi[f"{t}.min"] = _fmin
        bi[f"{t}.max"] = _fmax
        bi[f"{t}.copysign"] = lambda a, b: math.copysign(a, b)
        bi[f"{t}.eq"] = _feq
        bi[f"{t}.ne"] = lambda a, b: int(a != b)
        bi[f"{t}.lt"] = lambda a, b: int(a < b)
        bi[f"{t}.gt"] = lambda a, b: int(a > b)
        bi[f"{t}.le"] = lambda a, b: int(a <= b)
        bi[f"{t}.ge"] = lambda a, b: int(a >= b)

    i32r = (-(1 << 31), (1 << 31) - 1)
    u32r = (0, M32)
    i64r = (-(1 << 63), (1 << 63) - 1)
    u64r = (0, M64)
    for src in (F32, F64):
        un[f"i32.trunc_{src}_s"] = lambda a: _trunc(a, *i32r, 32)
        un[f"i32.trunc_{src}_u"] = lambda a: _trunc(a, *u32r, 32)
        un[f"i64.trunc_{src}_s"] = lambda a: _trunc(a, *i64r, 64)
        un[f"i64.trunc_{src}_u"] = lambda a: _trunc(a, *u64r, 64)
        un[f"i32.trunc_sat_{src}_s"] = lambda a: _trunc_sat(a, *i32r, 32)
        un[f"i32.trunc_sat_{src}_u"] = lambda a: _trunc_sat(a, *u32r, 32)
        un[f"i64.trunc_sat_{src}_s"] = lambda a: _trunc_sat(a, *i64r, 64)
        un[f"i64.trunc_sat_{src}_u"] = lambda a: _trunc_sat(a, *u64r, 64)
    un["i32.wrap_i64"] = lambda a: a & M32
    un["i64.extend_i32_s"] = lambda a: s32(a) & M64
    un["i64.extend_i32_u"] = lambda a: a
    un["f32.convert_i32_s"] = lambda a: int_to_f32(s32(a))
    un["f32.convert_i32_u"] = int_to_f32
    un["f32.convert_i64_s"] = lambda a: int_to_f32(s64(a))
    un["f32.convert_i64_u"] = int_to_f32
    un["f32.demote_f64"] = f32_round
    un["f64.convert_i32_s"] = lambda a: float(s32(a))
    un["f64.convert_i32_u"] = float
    un["f64.convert_i64_s"] = lambda a: float(s64(a))
    un["f64.convert_i64_u"] = float
    un["f64.promote_f32"] = lambda a: a
    un["i32.reinterpret_f32"] = f32_to_bits
    un["i64.reinterpret_f64"] = f64_to_bits
    un["f32.reinterpret_i32"] = f32_from_bits
    un["f64.reinterpret_i64"] = f64_from_bits
    un["i32.extend8_s"] = lambda a: _sext(a, 8, 32)
    un["i32.extend16_s"] = lambda a: _sext(a, 16, 32)
    un["i64.extend8_s"] = lambda a: _sext(a, 8, 64)
    un["i64.extend16_s"] = lambda a: _sext(a, 16, 64)
    un["i64.extend32_s"] = lambda a: _sext(a, 32, 64)
    return un, bi


UNARY, BINARY = _build_tables()


def const_value(op: str, imm) -> object:
    """Runtime value of a ``*.const`` instruction."""
    v = imm[0]
    if op == "i32.const":
        return v & M32
    if op == "i64.const":
        return v & M64
    if op == "f32.const":
        return f32_from_bits(v)
    return f64_from_bits(v)


def zero(t: str):
    return 0.0 if t in (F32, F64) else 0


def to_wasm(t: str, v):
    """Normalize a host value (possibly negative int) to the engine's representation."""
    if t == I32:
        return int(v) & M32
    if t == I64:
        return int(v) & M64
    if t == F32:
        return f32_round(float(v))
    return float(v)


def from_wasm(t: str, v, signed: bool = True):
    if t == I32:
        return s32(v) if signed else v
    if t == I64:
        return s64(v) if signed else v
    return v
