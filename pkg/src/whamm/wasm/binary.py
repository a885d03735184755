"""Binary decoder and encoder for the supported WebAssembly subset."""

from __future__ import annotations

import struct

from .errors import EncodeOverflow, MalformedBinary, UnsupportedFeature
from .opcodes import BY_CODE, OPS, UNSUPPORTED_CODES
from .types import (
    VALTYPE_BYTES,
    VALTYPE_TO_BYTE,
    CustomSection,
    DataSegment,
    ElemSegment,
    FunctionIR,
    FuncType,
    Global,
    Import,
    Instr,
    Limits,
    ModuleIR,
)

MAGIC = b"\x00asm"
VERSION = b"\x01\x00\x00\x00"
HEADER = MAGIC + VERSION

SEC_CUSTOM, SEC_TYPE, SEC_IMPORT, SEC_FUNC, SEC_TABLE, SEC_MEMORY = 0, 1, 2, 3, 4, 5
SEC_GLOBAL, SEC_EXPORT, SEC_START, SEC_ELEM, SEC_CODE, SEC_DATA, SEC_DATACOUNT = (
    6, 7, 8, 9, 10, 11, 12)

# canonical section order (datacount sits between element and code)
SECTION_ORDER = [1, 2, 3, 4, 5, 6, 7, 8, 9, 12, 10, 11]

EXPORT_KINDS = ["func", "table", "memory", "global"]


# ---------------------------------------------------------------------------
# LEB128


def encode_u(value: int, limit_bits: int = 32) -> bytes:
    if value < 0 or value >= 1 << limit_bits:
        raise EncodeOverflow(f"value {value} does not fit in u{limit_bits}")
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def encode_s(value: int, bits: int = 64) -> bytes:
    if not -(1 << (bits - 1)) <= value < 1 << (bits - 1):
        raise EncodeOverflow(f"value {value} does not fit in s{bits}")
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        if (value == 0 and not byte & 0x40) or (value == -1 and byte & 0x40):
            out.append(byte)
            return bytes(out)
        out.append(byte | 0x80)


class Reader:
    def __init__(self, data: bytes, pos: int = 0, end: int | None = None):
        self.data = data
        self.pos = pos
        self.end = len(data) if end is None else end

    def eof(self) -> bool:
        return self.pos >= self.end

    def fail(self, reason: str):
        raise MalformedBinary(self.pos, reason)

    def byte(self) -> int:
        if self.pos >= self.end:
            self.fail("unexpected end")
        b = self.data[self.pos]
        self.pos += 1
        return b

    def bytes(self, n: int) -> bytes:
        if self.pos + n > self.end:
            self.fail("unexpected end")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return bytes(out)

    def u(self, bits: int = 32) -> int:
        result = shift = 0
        while True:
            b = self.byte()
            result |= (b & 0x7F) << shift
            shift += 7
            if not b & 0x80:
                break
            if shift >= bits + 7:
                self.fail("integer representation too long")
        if result >= 1 << bits:
            self.fail("integer too large")
        return result

    def s(self, bits: int) -> int:
        result = shift = 0
        while True:
            b = self.byte()
            result |= (b & 0x7F) << shift
            shift += 7
            if not b & 0x80:
                break
            if shift >= bits + 7:
                self.fail("integer representation too long")
        if b & 0x40:
            result -= 1 << shift
        if not -(1 << (bits - 1)) <= result < 1 << (bits - 1):
            self.fail("integer too large")
        return result

    def name(self) -> str:
        n = self.u()
        raw = self.bytes(n)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError:
            self.fail("malformed UTF-8 name")

    def valtype(self) -> str:
        b = self.byte()
        if b not in VALTYPE_BYTES:
            if b in (0x70, 0x6F):
                raise UnsupportedFeature("reference-types", "reference value type")
            if b == 0x7B:
                raise UnsupportedFeature("simd", "v128 value type")
            self.fail(f"invalid value type {b:#x}")
        return VALTYPE_BYTES[b]

    def limits(self) -> Limits:
        flag = self.byte()
        if flag == 0:
            return Limits(self.u())
        if flag == 1:
            lo = self.u()
            return Limits(lo, self.u())
        if flag in (2, 3):
            raise UnsupportedFeature("threads", "shared memory")
        if flag >= 4:
            raise UnsupportedFeature("memory64")
        self.fail("invalid limits flag")


# ---------------------------------------------------------------------------
# decoding


def _read_blocktype(r: Reader):
    b = r.data[r.pos] if r.pos < r.end else r.fail("unexpected end")
    if b == 0x40:
        r.pos += 1
        return None
    if b in VALTYPE_BYTES:
        r.pos += 1
        return VALTYPE_BYTES[b]
    idx = r.s(33)
    if idx < 0:
        r.fail("invalid block type")
    return idx


def _read_instr(r: Reader) -> Instr:
    start = r.pos
    code = r.byte()
    if code == 0xFC:
        code = 0xFC00 | r.u()
        if code not in BY_CODE:
            raise UnsupportedFeature("bulk-memory" if code & 0xFF >= 8 else "saturating",
                                     f"0xfc {code & 0xFF} at offset {start:#x}")
    if code in UNSUPPORTED_CODES:
        raise UnsupportedFeature(UNSUPPORTED_CODES[code], f"opcode {code:#x} at offset {start:#x}")
    info = BY_CODE.get(code)
    if info is None:
        raise MalformedBinary(start, f"illegal opcode {code:#x}")
    kind = info.imm
    if kind == "none":
        return Instr(info.name)
    if kind == "blocktype":
        return Instr(info.name, (_read_blocktype(r),))
    if kind in ("label", "func", "local", "global"):
        return Instr(info.name, (r.u(),))
    if kind == "br_table":
        labels = tuple(r.u() for _ in range(r.u()))
        return Instr(info.name, (labels, r.u()))
    if kind == "call_indirect":
        typeidx = r.u()
        return Instr(info.name, (typeidx, r.u()))
    if kind == "memarg":
        flags = r.u()
        memidx = 0
        if flags & 0x40:
            flags &= ~0x40
            memidx = r.u()
        if flags >= 0x40:
            r.fail("invalid memarg flags")
        return Instr(info.name, (flags, r.u(), memidx))
    if kind == "memidx":
        return Instr(info.name, (r.u(),))
    if kind == "i32":
        return Instr(info.name, (r.s(32),))
    if kind == "i64":
        return Instr(info.name, (r.s(64),))
    if kind == "f32":
        return Instr(info.name, (struct.unpack("<I", r.bytes(4))[0],))
    if kind == "f64":
        return Instr(info.name, (struct.unpack("<Q", r.bytes(8))[0],))
    raise AssertionError(kind)


def _read_expr(r: Reader) -> list[Instr]:
    """Read instructions up to and including the ``end`` closing the body."""
    body = []
    depth = 0
    while True:
        ins = _read_instr(r)
        body.append(ins)
        if ins.op in ("block", "loop", "if"):
            depth += 1
        elif ins.op == "end":
            if depth == 0:
                return body
            depth -= 1


def _read_const_expr(r: Reader) -> list[Instr]:
    expr = _read_expr(r)
    return expr[:-1]


def _parse_names(payload: bytes, m: ModuleIR) -> bool:
    r = Reader(payload)
    try:
        r.name()  # "name"
        while not r.eof():
            sub = r.byte()
            size = r.u()
            end = r.pos + size
            if sub == 0:
                m.module_name = Reader(r.data, r.pos, end).name()
            elif sub == 1:
                rr = Reader(r.data, r.pos, end)
                for _ in range(rr.u()):
                    idx = rr.u()
                    m.names[idx] = rr.name()
            else:
                m.name_extra.append((sub, bytes(r.data[r.pos:end])))
            r.pos = end
    except MalformedBinary:
        # best-effort: a broken name section only loses the names
        m.names.clear()
        m.module_name = None
        m.name_extra.clear()
        return False
    return True


def decode_module(data: bytes) -> ModuleIR:
    """Decode ``data`` into a :class:`ModuleIR` (sites are filled by validate)."""
    data = bytes(data)
    if data[:4] != MAGIC:
        raise MalformedBinary(0, "bad magic number")
    if data[4:8] != VERSION:
        raise MalformedBinary(4, "unsupported version")
    r = Reader(data, 8)
    m = ModuleIR()
    func_types: list[int] = []
    last_id = 0
    seen = set()
    code_count = None
    while not r.eof():
        sec_id = r.byte()
        size = r.u()
        start = r.pos
        end = start + size
        if end > len(data):
            r.fail("section size out of bounds")
        sr = Reader(data, start, end)
        if sec_id == SEC_CUSTOM:
            name = sr.name()
            payload = bytes(data[start:end])
            if name == "name" and _parse_names(payload, m):
                m.customs.append(CustomSection("name", b"", last_id))
            else:
                m.customs.append(CustomSection(name, bytes(data[sr.pos:end]), last_id))
            r.pos = end
            continue
        if sec_id not in SECTION_ORDER:
            if sec_id == 13:
                raise UnsupportedFeature("exceptions", "tag section")
            raise MalformedBinary(start - 1, f"unknown section id {sec_id}")
        if sec_id in seen or (last_id and SECTION_ORDER.index(sec_id) < SECTION_ORDER.index(last_id)):
            raise MalformedBinary(start - 1, f"section {sec_id} out of order")
        seen.add(sec_id)
        last_id = sec_id
        if sec_id == SEC_TYPE:
            for _ in range(sr.u()):
                if sr.byte() != 0x60:
                    sr.fail("expected func type")
                params = tuple(sr.valtype() for _ in range(sr.u()))
                results = tuple(sr.valtype() for _ in range(sr.u()))
                m.types.append(FuncType(params, results))
        elif sec_id == SEC_IMPORT:
            for _ in range(sr.u()):
                mod, nm = sr.name(), sr.name()
                kind = sr.byte()
                if kind == 0:
                    desc = sr.u()
                elif kind == 1:
                    if sr.byte() != 0x70:
                        raise UnsupportedFeature("reference-types", "externref table")
                    desc = sr.limits()
                elif kind == 2:
                    desc = sr.limits()
                elif kind == 3:
                    desc = (sr.valtype(), bool(sr.byte()))
                else:
                    sr.fail("invalid import kind")
                m.imports.append(Import(mod, nm, ["func", "table", "memory", "global"][kind], desc))
        elif sec_id == SEC_FUNC:
            func_types = [sr.u() for _ in range(sr.u())]
        elif sec_id == SEC_TABLE:
            for _ in range(sr.u()):
                if sr.byte() != 0x70:
                    raise UnsupportedFeature("reference-types", "externref table")
                m.tables.append(sr.limits())
        elif sec_id == SEC_MEMORY:
            for _ in range(sr.u()):
                m.memories.append(sr.limits())
        elif sec_id == SEC_GLOBAL:
            for _ in range(sr.u()):
                vt = sr.valtype()
                mut = sr.byte()
                if mut > 1:
                    sr.fail("invalid mutability")
                m.globals.append(Global(vt, bool(mut), _read_const_expr(sr)))
        elif sec_id == SEC_EXPORT:
            for _ in range(sr.u()):
                nm = sr.name()
                kind = sr.byte()
                if kind > 3:
                    sr.fail("invalid export kind")
                if nm in m.exports:
                    sr.fail(f"duplicate export {nm!r}")
                m.exports[nm] = (EXPORT_KINDS[kind], sr.u())
        elif sec_id == SEC_START:
            m.start = sr.u()
        elif sec_id == SEC_ELEM:
            for _ in range(sr.u()):
                flag = sr.u()
                if flag != 0:
                    raise UnsupportedFeature("reference-types", f"element segment flag {flag}")
                off = _read_const_expr(sr)
                m.elements.append(ElemSegment(off, [sr.u() for _ in range(sr.u())]))
        elif sec_id == SEC_DATACOUNT:
            sr.u()
            m.data_count = True
        elif sec_id == SEC_CODE:
            code_count = sr.u()
            if code_count != len(func_types):
                sr.fail("function and code section counts differ")
            nimp = sum(1 for i in m.imports if i.kind == "func")
            for i in range(code_count):
                body_size = sr.u()
                br = Reader(data, sr.pos, sr.pos + body_size)
                local_types = []
                for _ in range(br.u()):
                    n = br.u()
                    t = br.valtype()
                    local_types.extend([t] * n)
                    if len(local_types) > 50000:
                        br.fail("too many locals")
                body = _read_expr(br)
                if not br.eof():
                    br.fail("trailing bytes after function body")
                sr.pos += body_size
                tidx = func_types[i]
                if tidx >= len(m.types):
                    sr.fail(f"type index {tidx} out of range")
                m.funcs.append(FunctionIR(nimp + i, tidx, m.types[tidx], local_types, body))
        elif sec_id == SEC_DATA:
            for _ in range(sr.u()):
                flag = sr.u()
                if flag == 0:
                    mem = 0
                elif flag == 2:
                    mem = sr.u()
                else:
                    raise UnsupportedFeature("bulk-memory", "passive data segment")
                off = _read_const_expr(sr)
                m.data.append(DataSegment(off, sr.bytes(sr.u()), mem))
        if sr.pos != end:
            raise MalformedBinary(sr.pos, f"section {sec_id} size mismatch")
        r.pos = end
    if func_types and code_count is None:
        raise MalformedBinary(r.pos, "function section without code section")
    return m


# ---------------------------------------------------------------------------
# encoding


def _vec(items) -> bytes:
    items = list(items)
    return encode_u(len(items)) + b"".join(items)


def _name(s: str) -> bytes:
    raw = s.encode("utf-8")
    return encode_u(len(raw)) + raw


def _limits(lim: Limits) -> bytes:
    if lim.max is None:
        return b"\x00" + encode_u(lim.min)
    return b"\x01" + encode_u(lim.min) + encode_u(lim.max)


def _blocktype(bt) -> bytes:
    if bt is None:
        return b"\x40"
    if isinstance(bt, str):
        return bytes([VALTYPE_TO_BYTE[bt]])
    return encode_s(bt, 33)


def encode_instr(ins: Instr) -> bytes:
    info = OPS.get(ins.op)
    if info is None:
        raise UnsupportedFeature("opcode", ins.op)
    if info.code > 0xFF:
        out = bytes([info.code >> 8]) + encode_u(info.code & 0xFF)
    else:
        out = bytes([info.code])
    kind, imm = info.imm, ins.imm
    if kind == "none":
        return out
    if kind == "blocktype":
        return out + _blocktype(imm[0])
    if kind in ("label", "func", "local", "global", "memidx"):
        return out + encode_u(imm[0])
    if kind == "br_table":
        return out + _vec(encode_u(x) for x in imm[0]) + encode_u(imm[1])
    if kind == "call_indirect":
        return out + encode_u(imm[0]) + encode_u(imm[1])
    if kind == "memarg":
        align, offset, memidx = imm
        if memidx:
            return out + encode_u(align | 0x40) + encode_u(memidx) + encode_u(offset)
        return out + encode_u(align) + encode_u(offset)
    if kind == "i32":
        return out + encode_s(imm[0], 32)
    if kind == "i64":
        return out + encode_s(imm[0], 64)
    if kind == "f32":
        return out + struct.pack("<I", imm[0])
    if kind == "f64":
        return out + struct.pack("<Q", imm[0])
    raise AssertionError(kind)


def encode_expr(instrs, terminate: bool = True) -> bytes:
    out = b"".join(encode_instr(i) for i in instrs)
    return out + b"\x0b" if terminate else out


def _section(sec_id: int, payload: bytes) -> bytes:
    return bytes([sec_id]) + encode_u(len(payload)) + payload


def _encode_locals(local_types) -> bytes:
    groups = []
    for t in local_types:
        if groups and groups[-1][1] == t:
            groups[-1][0] += 1
        else:
            groups.append([1, t])
    return _vec(encode_u(n) + bytes([VALTYPE_TO_BYTE[t]]) for n, t in groups)


def _encode_names(m: ModuleIR) -> bytes:
    payload = _name("name")
    if m.module_name is not None:
        sub = _name(m.module_name)
        payload += b"\x00" + encode_u(len(sub)) + sub
    if m.names:
        sub = _vec(encode_u(i) + _name(n) for i, n in sorted(m.names.items()))
        payload += b"\x01" + encode_u(len(sub)) + sub
    for sub_id, raw in m.name_extra:
        payload += bytes([sub_id]) + encode_u(len(raw)) + raw
    return payload


def encode_module(m: ModuleIR) -> bytes:
    sections: dict[int, bytes] = {}
    if m.types:
        sections[SEC_TYPE] = _vec(
            b"\x60" + _vec(bytes([VALTYPE_TO_BYTE[p]]) for p in t.params)
            + _vec(bytes([VALTYPE_TO_BYTE[p]]) for p in t.results)
            for t in m.types)
    if m.imports:
        items = []
        for imp in m.imports:
            head = _name(imp.module) + _name(imp.name)
            if imp.kind == "func":
                items.append(head + b"\x00" + encode_u(imp.desc))
            elif imp.kind == "table":
                items.append(head + b"\x01\x70" + _limits(imp.desc))
            elif imp.kind == "memory":
                items.append(head + b"\x02" + _limits(imp.desc))
            else:
                vt, mut = imp.desc
                items.append(head + b"\x03" + bytes([VALTYPE_TO_BYTE[vt], int(mut)]))
        sections[SEC_IMPORT] = _vec(items)
    if m.funcs:
        sections[SEC_FUNC] = _vec(encode_u(f.type_idx) for f in m.funcs)
    if m.tables:
        sections[SEC_TABLE] = _vec(b"\x70" + _limits(t) for t in m.tables)
    if m.memories:
        sections[SEC_MEMORY] = _vec(_limits(lim) for lim in m.memories)
    if m.globals:
        sections[SEC_GLOBAL] = _vec(
            bytes([VALTYPE_TO_BYTE[g.valtype], int(g.mutable)]) + encode_expr(g.init)
            for g in m.globals)
    if m.exports:
        sections[SEC_EXPORT] = _vec(
            _name(n) + bytes([EXPORT_KINDS.index(k)]) + encode_u(i)
            for n, (k, i) in m.exports.items())
    if m.start is not None:
        sections[SEC_START] = encode_u(m.start)
    if m.elements:
        sections[SEC_ELEM] = _vec(
            b"\x00" + encode_expr(e.offset) + _vec(encode_u(f) for f in e.funcs)
            for e in m.elements)
    if m.data_count:
        sections[SEC_DATACOUNT] = encode_u(len(m.data))
    if m.funcs:
        bodies = []
        for f in m.funcs:
            body = _encode_locals(f.locals) + encode_expr(f.body, terminate=False)
            bodies.append(encode_u(len(body)) + body)
        sections[SEC_CODE] = _vec(bodies)
    if m.data:
        items = []
        for d in m.data:
            head = b"\x00" if d.memory == 0 else b"\x02" + encode_u(d.memory)
            items.append(head + encode_expr(d.offset) + encode_u(len(d.data)) + d.data)
        sections[SEC_DATA] = _vec(items)

    customs_after: dict[int, list[bytes]] = {}
    for c in m.customs:
        if c.name == "name":
            if not (m.names or m.module_name is not None or m.name_extra):
                continue
            payload = _encode_names(m)
        else:
            payload = _name(c.name) + c.payload
        customs_after.setdefault(c.after, []).append(_section(SEC_CUSTOM, payload))
    if (m.names or m.module_name) and not any(c.name == "name" for c in m.customs):
        customs_after.setdefault(SEC_DATA, []).append(_section(SEC_CUSTOM, _encode_names(m)))

    out = bytearray(HEADER)
    for c in customs_after.get(0, []):
        out += c
    for sec_id in SECTION_ORDER:
        if sec_id in sections:
            out += _section(sec_id, sections[sec_id])
        # customs recorded after a section that is now absent stay in relative order
        for c in customs_after.get(sec_id, []):
            out += c
    return bytes(out)
