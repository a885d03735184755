"""Type checking by abstract interpretation.

Besides accepting or rejecting a module, the validator records a
:class:`Site` per instruction holding the operand types the instruction
consumes (top of stack first).  Type bounds in match rules are checked
against this data.
"""

from __future__ import annotations

import dataclasses

from .errors import InvalidIndex, StackUnderflow, ValidationError, WasmTypeError
from .opcodes import OPS
from .types import F32, F64, I32, I64, FunctionIR, FuncType, ModuleIR, Site

MAX_PAGES = 65536
_NATURAL_ALIGN = {1: 0, 2: 1, 4: 2, 8: 3}


class _Frame:
    __slots__ = ("op", "params", "results", "height", "unreachable")

    def __init__(self, op, params, results, height):
        self.op = op
        self.params = params
        self.results = results
        self.height = height
        self.unreachable = False

    @property
    def label_types(self):
        return self.params if self.op == "loop" else self.results


class _FuncChecker:
    def __init__(self, m: ModuleIR, f: FunctionIR):
        self.m = m
        self.f = f
        self.fid = f.fid
        self.locals = f.local_types
        self.vals: list = []
        self.ctrl: list[_Frame] = []
        self.pc = 0
        self.mem_count = len(m.all_memories())
        self.table_count = len(m.all_tables())
        self.globals = m.all_globals()

    # stack helpers ------------------------------------------------------

    def err(self, reason):
        raise ValidationError(self.fid, self.pc, reason)

    def push(self, t):
        self.vals.append(t)

    def pop(self, expected=None):
        frame = self.ctrl[-1]
        if len(self.vals) == frame.height:
            if frame.unreachable:
                return expected
            raise StackUnderflow(self.fid, self.pc)
        actual = self.vals.pop()
        if expected is not None and actual is not None and actual != expected:
            raise WasmTypeError(self.fid, self.pc, expected, actual)
        return actual if actual is not None else expected

    def pop_many(self, types) -> list:
        """Pop ``types`` (bottom-to-top order); returns popped, top first."""
        return [self.pop(t) for t in reversed(types)]

    def push_many(self, types):
        for t in types:
            self.push(t)

    def push_ctrl(self, op, params, results):
        self.ctrl.append(_Frame(op, tuple(params), tuple(results), len(self.vals)))
        self.push_many(params)

    def pop_ctrl(self) -> tuple[_Frame, list]:
        if not self.ctrl:
            self.err("control stack underflow")
        frame = self.ctrl[-1]
        popped = self.pop_many(frame.results)
        if len(self.vals) != frame.height:
            self.err("values remaining on stack at end of block")
        self.ctrl.pop()
        return frame, popped

    def set_unreachable(self):
        frame = self.ctrl[-1]
        del self.vals[frame.height:]
        frame.unreachable = True

    def label(self, depth):
        if depth >= len(self.ctrl):
            raise InvalidIndex(self.fid, self.pc, f"unknown label {depth}")
        return self.ctrl[-1 - depth]

    def block_sig(self, bt) -> FuncType:
        if isinstance(bt, int) and bt >= len(self.m.types):
            raise InvalidIndex(self.fid, self.pc, f"unknown type {bt}")
        return self.m.block_type(bt)

    def check_mem(self, idx):
        if idx >= self.mem_count:
            raise InvalidIndex(self.fid, self.pc, f"unknown memory {idx}")

    # main loop ----------------------------------------------------------

    def run(self) -> list[Site]:
        sites = []
        self.push_ctrl("func", (), self.f.sig.results)
        body = self.f.body
        if not body or body[-1].op != "end":
            self.err("function body must end with 'end'")
        for pc, ins in enumerate(body):
            self.pc = pc
            if not self.ctrl:
                self.err("instructions after final end")
            stack_in = self.step(ins)
            sites.append(Site(self.fid, pc, ins.op, tuple(stack_in), site_immediates(ins)))
        if self.ctrl:
            self.err("unterminated block")
        return sites

    def step(self, ins) -> list:
        op, imm = ins.op, ins.imm
        info = OPS.get(op)
        if info is None:
            self.err(f"unknown instruction {op}")
        if info.sig is not None:
            if info.imm == "memarg":
                align, _, memidx = imm
                self.check_mem(memidx)
                if align > _NATURAL_ALIGN[info.access]:
                    self.err("alignment must not be larger than natural")
            elif info.imm == "memidx":
                self.check_mem(imm[0])
            ins_t, outs = info.sig
            popped = self.pop_many(ins_t)
            self.push_many(outs)
            return popped

        if op in ("nop",):
            return []
        if op == "unreachable":
            self.set_unreachable()
            return []
        if op in ("block", "loop"):
            sig = self.block_sig(imm[0])
            popped = self.pop_many(sig.params)
            self.push_ctrl(op, sig.params, sig.results)
            return popped
        if op == "if":
            sig = self.block_sig(imm[0])
            cond = self.pop(I32)
            popped = self.pop_many(sig.params)
            self.push_ctrl(op, sig.params, sig.results)
            return [cond] + popped
        if op == "else":
            frame, popped = self.pop_ctrl()
            if frame.op != "if":
                self.err("else without matching if")
            self.push_ctrl("else", frame.params, frame.results)
            return popped
        if op == "end":
            frame, popped = self.pop_ctrl()
            if frame.op == "if" and frame.params != frame.results:
                self.err("if without else must have matching param/result types")
            self.push_many(frame.results)
            return popped
        if op == "br":
            popped = self.pop_many(self.label(imm[0]).label_types)
            self.set_unreachable()
            return popped
        if op == "br_if":
            cond = self.pop(I32)
            types = self.label(imm[0]).label_types
            popped = self.pop_many(types)
            self.push_many(types)
            return [cond] + popped
        if op == "br_table":
            labels, default = imm
            cond = self.pop(I32)
            arity = len(self.label(default).label_types)
            for lab in labels:
                if len(self.label(lab).label_types) != arity:
                    self.err("br_table targets have different arity")
                saved = list(self.vals)
                self.pop_many(self.label(lab).label_types)
                self.vals[:] = saved
            popped = self.pop_many(self.label(default).label_types)
            self.set_unreachable()
            return [cond] + popped
        if op == "return":
            popped = self.pop_many(self.ctrl[0].results)
            self.set_unreachable()
            return popped
        if op == "call":
            if imm[0] >= self.m.num_funcs:
                raise InvalidIndex(self.fid, self.pc, f"unknown function {imm[0]}")
            sig = self.m.func_type(imm[0])
            popped = self.pop_many(sig.params)
            self.push_many(sig.results)
            return popped
        if op == "call_indirect":
            typeidx, table = imm
            if table >= self.table_count:
                raise InvalidIndex(self.fid, self.pc, f"unknown table {table}")
            if typeidx >= len(self.m.types):
                raise InvalidIndex(self.fid, self.pc, f"unknown type {typeidx}")
            sig = self.m.types[typeidx]
            idx = self.pop(I32)
            popped = self.pop_many(sig.params)
            self.push_many(sig.results)
            return [idx] + popped
        if op == "drop":
            return [self.pop()]
        if op == "select":
            cond = self.pop(I32)
            t1 = self.pop()
            t2 = self.pop(t1)
            t = t1 if t1 is not None else t2
            self.push(t)
            return [cond, t, t]
        if op.startswith("local."):
            if imm[0] >= len(self.locals):
                raise InvalidIndex(self.fid, self.pc, f"unknown local {imm[0]}")
            t = self.locals[imm[0]]
            if op == "local.get":
                self.push(t)
                return []
            v = self.pop(t)
            if op == "local.tee":
                self.push(t)
            return [v]
        if op.startswith("global."):
            if imm[0] >= len(self.globals):
                raise InvalidIndex(self.fid, self.pc, f"unknown global {imm[0]}")
            t, mutable = self.globals[imm[0]]
            if op == "global.get":
                self.push(t)
                return []
            if not mutable:
                self.err("global is immutable")
            return [self.pop(t)]
        self.err(f"unhandled instruction {op}")


def site_immediates(ins) -> tuple[int, ...]:
    """Flatten immediates to integers; memory ops expose the offset first."""
    op, imm = ins.op, ins.imm
    kind = OPS[op].imm
    if kind == "memarg":
        align, offset, memidx = imm
        return (offset, align, memidx)
    if kind == "br_table":
        labels, default = imm
        return (len(labels), *labels, default)
    if kind == "blocktype":
        bt = imm[0]
        return (-1,) if bt is None else ((bt,) if isinstance(bt, int) else (-2,))
    return tuple(imm)


_CONST_OPS = {"i32.const": I32, "i64.const": I64, "f32.const": F32, "f64.const": F64}


def _check_const_expr(m: ModuleIR, expr, expected, where, num_globals=None):
    if len(expr) != 1:
        raise ValidationError(-1, 0, f"{where}: constant expression must be one instruction")
    ins = expr[0]
    if ins.op in _CONST_OPS:
        t = _CONST_OPS[ins.op]
    elif ins.op == "global.get":
        imported = m.imported("global")
        if ins.imm[0] >= len(imported):
            raise ValidationError(-1, 0, f"{where}: global.get must reference an imported global")
        t, mutable = imported[ins.imm[0]].desc
        if mutable:
            raise ValidationError(-1, 0, f"{where}: constant expression reads a mutable global")
    else:
        raise ValidationError(-1, 0, f"{where}: not a constant instruction: {ins.op}")
    if t != expected:
        raise WasmTypeError(-1, 0, expected, t)


def _check_limits(lim, bound, what):
    if lim.min > bound or (lim.max is not None and (lim.max > bound or lim.max < lim.min)):
        raise ValidationError(-1, 0, f"invalid {what} limits {lim}")


def validate(m: ModuleIR) -> ModuleIR:
    """Validate ``m`` and return a copy whose functions carry their sites."""
    for imp in m.imports:
        if imp.kind == "func" and imp.desc >= len(m.types):
            raise ValidationError(-1, 0, f"import {imp.name}: unknown type {imp.desc}")
    for lim in m.all_memories():
        _check_limits(lim, MAX_PAGES, "memory")
    for lim in m.all_tables():
        _check_limits(lim, 1 << 32, "table")
    for i, g in enumerate(m.globals):
        _check_const_expr(m, g.init, g.valtype, f"global {i}")
    nfuncs = m.num_funcs
    for name, (kind, idx) in m.exports.items():
        limit = {"func": nfuncs, "table": len(m.all_tables()),
                 "memory": len(m.all_memories()), "global": len(m.all_globals())}[kind]
        if idx >= limit:
            raise ValidationError(-1, 0, f"export {name!r}: unknown {kind} {idx}")
    if m.start is not None:
        if m.start >= nfuncs:
            raise ValidationError(-1, 0, f"unknown start function {m.start}")
        if m.func_type(m.start) != FuncType():
            raise ValidationError(-1, 0, "start function must have type [] -> []")
    for seg in m.elements:
        if seg.table >= len(m.all_tables()):
            raise ValidationError(-1, 0, "element segment: unknown table")
        _check_const_expr(m, seg.offset, I32, "element offset")
        for f in seg.funcs:
            if f >= nfuncs:
                raise ValidationError(-1, 0, f"element segment: unknown function {f}")
    for seg in m.data:
        if seg.memory >= len(m.all_memories()):
            raise ValidationError(-1, 0, f"data segment: unknown memory {seg.memory}")
        _check_const_expr(m, seg.offset, I32, "data offset")

    out = dataclasses.replace(m)
    out.funcs = []
    for f in m.funcs:
        if f.type_idx >= len(m.types):
            raise ValidationError(f.fid, 0, f"unknown type {f.type_idx}")
        sites = _FuncChecker(m, f).run()
        out.funcs.append(dataclasses.replace(f, sites=sites))
    return out
