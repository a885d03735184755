"""A straightforward interpreter for the supported Wasm subset.

Each function body is first lowered to a list of ``(kind, a, b, c)`` tuples
with block targets resolved, then executed by a single loop over an explicit
frame stack (so deep wasm recursion does not consume Python stack).

Control-flow conventions, shared with the rewriting backend so that probe
placement agrees between the two targets:

* a branch to a block/if label continues *after* the matching ``end``; the
  ``end`` itself does not execute;
* reaching ``else`` from the then-arm skips to after the ``end``;
* an ``if`` whose condition is false continues after its ``else``, or after
  its ``end`` when it has none.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Callable, Optional

from ..errors import LinkError, Trap
from ..wasm.opcodes import OPS
from ..wasm.types import F32, F64, PAGE_SIZE, FuncType, ModuleIR
from .numeric import BINARY, UNARY, M32, M64, NumericTrap, const_value, to_wasm, zero

DEFAULT_MAX_DEPTH = 10000

(CONST, LGET, LSET, LTEE, GGET, GSET, BIN, UN, LOAD, STORE, BLOCK, LOOP, IF, ELSE, END,
 BR, BR_IF, BR_TABLE, RETURN, CALL, CALL_IND, DROP, SELECT, NOP, UNREACH, MSIZE,
 MGROW) = range(27)

_LOAD_FMT = {
    "i32.load": ("<I", 0), "i64.load": ("<Q", 0), "f32.load": ("<f", 0),
    "f64.load": ("<d", 0), "i32.load8_s": ("<b", M32), "i32.load8_u": ("<B", 0),
    "i32.load16_s": ("<h", M32), "i32.load16_u": ("<H", 0), "i64.load8_s": ("<b", M64),
    "i64.load8_u": ("<B", 0), "i64.load16_s": ("<h", M64), "i64.load16_u": ("<H", 0),
    "i64.load32_s": ("<i", M64), "i64.load32_u": ("<I", 0),
}
_STORE_FMT = {
    "i32.store": ("<I", M32), "i64.store": ("<Q", M64), "f32.store": ("<f", 0),
    "f64.store": ("<d", 0), "i32.store8": ("<B", 0xFF), "i32.store16": ("<H", 0xFFFF),
    "i64.store8": ("<B", 0xFF), "i64.store16": ("<H", 0xFFFF), "i64.store32": ("<I", M32),
}


@dataclass
class HostFunc:
    sig: FuncType
    fn: Callable[..., object]  # receives wasm values, returns None, a value or a list


@dataclass
class CompiledFunc:
    fid: int
    sig: FuncType
    local_types: list
    code: list
    pops: list  # operands consumed by each instruction (trace mode)
    pushes: list  # result types pushed (None for "carry" instructions)


@dataclass
class TraceEvent:
    fid: int
    pc: int
    opcode: str
    values: tuple  # consumed operands, top of stack first
    types: tuple


@dataclass
class Frame:
    func: CompiledFunc
    locals: list
    stack: list = field(default_factory=list)
    labels: list = field(default_factory=list)
    pc: int = 0
    types: Optional[list] = None


def _lower(m: ModuleIR, f) -> CompiledFunc:
    body = f.body
    code: list = [None] * len(body)
    pops: list = [0] * len(body)
    pushes: list = [()] * len(body)
    glob_types = [t for t, _ in m.all_globals()]
    local_types = f.local_types
    # match block starts with their else/end
    open_blocks = []
    ends: dict[int, int] = {}
    elses: dict[int, int] = {}
    for pc, ins in enumerate(body):
        if ins.op in ("block", "loop", "if"):
            open_blocks.append(pc)
        elif ins.op == "else":
            elses[open_blocks[-1]] = pc
        elif ins.op == "end":
            if open_blocks:
                ends[open_blocks.pop()] = pc
    # static block nesting, used for label arities in trace bookkeeping
    nest: list = [("func", FuncType((), f.sig.results))]
    for pc, ins in enumerate(body):
        op, imm = ins.op, ins.imm
        info = OPS[op]
        if op in ("block", "loop", "if"):
            sig = m.block_type(imm[0])
            npar, nres = len(sig.params), len(sig.results)
            nest.append((op, sig))
            if op == "block":
                code[pc] = (BLOCK, ends[pc] + 1, nres, npar)
            elif op == "loop":
                code[pc] = (LOOP, pc + 1, npar, npar)
            else:
                els = elses.get(pc)
                false_pc = (els + 1) if els is not None else ends[pc] + 1
                code[pc] = (IF, false_pc, (ends[pc] + 1, nres), npar)
            pops[pc] = npar + (op == "if")
            pushes[pc] = None
            continue
        if op == "else":
            kind, sig = nest[-1]
            nest[-1] = ("else", sig)
            code[pc] = (ELSE, 0, 0, 0)
            pops[pc] = len(sig.results)
            pushes[pc] = None
            continue
        if op == "end":
            kind, sig = nest.pop()
            code[pc] = (END, 0, 0, 0)
            pops[pc] = len(sig.results)
            pushes[pc] = None
            continue
        if op in ("br", "br_if"):
            kind, sig = nest[-1 - imm[0]] if imm[0] < len(nest) else ("func", FuncType())
            arity = len(sig.params) if kind == "loop" else len(sig.results)
            code[pc] = ((BR if op == "br" else BR_IF), imm[0], 0, 0)
            pops[pc] = arity + (op == "br_if")
            pushes[pc] = None
            continue
        if op == "br_table":
            labels, default = imm
            kind, sig = nest[-1 - default]
            arity = len(sig.params) if kind == "loop" else len(sig.results)
            code[pc] = (BR_TABLE, tuple(labels), default, 0)
            pops[pc] = arity + 1
            pushes[pc] = None
            continue
        if op == "return":
            code[pc] = (RETURN, 0, 0, 0)
            pops[pc] = len(f.sig.results)
            pushes[pc] = None
            continue
        if op == "call":
            sig = m.func_type(imm[0])
            code[pc] = (CALL, imm[0], 0, 0)
            pops[pc] = len(sig.params)
            pushes[pc] = sig.results
            continue
        if op == "call_indirect":
            sig = m.types[imm[0]]
            code[pc] = (CALL_IND, sig, imm[1], 0)
            pops[pc] = len(sig.params) + 1
            pushes[pc] = sig.results
            continue
        if info.imm == "memarg":
            align, offset, memidx = imm
            if op in _LOAD_FMT:
                fmt, mask = _LOAD_FMT[op]
                code[pc] = (LOAD, memidx, offset, (struct.Struct(fmt), mask, info.access))
            else:
                fmt, mask = _STORE_FMT[op]
                code[pc] = (STORE, memidx, offset, (struct.Struct(fmt), mask, info.access))
        elif op.endswith(".const"):
            code[pc] = (CONST, const_value(op, imm), 0, 0)
        elif op == "local.get":
            code[pc] = (LGET, imm[0], 0, 0)
            pushes[pc] = (local_types[imm[0]],)
            continue
        elif op == "local.set":
            code[pc] = (LSET, imm[0], 0, 0)
            pops[pc] = 1
            continue
        elif op == "local.tee":
            code[pc] = (LTEE, imm[0], 0, 0)
            pops[pc] = 1
            pushes[pc] = (local_types[imm[0]],)
            continue
        elif op == "global.get":
            code[pc] = (GGET, imm[0], 0, 0)
            pushes[pc] = (glob_types[imm[0]],)
            continue
        elif op == "global.set":
            code[pc] = (GSET, imm[0], 0, 0)
            pops[pc] = 1
            continue
        elif op == "drop":
            code[pc] = (DROP, 0, 0, 0)
            pops[pc] = 1
            continue
        elif op == "select":
            code[pc] = (SELECT, 0, 0, 0)
            pops[pc] = 3
            pushes[pc] = None
            continue
        elif op == "nop":
            code[pc] = (NOP, 0, 0, 0)
            continue
        elif op == "unreachable":
            code[pc] = (UNREACH, 0, 0, 0)
            continue
        elif op == "memory.size":
            code[pc] = (MSIZE, imm[0], 0, 0)
        elif op == "memory.grow":
            code[pc] = (MGROW, imm[0], 0, 0)
        elif op in BINARY:
            code[pc] = (BIN, BINARY[op], 0, int("div" in op or "rem" in op))
        elif op in UNARY:
            code[pc] = (UN, UNARY[op], 0, 0)
        else:  # pragma: no cover - the opcode table and the lowering are in sync
            raise NotImplementedError(op)
        ins_t, outs = info.sig
        pops[pc] = len(ins_t)
        pushes[pc] = outs
    return CompiledFunc(f.fid, f.sig, local_types, code, pops, pushes)


class Instance:
    """An instantiated module.

    ``imports`` maps ``(module, name)`` to a :class:`HostFunc`.  Probe hooks
    are installed by :mod:`whamm.engine.monitor` through :attr:`hooks`,
    a mapping ``fid -> {pc: [callback(frame)]}``; ``extra_locals`` appends
    zero-initialised locals to every activation of the given function.
    """

    def __init__(self, m: ModuleIR, imports: Optional[dict] = None,
                 max_depth: int = DEFAULT_MAX_DEPTH, run_start: bool = True):
        self.module = m
        self.max_depth = max_depth
        self.hooks: dict[int, dict[int, list]] = {}
        self.extra_locals: dict[int, list] = {}
        self.tracer: Optional[Callable[[TraceEvent], None]] = None
        imports = imports or {}
        self.funcs: list = []
        for imp in m.imports:
            if imp.kind != "func":
                raise LinkError(f"unsupported import kind {imp.kind} for {imp.module}.{imp.name}")
            host = imports.get((imp.module, imp.name))
            if host is None:
                raise LinkError(f"unresolved import {imp.module}.{imp.name}")
            want = m.types[imp.desc]
            if host.sig != want:
                raise LinkError(f"import {imp.module}.{imp.name}: expected {want}, got {host.sig}")
            self.funcs.append(host)
        for f in m.funcs:
            self.funcs.append(_lower(m, f))
        self.memories = [bytearray(lim.min * PAGE_SIZE) for lim in m.memories]
        self.mem_max = [lim.max for lim in m.memories]
        self.globals = [self._const(g.init) for g in m.globals]
        self.tables = [[None] * lim.min for lim in m.tables]
        for seg in m.elements:
            off = self._const(seg.offset)
            table = self.tables[seg.table]
            if off + len(seg.funcs) > len(table):
                raise Trap("out-of-bounds")
            table[off:off + len(seg.funcs)] = seg.funcs
        for seg in m.data:
            off = self._const(seg.offset)
            mem = self.memories[seg.memory]
            if off + len(seg.data) > len(mem):
                raise Trap("out-of-bounds")
            mem[off:off + len(seg.data)] = seg.data
        if run_start and m.start is not None:
            self.invoke(m.start, [])

    def _const(self, expr):
        ins = expr[0]
        if ins.op == "global.get":
            raise LinkError("global imports are not supported")
        return const_value(ins.op, ins.imm)

    # public API ---------------------------------------------------------

    def resolve(self, name_or_idx) -> int:
        if isinstance(name_or_idx, int):
            return name_or_idx
        return self.module.export_func(name_or_idx)

    def invoke(self, name_or_idx, args=()) -> list:
        fidx = self.resolve(name_or_idx)
        target = self.funcs[fidx]
        sig = target.sig
        if len(args) != len(sig.params):
            raise TypeError(f"function {fidx} expects {len(sig.params)} arguments")
        vals = [to_wasm(t, a) for t, a in zip(sig.params, args)]
        if isinstance(target, HostFunc):
            return self._call_host(target, vals, -1, -1)
        return self._execute(target, vals)

    def read_memory(self, idx: int = 0) -> bytes:
        return bytes(self.memories[idx])

    # execution ----------------------------------------------------------

    def _new_frame(self, cf: CompiledFunc, args: list) -> Frame:
        locals_ = list(args)
        for t in cf.local_types[len(args):]:
            locals_.append(0.0 if t in (F32, F64) else 0)
        extra = self.extra_locals.get(cf.fid)
        if extra:
            locals_.extend(zero(t) for t in extra)
        fr = Frame(cf, locals_)
        fr.labels.append((0, len(cf.sig.results), -1, False))
        if self.tracer is not None:
            fr.types = []
        return fr

    def _call_host(self, host: HostFunc, args: list, fid: int, pc: int) -> list:
        out = host.fn(*args)
        if out is None:
            out = []
        elif not isinstance(out, (list, tuple)):
            out = [out]
        return [to_wasm(t, v) for t, v in zip(host.sig.results, out)]

    def _execute(self, cf: CompiledFunc, args: list) -> list:
        frames = [self._new_frame(cf, args)]
        try:
            return self._loop(frames)
        except NumericTrap as e:
            fr = frames[-1]
            raise Trap(e.kind, fr.func.fid, fr.pc) from None

    def _loop(self, frames: list) -> list:
        memories = self.memories
        globals_ = self.globals
        hooks = self.hooks
        tracer = self.tracer
        fr = frames[-1]
        cf = fr.func
        code = cf.code
        stack = fr.stack
        locals_ = fr.locals
        labels = fr.labels
        fhooks = hooks.get(cf.fid)
        pc = 0
        while True:
            if fhooks is not None and pc in fhooks:
                fr.pc = pc
                for cb in fhooks[pc]:
                    cb(fr)
            if tracer is not None:
                fr.pc = pc
                self._trace_before(fr, pc)
            kind, a, b, c = code[pc]
            pc += 1
            if kind == LGET:
                stack.append(locals_[a])
            elif kind == CONST:
                stack.append(a)
            elif kind == BIN:
                if c:
                    fr.pc = pc - 1
                y = stack.pop()
                stack[-1] = a(stack[-1], y)
            elif kind == LSET:
                locals_[a] = stack.pop()
            elif kind == BR_IF:
                cond = stack.pop()
                if fr.types is not None:
                    fr.types.pop()
                if cond:
                    pc = self._branch(fr, a)
                    if pc < 0:
                        fr, pc = self._return(frames, fr)
                        if fr is None:
                            return pc
                        cf, code, stack, locals_, labels = (fr.func, fr.func.code, fr.stack,
                                                            fr.locals, fr.labels)
                        fhooks = hooks.get(cf.fid)
                        continue
            elif kind == LOAD:
                fr.pc = pc - 1
                st, mask, size = c
                mem = memories[a]
                ea = stack[-1] + b
                if ea + size > len(mem):
                    raise Trap("out-of-bounds", cf.fid, pc - 1)
                v = st.unpack_from(mem, ea)[0]
                stack[-1] = v & mask if mask else v
            elif kind == STORE:
                fr.pc = pc - 1
                st, mask, size = c
                v = stack.pop()
                ea = stack.pop() + b
                mem = memories[a]
                if ea + size > len(mem):
                    raise Trap("out-of-bounds", cf.fid, pc - 1)
                st.pack_into(mem, ea, v & mask if mask else v)
            elif kind == LTEE:
                locals_[a] = stack[-1]
            elif kind == UN:
                fr.pc = pc - 1
                stack[-1] = a(stack[-1])
            elif kind == GGET:
                stack.append(globals_[a])
            elif kind == GSET:
                globals_[a] = stack.pop()
            elif kind == BLOCK:
                labels.append((len(stack) - c, b, a, False))
            elif kind == LOOP:
                labels.append((len(stack) - c, b, a, True))
            elif kind == IF:
                cond = stack.pop()
                if fr.types is not None:
                    fr.types.pop()
                cont, nres = b
                if cond:
                    labels.append((len(stack) - c, nres, cont, False))
                else:
                    if a != cont:  # enter the else arm
                        labels.append((len(stack) - c, nres, cont, False))
                    pc = a
            elif kind == ELSE:
                pc = labels.pop()[2]
            elif kind == END:
                labels.pop()
                if not labels:
                    fr, pc = self._return(frames, fr)
                    if fr is None:
                        return pc
                    cf, code, stack, locals_, labels = (fr.func, fr.func.code, fr.stack,
                                                        fr.locals, fr.labels)
                    fhooks = hooks.get(cf.fid)
                    continue
            elif kind == BR or kind == BR_TABLE or kind == RETURN:
                if kind == BR:
                    depth = a
                elif kind == BR_TABLE:
                    i = stack.pop()
                    if fr.types is not None:
                        fr.types.pop()
                    depth = a[i] if i < len(a) else b
                else:
                    depth = len(labels) - 1
                pc = self._branch(fr, depth)
                if pc < 0:
                    fr, pc = self._return(frames, fr)
                    if fr is None:
                        return pc
                    cf, code, stack, locals_, labels = (fr.func, fr.func.code, fr.stack,
                                                        fr.locals, fr.labels)
                    fhooks = hooks.get(cf.fid)
                    continue
            elif kind == CALL or kind == CALL_IND:
                fr.pc = pc - 1
                if kind == CALL:
                    target = self.funcs[a]
                else:
                    i = stack.pop()
                    table = self.tables[b]
                    if i >= len(table):
                        raise Trap("out-of-bounds", cf.fid, pc - 1)
                    fidx = table[i]
                    if fidx is None:
                        raise Trap("call-indirect-mismatch", cf.fid, pc - 1)
                    target = self.funcs[fidx]
                    if target.sig != a:
                        raise Trap("call-indirect-mismatch", cf.fid, pc - 1)
                n = len(target.sig.params)
                args = stack[len(stack) - n:] if n else []
                if n:
                    del stack[-n:]
                if fr.types is not None:
                    if n:
                        del fr.types[-n:]
                    if kind == CALL_IND:
                        fr.types.pop()
                if isinstance(target, HostFunc):
                    res = self._call_host(target, args, cf.fid, pc - 1)
                    stack.extend(res)
                    if fr.types is not None:
                        fr.types.extend(target.sig.results)
                    continue
                if len(frames) >= self.max_depth:
                    raise Trap("stack-exhaustion", cf.fid, pc - 1)
                fr.pc = pc
                fr = self._new_frame(target, args)
                frames.append(fr)
                cf, code, stack, locals_, labels = target, target.code, fr.stack, fr.locals, fr.labels
                fhooks = hooks.get(cf.fid)
                pc = 0
                continue
            elif kind == DROP:
                stack.pop()
            elif kind == SELECT:
                cond = stack.pop()
                y = stack.pop()
                if not cond:
                    stack[-1] = y
            elif kind == NOP:
                pass
            elif kind == UNREACH:
                raise Trap("unreachable", cf.fid, pc - 1)
            elif kind == MSIZE:
                stack.append(len(memories[a]) // PAGE_SIZE)
            elif kind == MGROW:
                delta = stack[-1]
                mem = memories[a]
                old = len(mem) // PAGE_SIZE
                limit = self.mem_max[a] if self.mem_max[a] is not None else 65536
                if old + delta > limit:
                    stack[-1] = M32
                else:
                    mem.extend(bytes(delta * PAGE_SIZE))
                    stack[-1] = old
            if tracer is not None:
                self._retype(fr, pc - 1)

    def _branch(self, fr: Frame, depth: int) -> int:
        """Unwind to label ``depth``; returns the continuation pc (-1: return)."""
        labels = fr.labels
        height, arity, cont, is_loop = labels[-1 - depth]
        stack = fr.stack
        if len(stack) != height + arity:
            if arity:
                stack[height:] = stack[len(stack) - arity:]
            else:
                del stack[height:]
            if fr.types is not None:
                if arity:
                    fr.types[height:] = fr.types[len(fr.types) - arity:]
                else:
                    del fr.types[height:]
        if cont < 0:
            return -1
        if is_loop:
            del labels[len(labels) - depth:]
        else:
            del labels[len(labels) - 1 - depth:]
        return cont

    def _return(self, frames: list, fr: Frame):
        nres = len(fr.func.sig.results)
        results = fr.stack[len(fr.stack) - nres:] if nres else []
        frames.pop()
        if not frames:
            return None, results
        caller = frames[-1]
        caller.stack.extend(results)
        if caller.types is not None:
            caller.types.extend(fr.func.sig.results)
        return caller, caller.pc

    # trace mode ---------------------------------------------------------

    def _trace_before(self, fr: Frame, pc: int):
        cf = fr.func
        n = cf.pops[pc]
        stack = fr.stack
        vals = tuple(reversed(stack[len(stack) - n:])) if n else ()
        types = tuple(reversed(fr.types[len(fr.types) - n:])) if n else ()
        op = self.module.func(cf.fid).body[pc].op
        self.tracer(TraceEvent(cf.fid, pc, op, vals, types))

    def _retype(self, fr: Frame, pc: int):
        """Keep the shadow type stack in step after a non-control instruction."""
        cf = fr.func
        pushes = cf.pushes[pc]
        types = fr.types
        kind = cf.code[pc][0]
        if pushes is None:
            if kind == SELECT:
                del types[-1]
                t = types.pop()
                types[-1] = t
            return
        if kind in (CALL, CALL_IND):
            return  # handled at call/return time
        n = cf.pops[pc]
        if n:
            del types[len(types) - n:]
        types.extend(pushes)


def instantiate(m: ModuleIR, imports: Optional[dict] = None, **kw) -> Instance:
    return Instance(m, imports, **kw)


@dataclass
class RunResult:
    values: list
    trap: Optional[Trap]
    memories: list
    trace: Optional[list] = None

    @property
    def trapped(self) -> bool:
        return self.trap is not None


def run(app: ModuleIR, entry: str = "main", args=(), imports: Optional[dict] = None,
        trace: bool = False, max_depth: int = DEFAULT_MAX_DEPTH) -> RunResult:
    """Instantiate ``app`` and call ``entry``; traps are captured, not raised."""
    events: Optional[list] = [] if trace else None
    inst = Instance(app, imports, max_depth=max_depth, run_start=False)
    if trace:
        inst.tracer = events.append
    values: list = []
    trap = None
    try:
        if app.start is not None:
            inst.invoke(app.start, [])
        values = inst.invoke(entry, list(args))
    except Trap as t:
        trap = t
    return RunResult(values, trap, [bytes(mm) for mm in inst.memories], events)
