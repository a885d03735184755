"""Monitor-module target: compile a checked script into a standalone module.

The module never sees an application.  Matching information travels in
export names::

    wasm:opcode:OPCODE [/ $pred(params) /] [(params)]
    wasm:exit

A probe export names its opcode, an optional static predicate function
(evaluated once per candidate site when the monitor is attached) and the
values the engine must pass on every call.  A parameter is one of ``argN``,
``immN``, ``localN``, ``pc``, ``fid``, ``frame`` or a match-time callback
``$name(params)`` whose result is passed as a constant.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional, Union

from . import match as M
from .codegen import CodeEnv, ProbeCodegen, fold_block
from .errors import CheckError, LinkError, MalformedProbeName, UnsupportedForEngineTarget
from .lang import ast as A
from .lang.typecheck import LibFunc, TypedDirective, TypedScript, VarInfo
from .link import bundled, link_all
from .opt import fold, split_predicate
from .seal import Seal
from .storage import DirectiveRegion, layout_script
from .wasm import build as B
from .wasm.opcodes import OPS, category_id, is_load, is_memory_access
from .wasm.types import I32, I64, FuncType, Limits, ModuleIR, PAGE_SIZE

EXIT_EXPORT = "wasm:exit"
RT = "__rt"


# export names -------------------------------------------------------------------


class NotAProbe(Exception):
    """The export name is not a monitor export; engines ignore such exports."""


@dataclass(frozen=True)
class CallRef:
    """``$name(params)``: an exported monitor function called at match time."""

    name: str
    params: Optional[tuple] = None  # None: written without parentheses

    def __str__(self):
        return "$" + self.name + _params_text(self.params)


Param = Union[str, CallRef]


@dataclass(frozen=True)
class MatchBinding:
    kind: str  # "opcode" or "exit"
    opcode: str = ""
    predicate: Optional[CallRef] = None
    params: Optional[tuple] = None  # None: no parameter list in the name

    @property
    def arity(self) -> int:
        return len(self.params or ())


EXIT_BINDING = MatchBinding("exit")

_TOKEN = re.compile(r"(arg|imm|local)(0|[1-9][0-9]*)\Z|pc\Z|fid\Z|frame\Z")
_ID = re.compile(r"[A-Za-z_][A-Za-z0-9_.]*")
_OPCODE = re.compile(r"[a-z0-9_.]+")


def _params_text(params) -> str:
    if params is None:
        return ""
    return "(" + ",".join(str(p) for p in params) + ")"


def encode_export_name(b: MatchBinding) -> str:
    if b.kind == "exit":
        return EXIT_EXPORT
    name = f"wasm:opcode:{b.opcode}"
    if b.predicate is not None:
        name += f"/{b.predicate}/"
    return name + _params_text(b.params)


class _NameParser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def fail(self, detail: str):
        raise MalformedProbeName(self.text, f"{detail} at offset {self.pos}")

    def peek(self) -> str:
        return self.text[self.pos:self.pos + 1]

    def expect(self, ch: str):
        if self.peek() != ch:
            self.fail(f"expected {ch!r}")
        self.pos += 1

    def regex(self, rx, what: str) -> str:
        m = rx.match(self.text, self.pos)
        if not m or not m.group(0):
            self.fail(f"expected {what}")
        self.pos = m.end()
        return m.group(0)

    def call(self) -> CallRef:
        self.expect("$")
        name = self.regex(_ID, "a function name")
        params = self.params() if self.peek() == "(" else None
        return CallRef(name, params)

    def params(self) -> tuple:
        self.expect("(")
        out = []
        if self.peek() == ")":
            self.pos += 1
            return ()
        while True:
            out.append(self.param())
            if self.peek() == ",":
                self.pos += 1
                continue
            self.expect(")")
            return tuple(out)

    def param(self) -> Param:
        if self.peek() == "$":
            return self.call()
        m = re.compile(r"[a-z]+[0-9]*").match(self.text, self.pos)
        if not m or not _TOKEN.match(m.group(0)):
            self.fail("expected a parameter (argN, immN, localN, pc, fid, frame or $call)")
        self.pos = m.end()
        return m.group(0)


def parse_export_name(name: str) -> MatchBinding:
    """Parse an export name; :class:`NotAProbe` for ordinary exports."""
    if not name.startswith("wasm:"):
        raise NotAProbe(name)
    if name == EXIT_EXPORT:
        return EXIT_BINDING
    prefix = "wasm:opcode:"
    if not name.startswith(prefix):
        raise MalformedProbeName(name, "expected 'wasm:opcode:' or 'wasm:exit'")
    p = _NameParser(name)
    p.pos = len(prefix)
    opcode = p.regex(_OPCODE, "an opcode")
    if opcode not in OPS:
        raise MalformedProbeName(name, f"unknown opcode {opcode!r}")
    pred = None
    if p.peek() == "/":
        p.pos += 1
        pred = p.call()
        p.expect("/")
    params = p.params() if p.peek() == "(" else None
    if p.pos != len(name):
        p.fail("unexpected trailing text")
    return MatchBinding("opcode", opcode, pred, params)


# parameter vectors ----------------------------------------------------------------


def _check_supported(td: TypedDirective):
    if td.is_func:
        raise UnsupportedForEngineTarget(f"function {'/'.join(td.modes)} events")
    for mode in td.modes:
        if mode != "before":
            raise UnsupportedForEngineTarget(f"'{mode}' mode")


def raw_tokens(var: str, opcode: str) -> list[str]:
    """Export-name tokens the engine must supply to compute ``var`` at ``opcode``."""
    kind, n = M.split_indexed(var)
    if kind in ("arg", "imm", "local", "pc", "fid"):
        return [var]
    if kind in ("addr", "effective_addr") and is_memory_access(opcode):
        a = f"arg{0 if is_load(opcode) else 1}"
        return [a] if kind == "addr" else [a, "imm0"]
    if kind == "taken":
        return ["arg0"] if opcode == "br_if" else []
    if kind == "trap" and M.is_divide(opcode):
        signed = opcode.endswith("_s") and "div" in opcode
        return ["arg0", "arg1"] if signed else ["arg0"]
    if kind == "trap":
        raise UnsupportedForEngineTarget("'trap' at memory accesses (needs the memory size)")
    if kind == "target_fn_name":
        raise UnsupportedForEngineTarget("'target_fn_name'")
    raise UnsupportedForEngineTarget(f"bound variable {var!r}")


def token_type(tok: str, opcode: str, bounds: dict) -> str:
    kind, n = M.split_indexed(tok)
    if kind == "imm":
        return I64
    if kind in ("pc", "fid"):
        return I32
    if tok in bounds:
        return bounds[tok]
    if kind == "arg":
        ok, ty = M.arg_type(opcode, n)
        if ty is not None:
            return ty
    raise CheckError(f"no type known for {tok!r} at {opcode}; add a type bound")


def _tokens_for(trees, opcode: str) -> list[str]:
    out: dict[str, None] = {}
    for var in M.collect_params(trees):
        for t in raw_tokens(var, opcode):
            out.setdefault(t, None)
    return list(out)


def _uses_frame(trees) -> bool:
    found = []

    def visit(node):
        if isinstance(node, (A.Var, A.MapGet)):
            if isinstance(node.ref, VarInfo) and node.ref.storage == "frame":
                found.append(node)
        if isinstance(node, list):
            for x in node:
                visit(x)
        elif hasattr(node, "__dataclass_fields__"):
            for f in node.__dataclass_fields__:
                if f not in ("ty", "ref", "info"):
                    visit(getattr(node, f))

    visit(list(trees))
    return bool(found)


@dataclass
class ProbePlan:
    directive: TypedDirective
    opcode: str
    guard: Optional[A.Expr]
    body: list
    static_cond: Optional[A.Expr]  # None: no static predicate needed
    tokens: list
    frame: bool
    alloc: bool


def plan_probes(ts: TypedScript) -> list[ProbePlan]:
    """One plan per directive, opcode and class of equal residuals."""
    plans = []
    for td in ts.directives:
        _check_supported(td)
        for opcode in td.opcodes:
            env = {"category_id": category_id(opcode)}
            body = fold_block(td.body, env)
            pred = None if td.predicate is None else fold(td.predicate, env)
            if pred is None:
                groups = [(A.BoolLit(True), None)]
                split = None
            else:
                split = split_predicate(pred)
                groups = [(r, rows) for r, rows in split.groups]
            for residual, rows in groups:
                if isinstance(residual, A.BoolLit) and not residual.value:
                    continue
                cond = None
                if split is not None and split.atoms and len(rows) < 2 ** len(split.atoms):
                    cond = split.condition(rows)
                guard = None if isinstance(residual, A.BoolLit) else residual
                trees = [guard, body]
                for var in M.collect_params(trees + [cond]):
                    if M.split_indexed(var)[0] == "target_fn_name":
                        raise UnsupportedForEngineTarget("'target_fn_name'")
                plans.append(ProbePlan(td, opcode, guard, body, cond, _tokens_for(trees, opcode),
                                       _uses_frame(trees), bool(td.unshared_vars())))
    return plans


# code environment -------------------------------------------------------------------


class MonitorEnv(CodeEnv):
    """Probe functions read bound values from their parameters."""

    def __init__(self, em: "_Emitter", opcode: str, params: dict, alloc: Optional[int],
                 frame: dict, nparams: int, directive: Optional[int] = None):
        self.em = em
        self.opcode = opcode
        self.params = params  # token -> local index
        self.alloc = alloc
        self.frame = frame  # VarInfo.key -> local index
        self.rt_mem = em.rt_mem
        self.extra: list[str] = []
        self.nparams = nparams
        self.named: dict = {}
        self.temps: dict = {}

    def _new_local(self, ty: str) -> int:
        self.extra.append(ty)
        return self.nparams + len(self.extra) - 1

    def load_bound(self, name, ty):
        kind, n = M.split_indexed(name)
        op = self.opcode
        if kind in ("arg", "imm", "local", "pc", "fid"):
            return [B.local_get(self.params[name])]
        if kind == "addr":
            return [B.local_get(self.params[raw_tokens(name, op)[0]])]
        if kind == "effective_addr":
            a, imm = raw_tokens(name, op)
            return [B.local_get(self.params[a]), B.op("i64.extend_i32_u"),
                    B.local_get(self.params[imm]), B.op("i64.add")]
        if kind == "taken":
            if op == "br_if":
                return [B.local_get(self.params["arg0"]), B.i32_const(0), B.op("i32.ne")]
            return [B.i32_const(1)]
        if kind == "trap":
            t = op[:3]
            width = 32 if t == "i32" else 64
            code = [B.local_get(self.params["arg0"]), B.op(f"{t}.eqz")]
            if "arg1" in raw_tokens(name, op):
                code += [B.local_get(self.params["arg0"]), B.const(t, -1), B.op(f"{t}.eq"),
                         B.local_get(self.params["arg1"]), B.const(t, -(1 << (width - 1))),
                         B.op(f"{t}.eq"), B.op("i32.and"), B.op("i32.or")]
            return code
        raise UnsupportedForEngineTarget(f"bound variable {name!r}")

    def var_address(self, info: VarInfo):
        lay = self.em.layout
        if info.storage == "unshared":
            return [B.local_get(self.alloc)], lay.regions[info.directive].offsets[info.name]
        return [B.i32_const(lay.vars[info.key])], 0

    def var_local(self, info: VarInfo) -> int:
        if info.storage == "frame":
            return self.frame[info.key]
        if info.key not in self.named:
            self.named[info.key] = self._new_local(A.wasm_type(info.ty))
        return self.named[info.key]

    def temp(self, valtype):
        k = self.temps.get(valtype, 0)
        self.temps[valtype] = k + 1
        key = ("tmp", valtype, k)
        if key not in self.named:
            self.named[key] = self._new_local(valtype)
        return self.named[key]

    def lib_func(self, lf: LibFunc) -> int:
        return self.em.linked[lf.lib].func(lf.name)

    def rt_func(self, name):
        return self.em.linked[RT].func(name)

    def string_ptr(self, s):
        return self.em.layout.string(s)


# emission --------------------------------------------------------------------------


class _Emitter:
    def __init__(self, ts: TypedScript, libs: dict):
        self.ts = ts
        self.libs = libs
        self.builder = Seal(ModuleIR())
        self.linked: dict = {}
        self.rt_mem = -1
        self.layout = None
        self.names: set = set()
        self.npred = 0

    def export(self, name: str, fid: int):
        self.builder.add_export(name, "func", fid)
        self.names.add(name)

    def pred_function(self, cond: Optional[A.Expr], tokens: list, opcode: str, bounds) -> CallRef:
        params = {t: i for i, t in enumerate(tokens)}
        sig = FuncType(tuple(token_type(t, opcode, bounds) for t in tokens), (I32,))
        env = MonitorEnv(self, opcode, params, None, {}, len(tokens))
        gen = ProbeCodegen(env)
        if cond is None:
            gen.emit(B.i32_const(1))
        else:
            gen.expr(cond)
        name = f"pred{self.npred}"
        self.npred += 1
        fid = self.builder.add_function(sig, env.extra, gen.out + [B.op("end")], name=name)
        self.export("$" + name, fid)
        return CallRef(name, tuple(tokens))

    def alloc_function(self, td: TypedDirective) -> CallRef:
        region: DirectiveRegion = self.layout.regions[td.index]
        code = [B.i32_const(region.size), B.local_get(0), B.local_get(1),
                B.i32_const(td.index), B.call(self.linked[RT].func("rt_region")),
                B.local_set(2)]
        for off, data in region.inits:
            data = data + b"\0" * (-len(data) % 4)
            for k in range(0, len(data), 4):
                word = int.from_bytes(data[k:k + 4], "little")
                if word:
                    code += [B.local_get(2), B.i32_const(word),
                             B.mem("i32.store", off + k, self.rt_mem)]
        code.append(B.local_get(2))
        name = f"alloc{td.index}"
        fid = self.builder.add_function(FuncType((I32, I32), (I32,)), [I32], code, name=name)
        self.export("$" + name, fid)
        return CallRef(name, ("fid", "pc"))

    def probe_function(self, p: ProbePlan, alloc_ref: Optional[CallRef]):
        td = p.directive
        bounds = td.rule.bounds
        frame_vars = self.ts.frame_vars() if p.frame else []
        params: list[Param] = []
        types: list[str] = []
        if alloc_ref is not None:
            params.append(alloc_ref)
            types.append(I32)
        for t in p.tokens:
            params.append(t)
            types.append(token_type(t, p.opcode, bounds))
        index = {t: i + (alloc_ref is not None) for i, t in enumerate(p.tokens)}
        frame_locals = {}
        if frame_vars:
            params.append("frame")
            for v in frame_vars:
                frame_locals[v.key] = len(types)
                types.append(A.wasm_type(v.ty))
        results = tuple(A.wasm_type(v.ty) for v in frame_vars)
        env = MonitorEnv(self, p.opcode, index, 0 if alloc_ref is not None else None,
                         frame_locals, len(types))
        code = ProbeCodegen(env).probe(p.guard, p.body)
        code += [B.local_get(frame_locals[v.key]) for v in frame_vars] + [B.op("end")]
        fid = self.builder.add_function(FuncType(tuple(types), results), env.extra, code,
                                        name=f"probe{td.index}.{p.opcode}")

        pred = None
        if p.static_cond is not None:
            static_tokens = _tokens_for([p.static_cond], p.opcode)
            pred = self.pred_function(p.static_cond, static_tokens, p.opcode, bounds)
        binding = MatchBinding("opcode", p.opcode, pred, tuple(params))
        name = encode_export_name(binding)
        if name in self.names:
            # a distinct, always-true predicate keeps export names unique
            pred = self.pred_function(p.static_cond, _tokens_for([p.static_cond], p.opcode)
                                      if p.static_cond is not None else [], p.opcode, bounds)
            binding = MatchBinding("opcode", p.opcode, pred, tuple(params))
            name = encode_export_name(binding)
        self.export(name, fid)


def emit_monitor(ts: TypedScript, libs: Optional[dict] = None) -> ModuleIR:
    """Build the monitor module for ``ts``; it references no application."""
    libs = dict(libs or {})
    missing = [u for u in ts.uses if u not in libs]
    if missing:
        raise LinkError(f"library {missing[0]!r} was not supplied")
    plans = plan_probes(ts)
    em = _Emitter(ts, libs)
    strings = set(ts.strings)
    needs_rt = ts.needs_runtime() or bool(strings)
    to_link = ({RT: bundled("rt")} if needs_rt else {}) | {u: libs[u] for u in ts.uses}
    em.linked = link_all(em.builder, to_link)
    for lf in ts.lib_funcs.values():
        em.linked[lf.lib].func(lf.name)
    if needs_rt:
        rt = em.linked[RT]
        em.rt_mem = rt.memory
        lay = layout_script(ts, rt.heap_base)
        lay.place_descriptors(ts)
        em.layout = lay
        em.builder.add_data(rt.memory, lay.base, bytes(lay.buf))
        m = em.builder.m
        k = rt.memory - len(m.imported("memory"))
        lim = m.memories[k]
        m.memories[k] = Limits(max(lim.min, -(-lay.end // PAGE_SIZE)), lim.max)
        start = em.builder.add_function(
            FuncType(), [], [B.i32_const(lay.end), B.i32_const(0), B.i32_const(0),
                             B.call(rt.func("rt_init"))], name="whamm.start")
        m.start = start

    allocs: dict[int, CallRef] = {}
    for p in plans:
        ref = None
        if p.alloc:
            if p.directive.index not in allocs:
                allocs[p.directive.index] = em.alloc_function(p.directive)
            ref = allocs[p.directive.index]
        em.probe_function(p, ref)

    if needs_rt and ts.report_vars():
        lay = em.layout
        fid = em.builder.add_function(
            FuncType(), [], [B.i32_const(lay.desc_table), B.i32_const(lay.desc_count),
                             B.call(em.linked[RT].func("rt_flush"))], name="whamm.exit")
        em.export(EXIT_EXPORT, fid)
    return em.builder.apply()
