"""Rewriting target: compile a checked script directly into an application.

Pipeline: match every directive against the application's sites, fold the
predicate and body with each site's static values, lay out monitor state
in the runtime's memory (a separate memory appended to the application),
splice probes in with :class:`~whamm.seal.Seal`, and wrap the entry export
so the report is flushed when it returns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from . import match as M
from .codegen import CodeEnv, ProbeCodegen, fold_block
from .errors import CheckError, LinkError
from .lang import ast as A
from .lang.typecheck import LibFunc, TypedDirective, TypedScript, VarInfo
from .link import bundled, link_all
from .opt import split_predicate
from .seal import Decorator, Seal
from .storage import StaticLayout, layout_script
from .wasm import build as B
from .wasm.opcodes import OPS, category_id
from .wasm.types import PAGE_SIZE, FunctionIR, FuncType, Instr, Limits, ModuleIR, Site
from .wasm.validate import validate

RT = "__rt"
REPORT_MEMORY_EXPORT = "whamm_memory"
DEFAULT_ENTRIES = ("_start", "main")


# matching ---------------------------------------------------------------------


@dataclass
class Placement:
    """One probe to inject: a directive at a site (or function) in one mode."""

    directive: TypedDirective
    fid: int  # original function index
    pc: int  # instruction index; entry -> 0, exit -> index of the final end
    mode: str
    site: Optional[Site]
    guard: Optional[A.Expr]  # None when the residual is literally true
    body: list

    @property
    def region_key(self) -> tuple:
        return (self.directive.index, self.fid, self.pc)


def static_env(app: ModuleIR, site: Site) -> dict:
    env = {"pc": site.pc, "fid": site.fid, "category_id": category_id(site.opcode)}
    for i, v in enumerate(site.immediates):
        env[f"imm{i}"] = v
    if site.opcode == "call":
        env["target_fn_name"] = app.func_name(site.immediates[0])
    elif site.opcode == "call_indirect":
        env["target_fn_name"] = "indirect"
    return env


def _split(td: TypedDirective):
    return split_predicate(td.predicate) if td.predicate is not None else None


def _residual(split, env: dict) -> A.Expr:
    if split is None:
        return A.BoolLit(True)
    return split.residual_for(env)


def _needed_args(td: TypedDirective, site: Site, trees) -> list[int]:
    names = [n for n in M.collect_params(trees) if not M.is_static(n)]
    needed: set[int] = set()
    for n in names:
        needed.update(M.args_needed(M.derive(site, n)))
    return sorted(needed)


def match_sites(app: ModuleIR, ts: TypedScript) -> list[Placement]:
    """All placements whose static residual is not ``false``, in a fixed order."""
    out: list[Placement] = []
    for td in ts.directives:
        split = _split(td)
        if td.is_func:
            out += _match_funcs(app, td, split)
            continue
        for f in app.funcs:
            local_types = f.local_types
            last = len(f.body) - 1
            for site in f.sites:
                for mode in td.modes:
                    if M.rule_matches(td.rule, site, local_types, mode) is not M.MatchOutcome.MATCH:
                        continue
                    if mode == "after" and site.pc == last:
                        continue  # nothing runs after the function's final end
                    env = static_env(app, site)
                    residual = _residual(split, env)
                    if isinstance(residual, A.BoolLit) and not residual.value:
                        continue
                    body = fold_block(td.body, env)
                    need = _needed_args(td, site, [residual, body])
                    if mode == "alt":
                        need = list(range(len(site.stack_in)))
                    if any(n >= len(site.stack_in) or site.stack_in[n] is None for n in need):
                        continue  # unreachable code: operand types are unknown
                    guard = None if isinstance(residual, A.BoolLit) else residual
                    out.append(Placement(td, site.fid, site.pc, mode, site, guard, body))
    return out


def _match_funcs(app: ModuleIR, td: TypedDirective, split) -> list[Placement]:
    out = []
    for f in app.funcs:
        if not M.pattern_matches(td.rule.event, app.func_name(f.fid)):
            continue
        if not M.bounds_hold(td.rule.bounds, Site(f.fid, 0, "nop", ()), f.local_types):
            continue
        env = {"fid": f.fid}
        residual = _residual(split, env)
        if isinstance(residual, A.BoolLit) and not residual.value:
            continue
        body = fold_block(td.body, env)
        guard = None if isinstance(residual, A.BoolLit) else residual
        for mode in td.modes:
            pc = 0 if mode == "entry" else len(f.body) - 1
            out.append(Placement(td, f.fid, pc, mode, None, guard, body))
    return out


def _strings_in(trees) -> set:
    found = set()

    def visit(node):
        if isinstance(node, A.StrLit):
            found.add(node.value)
        elif isinstance(node, list):
            for x in node:
                visit(x)
        elif hasattr(node, "__dataclass_fields__"):
            for name in node.__dataclass_fields__:
                if name not in ("ty", "ref", "info"):
                    visit(getattr(node, name))

    visit(list(trees))
    return found


# code environment --------------------------------------------------------------


class _Locals:
    """Appended locals of application functions, keyed for reuse."""

    def __init__(self, builder: Seal, shift: int):
        self.builder = builder
        self.shift = shift
        self.slots: dict = {}

    def get(self, fid: int, key, valtype: str) -> int:
        k = (fid, key, valtype)
        if k not in self.slots:
            self.slots[k] = self.builder.add_local(fid + self.shift, valtype).index
        return self.slots[k]


class RewriteEnv(CodeEnv):
    def __init__(self, ctx: "_Context", p: Placement, saved: dict):
        self.ctx = ctx
        self.p = p
        self.saved = saved
        self.rt_mem = ctx.rt_mem
        self.ntemps: dict = {}

    def load_bound(self, name, ty):
        p = self.p
        kind, n = M.split_indexed(name)
        if p.site is None:  # function entry/exit
            if kind == "local":
                return [B.local_get(n)]
            if kind == "fid":
                return [B.i32_const(p.fid)]
            raise CheckError(f"{name!r} is not available at function {p.mode}")
        r = M.derive(p.site, name).recipe
        w = A.wasm_type(ty)
        if r[0] == "arg":
            return [B.local_get(self.saved[r[1]])]
        if r[0] == "local":
            return [B.local_get(r[1])]
        if r[0] == "imm":
            return [B.const(w, p.site.immediates[r[1]])]
        if r[0] == "const":
            return [B.const(w, int(r[1]))]
        if r[0] == "addr_plus":
            return [B.local_get(self.saved[r[1]]), B.op("i64.extend_i32_u"),
                    B.i64_const(r[2]), B.op("i64.add")]
        if r[0] == "ne0":
            return [B.local_get(self.saved[r[1]]), B.i32_const(0), B.op("i32.ne")]
        if r[0] == "mem_oob":
            _, a, off, size, memidx = r
            return [B.local_get(self.saved[a]), B.op("i64.extend_i32_u"), B.i64_const(off + size),
                    B.op("i64.add"), B.op("memory.size", memidx), B.op("i64.extend_i32_u"),
                    B.i64_const(16), B.op("i64.shl"), B.op("i64.gt_u")]
        if r[0] == "div_trap":
            _, signed, width = r
            t = f"i{width}"
            code = [B.local_get(self.saved[0]), B.op(f"{t}.eqz")]
            if signed:
                code += [B.local_get(self.saved[0]), B.const(t, -1), B.op(f"{t}.eq"),
                         B.local_get(self.saved[1]), B.const(t, -(1 << (width - 1))),
                         B.op(f"{t}.eq"), B.op("i32.and"), B.op("i32.or")]
            return code
        if r[0] == "target_fn_name":
            return [B.i32_const(self.ctx.layout.string(static_env(self.ctx.app, p.site)
                                                       ["target_fn_name"]))]
        raise CheckError(f"cannot load {name!r}")

    def var_address(self, info: VarInfo):
        lay = self.ctx.layout
        if info.storage == "unshared":
            region = self.ctx.regions[self.p.region_key]
            return [B.i32_const(region + lay.regions[info.directive].offsets[info.name])], 0
        return [B.i32_const(lay.vars[info.key])], 0

    def var_local(self, info: VarInfo) -> int:
        return self.ctx.locals.get(self.p.fid, ("var", info.key), A.wasm_type(info.ty))

    def temp(self, valtype):
        k = self.ntemps.get(valtype, 0)
        self.ntemps[valtype] = k + 1
        return self.ctx.locals.get(self.p.fid, ("tmp", k), valtype)

    def lib_func(self, lf: LibFunc) -> int:
        return self.ctx.linked[lf.lib].func(lf.name)

    def rt_func(self, name):
        return self.ctx.linked[RT].func(name)

    def string_ptr(self, s):
        return self.ctx.layout.string(s)


@dataclass
class _Context:
    app: ModuleIR
    builder: Seal
    linked: dict
    rt_mem: int = -1
    layout: Optional[StaticLayout] = None
    regions: dict = field(default_factory=dict)
    locals: Optional[_Locals] = None
    shift: int = 0


# probe emission ---------------------------------------------------------------


def site_results(m: ModuleIR, f: FunctionIR, site: Site) -> tuple:
    """Result types of the instruction at ``site``."""
    op = site.opcode
    info = OPS[op]
    if info.sig is not None:
        return tuple(info.sig[1])
    if op == "call":
        return tuple(m.func_type(site.immediates[0]).results)
    if op == "call_indirect":
        return tuple(m.types[site.immediates[0]].results)
    if op == "select":
        return (site.stack_in[1],)
    if op == "local.get":
        return (f.local_types[site.immediates[0]],)
    if op == "local.tee":
        return (site.stack_in[0],)
    if op == "global.get":
        return (m.all_globals()[site.immediates[0]][0],)
    return ()


def _shift_labels(ins: Instr) -> Instr:
    """The original instruction moved one block deeper (into an else arm)."""
    if ins.op in ("br", "br_if"):
        return Instr(ins.op, (ins.imm[0] + 1,))
    if ins.op == "br_table":
        labels, default = ins.imm
        return Instr(ins.op, (tuple(x + 1 for x in labels), default + 1))
    return ins


def emit_probe(ctx: _Context, p: Placement) -> list[Decorator]:
    """Decorators realizing one placement (prologue, guarded body, epilogue)."""
    td = p.directive
    order = td.index
    fid_now = p.fid + ctx.shift
    if p.site is None:
        env = RewriteEnv(ctx, p, {})
        code = ProbeCodegen(env).probe(p.guard, p.body)
        return [Decorator(fid_now, p.mode, tuple(code), order)]

    site = p.site
    f = ctx.app.func(site.fid)
    trees = [p.guard, p.body]
    if p.mode == "alt":
        n_save = len(site.stack_in)
    else:
        need = _needed_args(td, site, trees)
        n_save = max(need) + 1 if need else 0
    saved = {n: ctx.locals.get(site.fid, ("arg", td.index, p.mode, n), site.stack_in[n])
             for n in range(n_save)}
    save = [B.local_set(saved[n]) for n in range(n_save)]
    restore = [B.local_get(saved[n]) for n in reversed(range(n_save))]
    env = RewriteEnv(ctx, p, saved)
    target = (fid_now, site.pc)

    if p.mode == "before":
        code = save + ProbeCodegen(env).probe(p.guard, p.body) + restore
        return [Decorator(target, "before", tuple(code), order)]
    if p.mode == "after":
        body = ProbeCodegen(env).probe(p.guard, p.body)
        return [Decorator(target, "before", tuple(save + restore), order),
                Decorator(target, "after", tuple(body), order)]

    # alt: the body replaces the instruction, the original runs when the guard fails
    results = site_results(ctx.app, f, site)
    if len(results) > 1:
        raise CheckError(f"alt probes cannot replace {site.opcode} with several results")
    result_local = None
    if results:
        result_local = ctx.locals.get(site.fid, ("alt-result", td.index), results[0])
        _check_alt_return(p.body, results[0], site)
    gen = ProbeCodegen(env, result_local)
    init = [B.const(results[0], 0), B.local_set(result_local)] if results else []
    body = gen.probe(None, p.body)
    push = [B.local_get(result_local)] if results else []
    original = f.body[site.pc]
    if p.guard is None:
        code = save + init + body + push
    else:
        guard_gen = ProbeCodegen(env)
        guard_gen.expr(p.guard)
        bt = results[0] if results else None
        code = (save + guard_gen.out + [B.op("if", bt)] + init + body + push +
                [B.op("else")] + restore + [_shift_labels(original), B.op("end")])
    return [Decorator(target, "alternate", tuple(code), order)]


def _check_alt_return(stmts, valtype: str, site: Site):
    for s in stmts:
        if isinstance(s, A.Return) and s.value is not None:
            if A.wasm_type(s.value.ty) != valtype:
                raise CheckError(f"alt probe returns {s.value.ty} but {site.opcode} at "
                                 f"func {site.fid} pc {site.pc} produces {valtype}",
                                 s.line, s.col)
        elif isinstance(s, A.If):
            _check_alt_return(s.then, valtype, site)
            _check_alt_return(s.orelse, valtype, site)


# flush ------------------------------------------------------------------------


def emit_flush(ctx: _Context) -> list[Instr]:
    """Code writing every report row through the runtime."""
    lay = ctx.layout
    return [B.i32_const(lay.desc_table), B.i32_const(lay.desc_count),
            B.call(ctx.linked[RT].func("rt_flush"))]


def _pick_entry(m: ModuleIR, entry: Optional[str]) -> Optional[str]:
    if entry is not None:
        if entry not in m.exports or m.exports[entry][0] != "func":
            raise LinkError(f"entry export {entry!r} not found")
        return entry
    for name in DEFAULT_ENTRIES:
        if name in m.exports and m.exports[name][0] == "func":
            return name
    return None


def _wrap_entry(ctx: _Context, entry: str, flush: list):
    m = ctx.builder.m
    target = m.exports[entry][1]
    sig = m.func_type(target)
    body = [B.local_get(i) for i in range(len(sig.params))] + [B.call(target)] + flush
    wrapper = ctx.builder.add_function(sig, [], body, name=f"{m.func_name(target)}.flush")
    m.exports[entry] = ("func", wrapper)


# driver -------------------------------------------------------------------------


def _needs_runtime(ts: TypedScript, strings: set) -> bool:
    return ts.needs_runtime() or bool(strings)


def instrument(app: ModuleIR, ts: TypedScript, libs: Optional[dict] = None,
               entry: Optional[str] = None) -> ModuleIR:
    """Return a validated copy of ``app`` with ``ts`` compiled into it."""
    libs = dict(libs or {})
    app = validate(app.copy())
    placements = match_sites(app, ts)
    strings = _strings_in([p.body for p in placements] + [p.guard for p in placements])
    code_strings = set(strings)
    for d in ts.directives:
        code_strings |= _strings_in([d.body])
    needs_rt = _needs_runtime(ts, code_strings)
    used = {name: libs[name] for name in ts.uses if name in libs}
    missing = [u for u in ts.uses if u not in libs]
    if missing:
        raise LinkError(f"library {missing[0]!r} was not supplied")
    if not placements and not needs_rt:
        return app

    builder = Seal(app)
    to_link = ({RT: bundled("rt")} if needs_rt else {}) | used
    n_imports = app.num_imported_funcs
    linked = link_all(builder, to_link)
    for lf in ts.lib_funcs.values():
        linked[lf.lib].func(lf.name)  # LinkError when missing
    ctx = _Context(app, builder, linked)
    ctx.shift = builder.m.num_imported_funcs - n_imports
    ctx.locals = _Locals(builder, ctx.shift)

    if needs_rt:
        rt = linked[RT]
        ctx.rt_mem = rt.memory
        lay = layout_script(ts, rt.heap_base, extra_strings=strings)
        regions = []
        for p in placements:
            if p.directive.index in lay.regions and p.region_key not in ctx.regions:
                addr = lay.place_region(lay.regions[p.directive.index], p.fid, p.pc)
                ctx.regions[p.region_key] = addr
                regions.append(addr)
        head, tail = lay.chain(regions)
        lay.place_descriptors(ts)
        ctx.layout = lay
        builder.add_data(rt.memory, lay.base, bytes(lay.buf))
        _grow_memory(builder.m, rt.memory, lay.end)
        _add_start(builder, [B.i32_const(lay.end), B.i32_const(head), B.i32_const(tail),
                             B.call(rt.func("rt_init"))])
        builder.add_export(REPORT_MEMORY_EXPORT, "memory", rt.memory)

    for p in placements:
        for d in emit_probe(ctx, p):
            builder.attach(d)

    if needs_rt and ts.report_vars():
        name = _pick_entry(builder.m, entry)
        if name is None:
            raise LinkError("no entry export to attach the report flush to "
                            f"(tried {', '.join(DEFAULT_ENTRIES)}; use --entry)")
        _wrap_entry(ctx, name, emit_flush(ctx))
    return builder.apply()


def _grow_memory(m: ModuleIR, memidx: int, end: int):
    k = memidx - len(m.imported("memory"))
    lim = m.memories[k]
    pages = max(lim.min, math.ceil(end / PAGE_SIZE))
    if lim.max is not None and pages > lim.max:
        raise LinkError("monitor state does not fit in the runtime memory")
    m.memories[k] = Limits(pages, lim.max)


def _add_start(builder: Seal, code: list):
    m = builder.m
    if m.start is not None:
        code = code + [B.call(m.start)]
    m.start = builder.add_function(FuncType(), [], code, name="whamm.start")
