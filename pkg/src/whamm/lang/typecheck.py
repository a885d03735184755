"""Name resolution, storage-class rules and type checking.

The checker annotates the tree in place (on a copy): every expression gets
``ty``, every ``Var``/``MapGet`` gets ``ref`` (a :class:`VarInfo`, or the
bound-variable name as a string) and every ``Call`` gets its
:class:`LibFunc`.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Optional

from .. import match as M
from ..errors import (
    LinkError,
    AmbiguousType,
    CheckError,
    IllegalStorage,
    TypeMismatch,
    UnknownVar,
    UnsatisfiableBound,
    NotDerivableHere,
)
from ..wasm.types import FuncType, ModuleIR
from . import ast as A

STORAGES = ("global", "shared", "unshared", "local", "frame")


@dataclass
class VarInfo:
    name: str
    ty: object
    storage: str
    report: bool = False
    directive: Optional[int] = None  # None for script-level variables
    init: object = None  # constant initial value of persistent variables
    line: int = 0
    col: int = 0

    @property
    def key(self) -> str:
        scope = "g" if self.directive is None else f"d{self.directive}"
        return f"{scope}:{self.name}"

    @property
    def persistent(self) -> bool:
        return self.storage in ("global", "shared", "unshared")

    @property
    def is_map(self) -> bool:
        return isinstance(self.ty, A.MapT)

    @property
    def report_storage(self) -> str:
        """Label used in the report's ``storage`` column."""
        return self.storage


@dataclass(frozen=True)
class LibFunc:
    lib: str
    name: str
    sig: FuncType


@dataclass
class TypedDirective:
    index: int
    ast: A.Directive
    rule: M.MatchRule  # with the effective (explicit + inferred) type bounds
    explicit_bounds: dict
    modes: tuple
    opcodes: tuple  # opcodes the directive can match (empty for function events)
    is_func: bool
    vars: dict = field(default_factory=dict)  # probe-level declarations
    bound_types: dict = field(default_factory=dict)  # bound var -> DSL type
    has_return_value: bool = False

    @property
    def predicate(self):
        return self.ast.predicate

    @property
    def body(self):
        return self.ast.body

    def persistent_vars(self) -> list[VarInfo]:
        return [v for v in self.vars.values() if v.persistent]

    def unshared_vars(self) -> list[VarInfo]:
        return [v for v in self.vars.values() if v.storage == "unshared"]


@dataclass
class TypedScript:
    ast: A.Script
    globals: dict
    directives: list
    uses: list
    lib_funcs: dict
    strings: list  # sorted distinct string literals

    def all_vars(self) -> list[VarInfo]:
        out = list(self.globals.values())
        for d in self.directives:
            out += list(d.vars.values())
        return out

    def frame_vars(self) -> list[VarInfo]:
        """Frame variables in canonical order (script-level first)."""
        return [v for v in self.all_vars() if v.storage == "frame"]

    def report_vars(self) -> list[VarInfo]:
        return [v for v in self.all_vars() if v.report]

    def needs_runtime(self) -> bool:
        return any(v.persistent or v.report for v in self.all_vars())


def _is_lit(e) -> bool:
    return isinstance(e, (A.IntLit, A.FloatLit))


def _int_range(t: A.Prim) -> tuple[int, int]:
    w = t.width
    if t.signed:
        return -(1 << (w - 1)), (1 << (w - 1)) - 1
    return 0, (1 << w) - 1


def default_int_type(v: int) -> A.Prim:
    for name in ("i32", "u32", "i64", "u64"):
        lo, hi = _int_range(A.Prim(name))
        if lo <= v <= hi:
            return A.Prim(name)
    raise CheckError(f"integer literal {v} does not fit in 64 bits")


class Checker:
    def __init__(self, script: A.Script, libs: Optional[dict] = None):
        self.script = script
        self.libs = libs or {}
        self.globals: dict[str, VarInfo] = {}
        self.lib_funcs: dict = {}
        self.strings: set = set()
        self.uses: list = []
        # per-directive state
        self.td: Optional[TypedDirective] = None
        self.in_predicate = False

    # entry --------------------------------------------------------------

    def run(self) -> TypedScript:
        for u in self.script.uses:
            if u.name not in self.libs:
                raise LinkError(f"{u.line}:{u.col}: library {u.name!r} not found (pass it with --lib)")
            self.uses.append(u.name)
        for d in self.script.globals:
            self.declare_global(d)
        directives = [self.directive(i, d) for i, d in enumerate(self.script.directives)]
        return TypedScript(self.script, self.globals, directives, self.uses, self.lib_funcs,
                           sorted(self.strings))

    # declarations -------------------------------------------------------

    def _check_decl_type(self, d: A.Decl):
        t = d.ty
        if isinstance(t, A.MapT):
            if not (isinstance(t.key, A.Prim) and (t.key.is_int or t.key.name in ("bool", "str"))):
                raise TypeMismatch(f"map key of {d.name!r}", "an integer, bool or str type", t.key,
                                   d.line, d.col)
            if not isinstance(t.value, A.Prim):
                raise TypeMismatch(f"map value of {d.name!r}", "a primitive type", t.value,
                                   d.line, d.col)

    def _storage(self, d: A.Decl, probe: bool) -> tuple[str, bool]:
        words = set(d.storage)
        report = "report" in words
        if "shared" in words and "unshared" in words:
            raise IllegalStorage(d.name, "shared and unshared are mutually exclusive", d.line, d.col)
        if "frame" in words:
            if words & {"shared", "unshared"}:
                raise IllegalStorage(d.name, "frame excludes shared and unshared", d.line, d.col)
            if report:
                raise IllegalStorage(d.name, "frame variables cannot be reported", d.line, d.col)
            if isinstance(d.ty, A.MapT):
                raise IllegalStorage(d.name, "map variables cannot be frame", d.line, d.col)
            return "frame", False
        if not probe:
            if "unshared" in words:
                raise IllegalStorage(d.name, "unshared variables belong inside a probe", d.line, d.col)
            return "global", report
        if "shared" in words:
            return "shared", report
        if "unshared" in words or report:
            return "unshared", report
        if isinstance(d.ty, A.MapT):
            raise IllegalStorage(d.name, "map variables must be persistent (report, shared or "
                                 "unshared)", d.line, d.col)
        return "local", False

    def _const_init(self, d: A.Decl, info: VarInfo):
        if d.init is None:
            return
        if isinstance(d.ty, A.MapT):
            raise IllegalStorage(d.name, "maps cannot have initializers", d.line, d.col)
        self.expr(d.init, d.ty)
        self.expect_assignable(d.ty, d.init, f"initializer of {d.name!r}")
        if info.persistent or info.storage == "frame":
            e = d.init
            if isinstance(e, A.Cast):
                e = e.operand
            if not isinstance(e, (A.IntLit, A.FloatLit, A.BoolLit, A.StrLit)):
                raise CheckError(f"initializer of {info.storage} variable {d.name!r} must be a "
                                 "constant", d.line, d.col)
            if info.storage == "frame" and e.value not in (0, False):
                raise CheckError(f"frame variable {d.name!r} always starts at zero", d.line, d.col)
            info.init = e.value

    def declare_global(self, d: A.Decl):
        if d.name in self.globals or M.is_bound_name(d.name):
            raise CheckError(f"{d.name!r} is already defined", d.line, d.col)
        self._check_decl_type(d)
        storage, report = self._storage(d, probe=False)
        info = VarInfo(d.name, d.ty, storage, report, None, None, d.line, d.col)
        self.globals[d.name] = info
        d.info = info
        self._const_init(d, info)

    def declare_local(self, d: A.Decl):
        td = self.td
        if d.name in td.vars or d.name in self.globals or M.is_bound_name(d.name):
            raise CheckError(f"{d.name!r} is already defined", d.line, d.col)
        self._check_decl_type(d)
        storage, report = self._storage(d, probe=True)
        info = VarInfo(d.name, d.ty, storage, report, td.index, None, d.line, d.col)
        td.vars[d.name] = info
        d.info = info
        self._const_init(d, info)

    # directives ---------------------------------------------------------

    def directive(self, index: int, d: A.Directive) -> TypedDirective:
        explicit = {}
        for name, ty in d.bounds:
            kind, _ = M.split_indexed(name)
            if kind not in ("arg", "local"):
                raise CheckError(f"type bounds apply to argN and localN only, not {name!r}",
                                 d.line, d.col)
            if ty.name not in ("i32", "i64", "f32", "f64"):
                raise CheckError(f"type bound for {name!r} must be a wasm value type",
                                 d.line, d.col)
            explicit[name] = ty.name
        rule = M.MatchRule(d.rule.provider, d.rule.package, d.rule.event, d.rule.mode,
                           tuple(sorted(explicit.items())))
        try:
            rule.check()
        except CheckError as e:
            raise CheckError(str(e), d.line, d.col) from None
        modes = rule.modes()
        is_func = rule.is_func_rule()
        if is_func and "opcode" in rule.packages():
            raise CheckError("a rule cannot select both opcode and func events", d.line, d.col)
        opcodes: tuple = ()
        if not is_func:
            opcodes = tuple(op for op in rule.opcodes()
                            if any(M.mode_applies(m, op) for m in modes))
            if not opcodes:
                raise CheckError(f"rule {rule} matches no instruction", d.line, d.col)
            opcodes = self._filter_bounds(rule, opcodes, explicit, d)
        self.td = TypedDirective(index, d, rule, explicit, modes, opcodes, is_func)
        if d.predicate is not None:
            self.in_predicate = True
            t = self.expr(d.predicate)
            self.in_predicate = False
            if t != A.BOOL:
                raise TypeMismatch("predicate", "bool", t, d.line, d.col)
        self.block(d.body)
        td = self.td
        implicit = {name: td.bound_types[name].name for name in td.bound_types
                    if M.split_indexed(name)[0] in ("arg", "local")}
        implicit.update(explicit)
        td.rule = M.MatchRule(rule.provider, rule.package, rule.event, rule.mode,
                              tuple(sorted(implicit.items())))
        self.td = None
        return td

    def _filter_bounds(self, rule, opcodes, explicit, d) -> tuple:
        keep = []
        for op in opcodes:
            ok = True
            for name, ty in explicit.items():
                kind, n = M.split_indexed(name)
                if kind == "arg":
                    possible, fixed = M.arg_type(op, n)
                    if not possible or (fixed is not None and fixed != ty):
                        ok = False
            if ok:
                keep.append(op)
        if not keep:
            raise UnsatisfiableBound(str(rule), "|".join(opcodes), "", d.line, d.col)
        return tuple(keep)

    # statements ---------------------------------------------------------

    def block(self, stmts: list):
        for s in stmts:
            self.stmt(s)

    def stmt(self, s):
        if isinstance(s, A.Decl):
            self.declare_local(s)
            return
        if isinstance(s, A.Assign):
            t = self.lvalue(s.target)
            self.expr(s.value, t)
            self.expect_assignable(t, s.value, "assignment")
            return
        if isinstance(s, A.Incr):
            t = self.lvalue(s.target)
            if not (isinstance(t, A.Prim) and t.is_numeric):
                raise TypeMismatch("'++'/'--'", "a numeric type", t, s.line, s.col)
            return
        if isinstance(s, A.ExprStmt):
            self.expr(s.expr)
            return
        if isinstance(s, A.Return):
            td = self.td
            if s.value is not None:
                if td.is_func or set(td.modes) != {"alt"}:
                    raise CheckError("'return' with a value is only allowed in alt probes",
                                     s.line, s.col)
                t = self.expr(s.value)
                results = {_result_type(op) for op in td.opcodes}
                if len(results) == 1 and POLY not in results:
                    (rt,) = results
                    if rt is None:
                        raise CheckError("alt probe returns a value but the instruction "
                                         "produces none", s.line, s.col)
                    self.expr(s.value, A.Prim(rt))
                    self.expect_assignable(A.Prim(rt), s.value, "return value")
                elif not isinstance(t, A.Prim):
                    raise TypeMismatch("return value", "a primitive", t, s.line, s.col)
                td.has_return_value = True
            return
        if isinstance(s, A.If):
            t = self.expr(s.cond)
            if t != A.BOOL:
                raise TypeMismatch("if condition", "bool", t, s.line, s.col)
            self.block(s.then)
            self.block(s.orelse)
            return
        raise TypeError(f"unknown statement {s!r}")

    def lvalue(self, target):
        if isinstance(target, A.Var):
            info = self.lookup_var(target)
            if isinstance(info, str):
                raise CheckError(f"bound variable {target.name!r} is read-only",
                                 target.line, target.col)
            if info.is_map:
                raise TypeMismatch(f"assignment to {target.name!r}", "an indexed map element",
                                   info.ty, target.line, target.col)
            target.ty = info.ty
            return info.ty
        return self.expr(target)

    def expect_assignable(self, t, e, what):
        et = e.ty
        if et != t:
            raise TypeMismatch(what, t, et, getattr(e, "line", 0), getattr(e, "col", 0))

    # expressions --------------------------------------------------------

    def lookup_var(self, v):
        name = v.name
        if self.td is not None and name in self.td.vars:
            info = self.td.vars[name]
            if self.in_predicate:
                raise UnknownVar(name, v.line, v.col)
            v.ref = info
            return info
        if name in self.globals:
            v.ref = self.globals[name]
            return v.ref
        if M.is_bound_name(name) and self.td is not None:
            v.ref = name
            return name
        raise UnknownVar(name, v.line, v.col)

    def bound_type(self, v: A.Var):
        td = self.td
        name = v.name
        if name in td.bound_types:
            return td.bound_types[name]
        kind, n = M.split_indexed(name)
        if td.is_func:
            if not M.func_derivable(name):
                raise NotDerivableHere(name, "function entry/exit", v.line, v.col)
        else:
            for op in td.opcodes:
                if not M.derivable(name, op):
                    raise NotDerivableHere(name, op, v.line, v.col)
        if name in td.explicit_bounds:
            t = A.Prim(td.explicit_bounds[name])
        elif kind == "local":
            raise AmbiguousType(name, [], v.line, v.col)
        elif kind == "arg":
            types = {M.arg_type(op, n)[1] for op in td.opcodes}
            if len(types) != 1 or None in types:
                raise AmbiguousType(name, [t for t in types if t], v.line, v.col)
            t = A.Prim(types.pop())
        else:
            t = A.Prim(M.var_type(name))
        td.bound_types[name] = t
        return t

    def expr(self, e, expected=None):
        t = self._expr(e, expected)
        e.ty = t
        return t

    def _lit(self, e, expected):
        if isinstance(e, A.IntLit):
            if isinstance(expected, A.Prim) and expected.is_int:
                lo, hi = _int_range(expected)
                if not lo <= e.value <= hi:
                    raise TypeMismatch("integer literal", f"a value in {expected} range",
                                       e.value, e.line, e.col)
                return expected
            if isinstance(expected, A.Prim) and expected.is_float:
                return expected
            return default_int_type(e.value)
        if isinstance(expected, A.Prim) and expected.is_float:
            return expected
        return A.F64T

    def _pair(self, left, right):
        lt = None if _is_lit(left) else self.expr(left)
        rt = None if _is_lit(right) else self.expr(right)
        if lt is None and rt is None:
            if isinstance(left, A.FloatLit) or isinstance(right, A.FloatLit):
                lt = self.expr(left, A.F64T)
                rt = self.expr(right, A.F64T)
            else:
                lt = self.expr(left)
                rt = self.expr(right, lt)
                if rt != lt:
                    lt = self.expr(left, rt)
        elif lt is None:
            lt = self.expr(left, rt)
        elif rt is None:
            rt = self.expr(right, lt)
        return lt, rt

    def _expr(self, e, expected):
        if isinstance(e, (A.IntLit, A.FloatLit)):
            return self._lit(e, expected)
        if isinstance(e, A.BoolLit):
            return A.BOOL
        if isinstance(e, A.StrLit):
            self.strings.add(e.value)
            return A.STR
        if isinstance(e, A.Var):
            info = self.lookup_var(e)
            if isinstance(info, str):
                return self.bound_type(e)
            if info.is_map:
                raise TypeMismatch(f"use of map {e.name!r}", "an indexed element", info.ty,
                                   e.line, e.col)
            if isinstance(info.ty, A.TupleT):
                return info.ty
            return info.ty
        if isinstance(e, A.MapGet):
            info = self.lookup_var(e)
            if isinstance(info, str) or not info.is_map:
                raise TypeMismatch(f"indexing {e.name!r}", "a map", getattr(info, "ty", "bound var"),
                                   e.line, e.col)
            self.expr(e.key, info.ty.key)
            self.expect_assignable(info.ty.key, e.key, f"key of {e.name!r}")
            return info.ty.value
        if isinstance(e, A.Call):
            return self.call(e)
        if isinstance(e, A.Unary):
            t = self.expr(e.operand)
            if e.op == "!":
                if t != A.BOOL:
                    raise TypeMismatch("'!'", "bool", t, e.line, e.col)
                return A.BOOL
            if not (isinstance(t, A.Prim) and t.is_int):
                raise TypeMismatch("'~'", "an integer type", t, e.line, e.col)
            return t
        if isinstance(e, A.Cast):
            t = self.expr(e.operand)
            ok_src = isinstance(t, A.Prim) and (t.is_numeric or t == A.BOOL)
            ok_dst = e.target.is_numeric or e.target == A.BOOL
            if not (ok_src and ok_dst):
                raise TypeMismatch("cast", "numeric or bool", t, e.line, e.col)
            return e.target
        if isinstance(e, A.Binary):
            return self.binary(e)
        if isinstance(e, A.Ternary):
            c = self.expr(e.cond)
            if c != A.BOOL:
                raise TypeMismatch("ternary condition", "bool", c, e.line, e.col)
            lt, rt = self._pair(e.then, e.orelse)
            if lt != rt:
                raise TypeMismatch("ternary branches", lt, rt, e.line, e.col)
            return lt
        if isinstance(e, A.TupleLit):
            return A.TupleT(tuple(self.expr(i) for i in e.items))
        raise TypeError(f"unknown expression {e!r}")

    def binary(self, e: A.Binary):
        op = e.op
        if op in ("&&", "||"):
            for side in (e.left, e.right):
                t = self.expr(side)
                if t != A.BOOL:
                    raise TypeMismatch(f"'{op}'", "bool", t, side.line, side.col)
            return A.BOOL
        lt, rt = self._pair(e.left, e.right)
        if op in ("<<", ">>"):
            if not (isinstance(lt, A.Prim) and lt.is_int):
                raise TypeMismatch(f"'{op}'", "an integer type", lt, e.line, e.col)
            if rt != lt:
                if _is_lit(e.right):
                    rt = self.expr(e.right, lt)
                else:
                    raise TypeMismatch(f"'{op}'", lt, rt, e.line, e.col)
            return lt
        if lt != rt:
            raise TypeMismatch(f"'{op}'", lt, rt, e.line, e.col)
        if not isinstance(lt, A.Prim):
            raise TypeMismatch(f"'{op}'", "a primitive type", lt, e.line, e.col)
        if op in ("==", "!="):
            return A.BOOL
        if op in ("<", "<=", ">", ">="):
            if not lt.is_numeric:
                raise TypeMismatch(f"'{op}'", "a numeric type", lt, e.line, e.col)
            return A.BOOL
        if op in ("&", "|", "^"):
            if not (lt.is_int or lt == A.BOOL):
                raise TypeMismatch(f"'{op}'", "an integer or bool type", lt, e.line, e.col)
            return lt
        if op == "%":
            if not lt.is_int:
                raise TypeMismatch("'%'", "an integer type", lt, e.line, e.col)
            return lt
        if not lt.is_numeric:
            raise TypeMismatch(f"'{op}'", "a numeric type", lt, e.line, e.col)
        return lt

    def call(self, e: A.Call):
        if e.lib is None:
            raise UnknownVar(e.name, e.line, e.col)
        if e.lib not in self.uses:
            raise UnknownVar(f"{e.lib}.{e.name}", e.line, e.col)
        lib: ModuleIR = self.libs[e.lib]
        exp = lib.exports.get(e.name)
        if exp is None or exp[0] != "func":
            raise LinkError(f"{e.line}:{e.col}: library {e.lib!r} exports no function {e.name!r}")
        sig = lib.func_type(exp[1])
        if len(sig.params) != len(e.args):
            raise TypeMismatch(f"call to {e.lib}.{e.name}", f"{len(sig.params)} arguments",
                               len(e.args), e.line, e.col)
        for arg, pt in zip(e.args, sig.params):
            t = self.expr(arg, A.Prim(pt))
            if not isinstance(t, A.Prim) or t.name in ("str",) and pt != "i32" or \
                    A.wasm_type(t) != pt:
                raise TypeMismatch(f"argument of {e.lib}.{e.name}", pt, t, arg.line, arg.col)
        if len(sig.results) > 1:
            raise TypeMismatch(f"call to {e.lib}.{e.name}", "at most one result",
                               len(sig.results), e.line, e.col)
        lf = LibFunc(e.lib, e.name, sig)
        self.lib_funcs[(e.lib, e.name)] = lf
        e.ref = lf
        return A.Prim(sig.results[0]) if sig.results else A.TupleT(())


POLY = "poly"  # result type known only at the site


def _result_type(opcode: str) -> Optional[str]:
    from ..wasm.opcodes import OPS

    info = OPS[opcode]
    if info.sig is not None:
        outs = info.sig[1]
        return outs[0] if outs else None
    if opcode in ("call", "call_indirect", "select", "local.get", "local.tee", "global.get"):
        return POLY
    return None


def typecheck(ast: A.Script, catalog=None, libs: Optional[dict] = None) -> TypedScript:
    """Check a parsed script against the bound-variable catalog and libraries.

    ``libs`` maps library names (as used in ``use NAME;``) to their modules.
    ``catalog`` is accepted for interface symmetry; the catalog in
    :mod:`whamm.match` is always used.
    """
    return Checker(copy.deepcopy(ast), libs).run()
