"""Lowering of checked probe code to WebAssembly instructions.

Both targets share this lowering.  What differs between them (where bound
variables come from, where persistent variables live, which locals are
available) is supplied by a :class:`CodeEnv`.
"""

from __future__ import annotations

from typing import Optional

from .errors import CheckError
from .lang import ast as A
from .lang.typecheck import LibFunc, VarInfo
from .opt import fold, is_literal
from .wasm import build as B
from .wasm.types import I32, Instr

_LOAD = {"i32": "i32.load", "i64": "i64.load", "f32": "f32.load", "f64": "f64.load"}
_STORE = {"i32": "i32.store", "i64": "i64.store", "f32": "f32.store", "f64": "f64.store"}


class CodeEnv:
    """Target-specific services used by :class:`ProbeCodegen`."""

    rt_mem: int = 0

    def load_bound(self, name: str, ty: A.Prim) -> list:
        raise NotImplementedError

    def var_address(self, info: VarInfo) -> tuple[list, int]:
        """Instructions pushing a base address, plus a constant offset."""
        raise NotImplementedError

    def var_local(self, info: VarInfo) -> int:
        raise NotImplementedError

    def temp(self, valtype: str) -> int:
        raise NotImplementedError

    def lib_func(self, lf: LibFunc) -> int:
        raise NotImplementedError

    def rt_func(self, name: str) -> int:
        raise NotImplementedError

    def string_ptr(self, s: str) -> int:
        raise NotImplementedError


def vt(t) -> str:
    if isinstance(t, A.TupleT):
        raise CheckError("tuple values are not supported by code generation")
    return A.wasm_type(t)


def zero_const(t: A.Prim) -> Instr:
    return B.const(vt(t), 0.0 if t.is_float else 0)


def literal_instr(e, env: CodeEnv) -> Instr:
    t = e.ty
    if isinstance(e, A.StrLit):
        return B.i32_const(env.string_ptr(e.value))
    if isinstance(e, A.BoolLit):
        return B.i32_const(int(e.value))
    if t.is_float:
        return B.const(vt(t), float(e.value))
    return B.const(vt(t), int(e.value))


def normalize(t: A.Prim) -> list:
    """Re-establish the canonical widened form of a sub-32-bit integer."""
    return {"u8": [B.i32_const(0xFF), B.op("i32.and")],
            "u16": [B.i32_const(0xFFFF), B.op("i32.and")],
            "i8": [B.op("i32.extend8_s")],
            "i16": [B.op("i32.extend16_s")]}.get(t.name, [])


def cast(src: A.Prim, dst: A.Prim) -> list:
    if src == dst:
        return []
    s, d = vt(src), vt(dst)
    if dst == A.BOOL:
        return [B.const(s, 0.0 if src.is_float else 0), B.op(f"{s}.ne")]
    if src == A.BOOL:
        if d == "i64":
            return [B.op("i64.extend_i32_u")]
        if dst.is_float:
            return [B.op(f"{d}.convert_i32_u")]
        return []
    if dst.is_int and src.is_int:
        out = []
        if s == "i32" and d == "i64":
            out.append(B.op("i64.extend_i32_s" if src.signed else "i64.extend_i32_u"))
        elif s == "i64" and d == "i32":
            out.append(B.op("i32.wrap_i64"))
        return out + normalize(dst)
    if dst.is_int:
        sign = "s" if dst.signed else "u"
        return [B.op(f"{d}.trunc_sat_{s}_{sign}")] + normalize(dst)
    if src.is_int:
        sign = "s" if src.signed else "u"
        return [B.op(f"{d}.convert_{s}_{sign}")]
    return [B.op("f64.promote_f32" if d == "f64" else "f32.demote_f64")]


def encode_i64(t: A.Prim) -> list:
    """Convert a value of ``t`` to the 64-bit map cell encoding."""
    w = vt(t)
    if w == "i64":
        return []
    if w == "f64":
        return [B.op("i64.reinterpret_f64")]
    if w == "f32":
        return [B.op("i32.reinterpret_f32"), B.op("i64.extend_i32_u")]
    if t.is_int and t.signed:
        return [B.op("i64.extend_i32_s")]
    return [B.op("i64.extend_i32_u")]


def decode_i64(t: A.Prim) -> list:
    w = vt(t)
    if w == "i64":
        return []
    if w == "f64":
        return [B.op("f64.reinterpret_i64")]
    if w == "f32":
        return [B.op("i32.wrap_i64"), B.op("f32.reinterpret_i32")]
    return [B.op("i32.wrap_i64")]


_CMP = {"==": "eq", "!=": "ne", "<": "lt", "<=": "le", ">": "gt", ">=": "ge"}
_ARITH = {"+": "add", "-": "sub", "*": "mul", "&": "and", "|": "or", "^": "xor", "<<": "shl"}


def binary_op(op: str, t: A.Prim) -> list:
    w = vt(t)
    if op in _CMP:
        name = _CMP[op]
        if t.is_int and op not in ("==", "!="):
            name += "_s" if t.signed else "_u"
        return [B.op(f"{w}.{name}")]
    if t.is_float:
        name = {"+": "add", "-": "sub", "*": "mul", "/": "div"}[op]
        return [B.op(f"{w}.{name}")]
    if op in _ARITH:
        out = [B.op(f"{w}.{_ARITH[op]}")]
    elif op == "/":
        out = [B.op(f"{w}.div_{'s' if t.signed else 'u'}")]
    elif op == "%":
        out = [B.op(f"{w}.rem_{'s' if t.signed else 'u'}")]
    elif op == ">>":
        out = [B.op(f"{w}.shr_{'s' if t.signed else 'u'}")]
    else:
        raise CheckError(f"unsupported operator {op!r}")
    if t == A.BOOL:
        return out
    return out + normalize(t)


class ProbeCodegen:
    """Compiles one probe (optional guard plus body) for one location."""

    def __init__(self, env: CodeEnv, result_local: Optional[int] = None):
        self.env = env
        self.out: list[Instr] = []
        self.depth = 0  # enclosing labels inside the probe
        self.result_local = result_local

    def emit(self, *instrs):
        self.out.extend(instrs)

    # whole probe -----------------------------------------------------

    def probe(self, guard: Optional[A.Expr], body: list) -> list:
        """``block { if !guard: br 0; body }``; ``return`` leaves the block."""
        self.emit(B.op("block", None))
        self.depth = 1
        if guard is not None:
            self.expr(guard)
            self.emit(B.op("i32.eqz"), B.op("br_if", 0))
        self.block(body)
        self.emit(B.op("end"))
        self.depth = 0
        return self.out

    # statements -----------------------------------------------------

    def block(self, stmts: list):
        for s in stmts:
            self.stmt(s)

    def stmt(self, s):
        env = self.env
        if isinstance(s, A.Decl):
            info = s.info
            if info.storage == "local":
                if s.init is not None:
                    self.expr(s.init)
                else:
                    self.emit(zero_const(info.ty))
                self.emit(B.local_set(env.var_local(info)))
            return
        if isinstance(s, A.Assign):
            self.assign(s.target, lambda: self.expr(s.value))
            return
        if isinstance(s, A.Incr):
            self.incr(s.target, s.delta)
            return
        if isinstance(s, A.ExprStmt):
            self.expr(s.expr)
            n = len(s.expr.ref.sig.results) if isinstance(s.expr.ref, LibFunc) else 0
            self.emit(*[B.op("drop")] * n)
            return
        if isinstance(s, A.Return):
            if s.value is not None:
                self.expr(s.value)
                self.emit(B.local_set(self.result_local))
            self.emit(B.op("br", self.depth - 1))
            return
        if isinstance(s, A.If):
            self.expr(s.cond)
            self.emit(B.op("if", None))
            self.depth += 1
            self.block(s.then)
            if s.orelse:
                self.emit(B.op("else"))
                self.block(s.orelse)
            self.depth -= 1
            self.emit(B.op("end"))
            return
        raise TypeError(f"unknown statement {s!r}")

    def assign(self, target, value_fn):
        env = self.env
        if isinstance(target, A.MapGet):
            info = target.ref
            self.map_header(info)
            self.expr(target.key)
            self.emit(*encode_i64(info.ty.key))
            value_fn()
            self.emit(*encode_i64(info.ty.value), B.call(env.rt_func("rt_map_set")))
            return
        info = target.ref
        if info.storage in ("local", "frame"):
            value_fn()
            self.emit(B.local_set(env.var_local(info)))
            return
        base, offset = env.var_address(info)
        self.emit(*base)
        value_fn()
        w = vt(info.ty)
        self.emit(B.mem(_STORE[w], offset, env.rt_mem))

    def incr(self, target, delta: int):
        env = self.env
        t = target.ty
        one = B.const(vt(t), float(delta) if t.is_float else delta)
        op = [*binary_op("+", t)]
        if isinstance(target, A.MapGet):
            info = target.ref
            slot = env.temp(I32)
            self.map_header(info)
            self.expr(target.key)
            self.emit(*encode_i64(info.ty.key), B.call(env.rt_func("rt_map_slot")),
                      B.local_tee(slot), B.local_get(slot), B.mem("i64.load", 0, env.rt_mem),
                      *decode_i64(t), one, *op, *encode_i64(t),
                      B.mem("i64.store", 0, env.rt_mem))
            return
        self.assign(target, lambda: (self.expr(target), self.emit(one, *op)))

    def map_header(self, info: VarInfo):
        base, offset = self.env.var_address(info)
        self.emit(*base)
        if offset:
            self.emit(B.i32_const(offset), B.op("i32.add"))

    # expressions ----------------------------------------------------

    def expr(self, e):
        env = self.env
        if is_literal(e):
            self.emit(literal_instr(e, env))
            return
        if isinstance(e, A.AlwaysTrap):
            self.emit(B.op("unreachable"))
            return
        if isinstance(e, A.Var):
            info = e.ref
            if isinstance(info, str):
                self.emit(*env.load_bound(e.name, e.ty))
            elif info.storage in ("local", "frame"):
                self.emit(B.local_get(env.var_local(info)))
            else:
                base, offset = env.var_address(info)
                self.emit(*base, B.mem(_LOAD[vt(info.ty)], offset, env.rt_mem))
            return
        if isinstance(e, A.MapGet):
            info = e.ref
            self.map_header(info)
            self.expr(e.key)
            self.emit(*encode_i64(info.ty.key), B.call(env.rt_func("rt_map_get")),
                      *decode_i64(info.ty.value))
            return
        if isinstance(e, A.Call):
            for a in e.args:
                self.expr(a)
            self.emit(B.call(env.lib_func(e.ref)))
            return
        if isinstance(e, A.Unary):
            self.expr(e.operand)
            if e.op == "!":
                self.emit(B.op("i32.eqz"))
            else:
                w = vt(e.ty)
                self.emit(B.const(w, -1), B.op(f"{w}.xor"), *normalize(e.ty))
            return
        if isinstance(e, A.Cast):
            self.expr(e.operand)
            self.emit(*cast(e.operand.ty, e.target))
            return
        if isinstance(e, A.Binary):
            if e.op in ("&&", "||"):
                self.expr(e.left)
                self.emit(B.op("if", I32))
                self.depth += 1
                if e.op == "&&":
                    self.expr(e.right)
                    self.emit(B.op("else"), B.i32_const(0))
                else:
                    self.emit(B.i32_const(1), B.op("else"))
                    self.expr(e.right)
                self.depth -= 1
                self.emit(B.op("end"))
                return
            self.expr(e.left)
            self.expr(e.right)
            self.emit(*binary_op(e.op, e.left.ty))
            return
        if isinstance(e, A.Ternary):
            self.expr(e.cond)
            self.emit(B.op("if", vt(e.ty)))
            self.depth += 1
            self.expr(e.then)
            self.emit(B.op("else"))
            self.expr(e.orelse)
            self.depth -= 1
            self.emit(B.op("end"))
            return
        if isinstance(e, A.TupleLit):
            raise CheckError("tuple values are not supported by code generation", e.line, e.col)
        raise TypeError(f"unknown expression {e!r}")


# folding whole bodies --------------------------------------------------------


def fold_block(stmts: list, env: dict) -> list:
    """Fold every expression in a statement list under static ``env``."""
    out = []
    for s in stmts:
        out.extend(_fold_stmt(s, env))
    return out


def _fold_stmt(s, env) -> list:
    if isinstance(s, A.Decl):
        if s.init is None:
            return [s]
        d = A.Decl(s.name, s.ty, s.storage, fold(s.init, env), s.line, s.col)
        d.info = s.info
        return [d]
    if isinstance(s, A.Assign):
        return [A.Assign(_fold_target(s.target, env), fold(s.value, env), s.line, s.col)]
    if isinstance(s, A.Incr):
        return [A.Incr(_fold_target(s.target, env), s.delta, s.line, s.col)]
    if isinstance(s, A.ExprStmt):
        return [A.ExprStmt(fold(s.expr, env), s.line, s.col)]
    if isinstance(s, A.Return):
        return [A.Return(None if s.value is None else fold(s.value, env), s.line, s.col)]
    if isinstance(s, A.If):
        cond = fold(s.cond, env)
        then = fold_block(s.then, env)
        orelse = fold_block(s.orelse, env)
        if isinstance(cond, A.BoolLit):
            return then if cond.value else orelse
        return [A.If(cond, then, orelse, s.is_elif, s.line, s.col)]
    raise TypeError(f"unknown statement {s!r}")


def _fold_target(t, env):
    if isinstance(t, A.MapGet):
        out = A.MapGet(t.name, fold(t.key, env), t.line, t.col)
        out.ty, out.ref = t.ty, t.ref
        return out
    return t
