"""Constant folding and static/dynamic predicate splitting.

Expressions here are checked trees (every node carries ``ty``).  The
reference evaluator :func:`evaluate` defines the integer and float
semantics that generated code must reproduce: integers wrap at their
declared width, signed division truncates toward zero and traps on a zero
divisor, float-to-int casts saturate.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import match as M
from .engine.numeric import f32_round, int_to_f32
from .errors import TooManyStaticAtoms
from .lang import ast as A

MAX_STATIC_ATOMS = 16


class DslTrap(Exception):
    def __init__(self, kind: str):
        super().__init__(kind)
        self.kind = kind


# value semantics -------------------------------------------------------------


def wrap(value: int, t: A.Prim) -> int:
    """Reduce an integer to the range of ``t``."""
    w = t.width
    value &= (1 << w) - 1
    if t.signed and value >> (w - 1):
        value -= 1 << w
    return value


def _shift_width(t: A.Prim) -> int:
    return 64 if t.width == 64 else 32


def _fround(x: float, t: A.Prim) -> float:
    return f32_round(x) if t.name == "f32" else x


def cast_value(v, src: A.Prim, dst: A.Prim):
    if dst == src:
        return v
    if dst == A.BOOL:
        return v != 0
    if src == A.BOOL:
        v = int(v)
        if dst.is_float:
            return float(v)
        return v
    if dst.is_int:
        if src.is_int:
            return wrap(v, dst)
        # saturating truncation into the 32- or 64-bit carrier, then wrap
        carrier = A.Prim(("i" if dst.signed else "u") + ("64" if dst.width == 64 else "32"))
        if math.isnan(v):
            return 0
        lo, hi = _range(carrier)
        t = lo if v <= lo else hi if v >= hi else math.trunc(v)
        return wrap(t, dst)
    # dst is float
    if src.is_int:
        if dst.name == "f32":
            return int_to_f32(v)
        return float(v)
    return _fround(v, dst)


def _range(t: A.Prim) -> tuple[int, int]:
    w = t.width
    if t.signed:
        return -(1 << (w - 1)), (1 << (w - 1)) - 1
    return 0, (1 << w) - 1


def _fdiv(a: float, b: float) -> float:
    if b == 0:
        if math.isnan(a) or a == 0:
            return math.nan
        return math.copysign(math.inf, a) * math.copysign(1, b)
    return a / b


def binary_value(op: str, t, a, b):
    """Apply a binary operator to two operands of type ``t`` (not ``&&``/``||``)."""
    if op == "==":
        return a == b
    if op == "!=":
        return a != b
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == ">":
        return a > b
    if op == ">=":
        return a >= b
    if t == A.BOOL:
        if op == "&":
            return a and b
        if op == "|":
            return a or b
        if op == "^":
            return a != b
        raise TypeError(op)
    if t.is_float:
        fn = {"+": lambda: a + b, "-": lambda: a - b, "*": lambda: a * b,
              "/": lambda: _fdiv(a, b)}[op]
        return _fround(fn(), t)
    if op in ("/", "%"):
        if b == 0:
            raise DslTrap("div-by-zero")
        q = abs(a) // abs(b)
        if (a < 0) != (b < 0):
            q = -q
        if op == "/":
            if t.width >= 32 and t.signed and q > _range(t)[1]:
                raise DslTrap("int-overflow")
            return wrap(q, t)
        return wrap(a - q * b, t)
    if op == "<<":
        return wrap(a << (b % _shift_width(t)), t)
    if op == ">>":
        return wrap(a >> (b % _shift_width(t)), t)
    fn = {"+": a + b, "-": a - b, "*": a * b, "&": a & b, "|": a | b, "^": a ^ b}
    return wrap(fn[op], t)


def unary_value(op: str, t, v):
    if op == "!":
        return not v
    return wrap(~v, t)


def literal(value, t, like=None) -> A.Expr:
    """Build a typed literal node holding ``value``."""
    line = getattr(like, "line", 0)
    col = getattr(like, "col", 0)
    if t == A.BOOL:
        node = A.BoolLit(bool(value), line, col)
    elif t == A.STR:
        node = A.StrLit(value, line, col)
    elif t.is_float:
        node = A.FloatLit(float(value), line, col)
    else:
        node = A.IntLit(int(value), line, col)
    node.ty = t
    return node


# evaluation -------------------------------------------------------------------


@dataclass
class EvalContext:
    env: dict = field(default_factory=dict)  # variable name -> value
    atoms: dict = field(default_factory=dict)  # id(node) -> forced value
    maps: dict = field(default_factory=dict)  # map name -> dict
    call: Optional[Callable] = None  # (lib, name, args) -> value


def evaluate(e: A.Expr, env: Optional[dict] = None, atoms: Optional[dict] = None,
             ctx: Optional[EvalContext] = None):
    """Reference semantics of a checked expression."""
    if ctx is None:
        ctx = EvalContext(env or {}, atoms or {})
    return _eval(e, ctx)


def _eval(e, ctx: EvalContext):
    if ctx.atoms and id(e) in ctx.atoms:
        return ctx.atoms[id(e)]
    if isinstance(e, (A.IntLit, A.BoolLit, A.StrLit)):
        return e.value
    if isinstance(e, A.FloatLit):
        return _fround(e.value, e.ty) if e.ty is not None else e.value
    if isinstance(e, A.Var):
        return ctx.env[e.name]
    if isinstance(e, A.MapGet):
        key = _eval(e.key, ctx)
        return ctx.maps.get(e.name, {}).get(key, _zero(e.ty))
    if isinstance(e, A.Call):
        args = [_eval(a, ctx) for a in e.args]
        if ctx.call is None:
            raise KeyError(f"no handler for call {e.lib}.{e.name}")
        return ctx.call(e.lib, e.name, args)
    if isinstance(e, A.Unary):
        return unary_value(e.op, e.ty, _eval(e.operand, ctx))
    if isinstance(e, A.Cast):
        return cast_value(_eval(e.operand, ctx), e.operand.ty, e.target)
    if isinstance(e, A.Binary):
        if e.op == "&&":
            return bool(_eval(e.left, ctx)) and bool(_eval(e.right, ctx))
        if e.op == "||":
            return bool(_eval(e.left, ctx)) or bool(_eval(e.right, ctx))
        a = _eval(e.left, ctx)
        b = _eval(e.right, ctx)
        return binary_value(e.op, e.left.ty, a, b)
    if isinstance(e, A.Ternary):
        return _eval(e.then, ctx) if _eval(e.cond, ctx) else _eval(e.orelse, ctx)
    if isinstance(e, A.AlwaysTrap):
        raise DslTrap(e.kind)
    raise TypeError(f"cannot evaluate {e!r}")


def _zero(t):
    if t == A.BOOL:
        return False
    if t == A.STR:
        return ""
    return 0.0 if t.is_float else 0


# folding ----------------------------------------------------------------------


def is_literal(e) -> bool:
    return isinstance(e, (A.IntLit, A.FloatLit, A.BoolLit, A.StrLit))


def is_safe(e) -> bool:
    """True when evaluating ``e`` can neither trap nor have side effects."""
    if isinstance(e, (A.Call, A.AlwaysTrap)):
        return False
    if isinstance(e, A.Binary) and e.op in ("/", "%") and e.ty.is_int:
        if not (isinstance(e.right, A.IntLit) and e.right.value not in (0, -1)):
            return False
    return all(is_safe(c) for c in children(e))


def children(e) -> list:
    if isinstance(e, A.Unary):
        return [e.operand]
    if isinstance(e, A.Cast):
        return [e.operand]
    if isinstance(e, A.Binary):
        return [e.left, e.right]
    if isinstance(e, A.Ternary):
        return [e.cond, e.then, e.orelse]
    if isinstance(e, A.MapGet):
        return [e.key]
    if isinstance(e, (A.Call, A.TupleLit)):
        return list(e.args if isinstance(e, A.Call) else e.items)
    return []


def _is_value(e, v) -> bool:
    return is_literal(e) and not isinstance(e, A.StrLit) and e.value == v and \
        type(e.value) is type(v)


def fold(e: A.Expr, env: Optional[dict] = None) -> A.Expr:
    """Substitute static variables from ``env`` and fold constant subtrees.

    The input is not modified.
    """
    env = env or {}
    return _fold(e, env)


def _fold(e, env):
    if isinstance(e, A.Var):
        if isinstance(e.ref, str) and e.name in env:
            return literal(env[e.name], e.ty, e)
        return e
    if is_literal(e) or isinstance(e, A.AlwaysTrap):
        return e
    if isinstance(e, A.MapGet):
        out = A.MapGet(e.name, _fold(e.key, env), e.line, e.col)
        out.ty, out.ref = e.ty, e.ref
        return out
    if isinstance(e, A.Call):
        out = A.Call(e.lib, e.name, [_fold(a, env) for a in e.args], e.line, e.col)
        out.ty, out.ref = e.ty, e.ref
        return out
    if isinstance(e, A.TupleLit):
        out = A.TupleLit([_fold(i, env) for i in e.items], e.line, e.col)
        out.ty = e.ty
        return out
    if isinstance(e, A.Unary):
        x = _fold(e.operand, env)
        if is_literal(x):
            return literal(unary_value(e.op, e.ty, x.value), e.ty, e)
        if e.op == "!" and isinstance(x, A.Unary) and x.op == "!":
            return x.operand
        return _typed(A.Unary(e.op, x, e.line, e.col), e.ty)
    if isinstance(e, A.Cast):
        x = _fold(e.operand, env)
        if is_literal(x):
            return literal(cast_value(_lit_value(x), x.ty, e.target), e.target, e)
        if x.ty == e.target:
            return x
        return _typed(A.Cast(x, e.target, e.line, e.col), e.ty)
    if isinstance(e, A.Ternary):
        c = _fold(e.cond, env)
        t = _fold(e.then, env)
        f = _fold(e.orelse, env)
        if isinstance(c, A.BoolLit):
            return t if c.value else f
        if t == f and is_safe(c) and _same_type(t, f):
            return t
        return _typed(A.Ternary(c, t, f, e.line, e.col), e.ty)
    if isinstance(e, A.Binary):
        return _fold_binary(e, env)
    raise TypeError(f"cannot fold {e!r}")


def _same_type(a, b) -> bool:
    return a.ty == b.ty


def _lit_value(x):
    if isinstance(x, A.FloatLit):
        return _fround(x.value, x.ty) if x.ty is not None else x.value
    return x.value


def _typed(node, ty):
    node.ty = ty
    return node


def _fold_binary(e: A.Binary, env):
    op = e.op
    left = _fold(e.left, env)
    if op in ("&&", "||"):
        if isinstance(left, A.BoolLit):
            # true && x -> x, false && x -> false, true || x -> true, false || x -> x
            if left.value == (op == "&&"):
                return _fold(e.right, env)
            return left
        right = _fold(e.right, env)
        if isinstance(right, A.BoolLit):
            if right.value == (op == "&&"):
                return left  # x && true, x || false
            if is_safe(left):
                return right  # x && false, x || true
        return _typed(A.Binary(op, left, right, e.line, e.col), A.BOOL)
    right = _fold(e.right, env)
    t = left.ty
    if is_literal(left) and is_literal(right):
        try:
            value = binary_value(op, t, _lit_value(left), _lit_value(right))
        except DslTrap as trap:
            return _typed(A.AlwaysTrap(trap.kind, e.line, e.col), e.ty)
        return literal(value, e.ty, e)
    if isinstance(t, A.Prim) and t.is_int:
        if op in ("/", "%") and isinstance(right, A.IntLit) and right.value == 0 and is_safe(left):
            return _typed(A.AlwaysTrap("div-by-zero", e.line, e.col), e.ty)
        if op in ("+", "|", "^", "-", "<<", ">>") and _is_value(right, 0):
            return left
        if op in ("+", "|", "^") and _is_value(left, 0):
            return right
        if op in ("*", "/") and _is_value(right, 1):
            return left
        if op == "*" and _is_value(left, 1):
            return right
        if op in ("*", "&") and (_is_value(right, 0) and is_safe(left)):
            return literal(0, t, e)
        if op in ("*", "&") and (_is_value(left, 0) and is_safe(right)):
            return literal(0, t, e)
    return _typed(A.Binary(op, left, right, e.line, e.col), e.ty)


# predicate splitting ---------------------------------------------------------


def is_static_var(v: A.Var) -> bool:
    return isinstance(v.ref, str) and M.is_static(v.name)


def is_static_expr(e) -> bool:
    """True when ``e`` depends only on static bound variables and literals."""
    if isinstance(e, A.Var):
        return is_static_var(e)
    if isinstance(e, (A.MapGet, A.Call, A.TupleLit, A.AlwaysTrap)):
        return False
    return all(is_static_expr(c) for c in children(e))


def static_atoms(e) -> list:
    """Maximal static boolean subtrees that mention at least one variable.

    Subtrees that may trap are not atoms: evaluating them eagerly at match
    time could trap where short-circuiting would have skipped them.
    """
    out: list = []

    def visit(node):
        if node.ty == A.BOOL and is_static_expr(node) and _mentions_var(node) and is_safe(node):
            if node not in out:
                out.append(node)
            return
        for c in children(node):
            visit(c)

    visit(e)
    return out


def _mentions_var(e) -> bool:
    if isinstance(e, A.Var):
        return True
    return any(_mentions_var(c) for c in children(e))


def dynamic_vars(e) -> list[str]:
    return [n for n in M.collect_params([e]) if not M.is_static(n)]


@dataclass
class SplitResult:
    """Outcome of splitting a predicate over its static atoms.

    ``residuals[row]`` is the folded predicate for one truth assignment to
    ``atoms`` (in order); ``groups`` merges rows whose residuals are equal.
    """

    original: A.Expr
    atoms: tuple
    residuals: dict
    groups: list  # [(residual, [rows...])]

    @property
    def fully_static(self) -> bool:
        return all(is_literal(r) for r in self.residuals.values())

    @property
    def fully_dynamic(self) -> bool:
        return not self.atoms

    def row_for(self, env: dict) -> tuple:
        return tuple(bool(evaluate(a, env)) for a in self.atoms)

    def residual_for(self, env: dict) -> A.Expr:
        """Residual at a site whose static variables are given by ``env``.

        Static values that feed dynamic comparisons are folded in as well.
        """
        return fold(self.residuals[self.row_for(env)], env)

    @property
    def static_expr(self) -> A.Expr:
        """Condition over the atoms under which the residual is not ``false``."""
        live = [rows for r, rows in self.groups if not (isinstance(r, A.BoolLit) and not r.value)]
        if not live:
            return literal(False, A.BOOL)
        if len(live) == len(self.groups):
            return literal(True, A.BOOL)
        return self.condition([row for rows in live for row in rows])

    def condition(self, rows) -> A.Expr:
        """Sum of products over the atoms that holds exactly for ``rows``."""
        if not rows:
            return literal(False, A.BOOL)
        terms = []
        for row in rows:
            term = None
            for atom, bit in zip(self.atoms, row):
                lit = atom if bit else _typed(A.Unary("!", atom), A.BOOL)
                term = lit if term is None else _typed(A.Binary("&&", term, lit), A.BOOL)
            terms.append(term if term is not None else literal(True, A.BOOL))
        out = terms[0]
        for t in terms[1:]:
            out = _typed(A.Binary("||", out, t), A.BOOL)
        return out


def substitute_atoms(e, values: list):
    """Replace atom subtrees (matched structurally) by boolean literals.

    ``values`` is a list of ``(atom, bool)`` pairs.
    """
    for atom, v in values:
        if e == atom:
            return literal(v, A.BOOL, e)
    if isinstance(e, A.Unary):
        return _typed(A.Unary(e.op, substitute_atoms(e.operand, values), e.line, e.col), e.ty)
    if isinstance(e, A.Cast):
        return _typed(A.Cast(substitute_atoms(e.operand, values), e.target, e.line, e.col), e.ty)
    if isinstance(e, A.Binary):
        return _typed(A.Binary(e.op, substitute_atoms(e.left, values),
                               substitute_atoms(e.right, values), e.line, e.col), e.ty)
    if isinstance(e, A.Ternary):
        return _typed(A.Ternary(substitute_atoms(e.cond, values), substitute_atoms(e.then, values),
                                substitute_atoms(e.orelse, values), e.line, e.col), e.ty)
    return e


def split_predicate(e: A.Expr) -> SplitResult:
    """Categorize, enumerate the truth table, fold each row, merge equal rows."""
    atoms = static_atoms(e)
    if len(atoms) > MAX_STATIC_ATOMS:
        raise TooManyStaticAtoms(len(atoms))
    residuals: dict = {}
    groups: list = []
    for row in itertools.product((True, False), repeat=len(atoms)):
        r = fold(substitute_atoms(e, list(zip(atoms, row))))
        residuals[row] = r
        for g in groups:
            if g[0] == r and g[0].ty == r.ty:
                g[1].append(row)
                break
        else:
            groups.append((r, [row]))
    return SplitResult(e, tuple(atoms), residuals, groups)


def classify(e: Optional[A.Expr]) -> str:
    """Coarse classification used by the monitor target: none, static or dynamic."""
    if e is None:
        return "none"
    return "static" if is_static_expr(e) else "dynamic"
