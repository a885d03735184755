"""Canonical pretty-printer; ``parse_script(print_script(s)) == s``."""

from __future__ import annotations

from . import ast as A
from .parser import LEVELS

_PREC = {op: i for i, ops in enumerate(LEVELS) for op in ops}
_STORAGE_ORDER = ("report", "unshared", "shared", "frame")


def print_type(t) -> str:
    return str(t)


def _lit_float(v: float) -> str:
    text = repr(float(v))
    if "inf" in text or "nan" in text:
        raise ValueError(f"float literal {v} has no source form")
    if "." not in text and "e" not in text:
        text += ".0"
    return text


def _str_lit(s: str) -> str:
    body = s.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")
    body = body.replace("\t", "\\t").replace("\r", "\\r")
    return f'"{body}"'


def print_expr(e: A.Expr, in_pred: bool = False) -> str:
    """Render ``e``; binary operands are parenthesized conservatively."""
    if isinstance(e, A.IntLit):
        return str(e.value)
    if isinstance(e, A.FloatLit):
        return _lit_float(e.value)
    if isinstance(e, A.BoolLit):
        return "true" if e.value else "false"
    if isinstance(e, A.StrLit):
        return _str_lit(e.value)
    if isinstance(e, A.Var):
        return e.name
    if isinstance(e, A.MapGet):
        return f"{e.name}[{print_expr(e.key)}]"
    if isinstance(e, A.Call):
        args = ", ".join(print_expr(a) for a in e.args)
        return f"{e.lib}.{e.name}({args})" if e.lib else f"{e.name}({args})"
    if isinstance(e, A.Unary):
        return f"{e.op}{_operand(e.operand)}"
    if isinstance(e, A.Cast):
        return f"{_operand(e.operand)} as {e.target}"
    if isinstance(e, A.Binary):
        prec = _PREC[e.op]
        left = _side(e.left, prec, False)
        right = _side(e.right, prec, True)
        text = f"{left} {e.op} {right}"
        if in_pred and e.op == "/":
            return f"({text})"
        return text
    if isinstance(e, A.Ternary):
        return f"{_side(e.cond, -1, True)} ? {print_expr(e.then)} : {print_expr(e.orelse)}"
    if isinstance(e, A.TupleLit):
        if len(e.items) == 1:
            raise ValueError("one-element tuples have no source form")
        return "(" + ", ".join(print_expr(i) for i in e.items) + ")"
    raise TypeError(f"not an expression: {e!r}")


def _operand(e: A.Expr) -> str:
    if isinstance(e, (A.Binary, A.Ternary, A.Unary, A.Cast)):
        return f"({print_expr(e)})"
    if isinstance(e, (A.IntLit, A.FloatLit)) and e.value < 0:
        return f"({print_expr(e)})"
    return print_expr(e)


def _side(e: A.Expr, prec: int, right: bool) -> str:
    if isinstance(e, A.Ternary):
        return f"({print_expr(e)})"
    if isinstance(e, A.Binary):
        p = _PREC[e.op]
        if p < prec or (right and p == prec) or e.op == "/":
            return f"({print_expr(e)})"
    return print_expr(e)


def print_decl(d: A.Decl) -> str:
    words = [w for w in _STORAGE_ORDER if w in d.storage]
    text = " ".join(words + ["var", f"{d.name}:", print_type(d.ty)])
    if d.init is not None:
        text += f" = {print_expr(d.init)}"
    return text + ";"


def print_stmt(s, indent: int) -> list[str]:
    pad = "    " * indent
    if isinstance(s, A.Decl):
        return [pad + print_decl(s)]
    if isinstance(s, A.Assign):
        return [f"{pad}{print_expr(s.target)} = {print_expr(s.value)};"]
    if isinstance(s, A.Incr):
        return [f"{pad}{print_expr(s.target)}{'++' if s.delta > 0 else '--'};"]
    if isinstance(s, A.ExprStmt):
        return [f"{pad}{print_expr(s.expr)};"]
    if isinstance(s, A.Return):
        return [pad + ("return;" if s.value is None else f"return {print_expr(s.value)};")]
    if isinstance(s, A.If):
        return _print_if(s, indent, "if")
    raise TypeError(f"not a statement: {s!r}")


def _print_if(s: A.If, indent: int, word: str) -> list[str]:
    pad = "    " * indent
    lines = [f"{pad}{word} ({print_expr(s.cond)}) {{"]
    for st in s.then:
        lines += print_stmt(st, indent + 1)
    if len(s.orelse) == 1 and isinstance(s.orelse[0], A.If) and s.orelse[0].is_elif:
        nested = _print_if(s.orelse[0], indent, "elif")
        nested[0] = f"{pad}}} " + nested[0].lstrip()
        return lines + nested
    if s.orelse:
        lines.append(f"{pad}}} else {{")
        for st in s.orelse:
            lines += print_stmt(st, indent + 1)
    lines.append(f"{pad}}}")
    return lines


def print_rule(d: A.Directive) -> str:
    r = d.rule
    if d.bounds:
        b = ", ".join(f"{name}: {ty}" for name, ty in d.bounds)
        return f"{r.provider}:{r.package}:{r.event}({b}):{r.mode}"
    return str(r)


def print_directive(d: A.Directive) -> str:
    head = print_rule(d)
    if d.predicate is not None:
        head += f" / {print_expr(d.predicate, in_pred=True)} /"
    lines = [head + " {"]
    for st in d.body:
        lines += print_stmt(st, 1)
    lines.append("}")
    return "\n".join(lines)


def print_script(s: A.Script) -> str:
    parts = [f"use {u.name};" for u in s.uses]
    parts += [print_decl(d) for d in s.globals]
    parts += [print_directive(d) for d in s.directives]
    return "\n".join(parts) + "\n"
