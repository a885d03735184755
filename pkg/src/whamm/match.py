"""Match rules, the bound-variable catalog and derived-variable recipes."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

from .errors import CheckError, NotDerivableHere
from .wasm.opcodes import ALL_OPCODES, OPS, access_size, category_id, is_load, is_memory_access
from .wasm.types import I32, Site

PROVIDERS = ("wasm",)
PACKAGES = ("opcode", "func")
OPCODE_MODES = ("before", "after", "alt")
FUNC_MODES = ("entry", "exit")
MODES = OPCODE_MODES + FUNC_MODES

# structured-control instructions cannot be replaced by an alt probe
STRUCTURED = ("block", "loop", "if", "else", "end")


# patterns -------------------------------------------------------------------


@lru_cache(maxsize=None)
def compile_pattern(pattern: str) -> re.Pattern:
    """``*``-globs joined by ``|``; everything else is literal."""
    if not pattern:
        raise CheckError("empty pattern")
    alts = []
    for alt in pattern.split("|"):
        if not alt:
            raise CheckError(f"empty alternative in pattern {pattern!r}")
        alts.append(".*".join(re.escape(piece) for piece in alt.split("*")))
    return re.compile("(?:" + "|".join(alts) + r")\Z")


def pattern_matches(pattern: str, text: str) -> bool:
    return compile_pattern(pattern).match(text) is not None


def expand(pattern: str, universe) -> tuple[str, ...]:
    rx = compile_pattern(pattern)
    return tuple(x for x in universe if rx.match(x))


# rules ----------------------------------------------------------------------


@dataclass(frozen=True)
class MatchRule:
    provider: str
    package: str
    event: str
    mode: str
    type_bounds: tuple = ()  # ((var, valtype), ...)

    @classmethod
    def parse(cls, text: str, bounds: Optional[dict] = None) -> "MatchRule":
        parts = text.split(":")
        if len(parts) != 4:
            raise CheckError(f"match rule {text!r} must have four parts")
        return cls(*parts, tuple(sorted((bounds or {}).items())))

    def __str__(self):
        return f"{self.provider}:{self.package}:{self.event}:{self.mode}"

    @property
    def bounds(self) -> dict:
        return dict(self.type_bounds)

    def check(self):
        if not expand(self.provider, PROVIDERS):
            raise CheckError(f"unknown provider {self.provider!r}; valid providers: "
                             + ", ".join(PROVIDERS))
        if not self.packages():
            raise CheckError(f"unknown package {self.package!r}; valid packages: "
                             + ", ".join(PACKAGES))
        if not self.modes():
            raise CheckError(f"mode {self.mode!r} selects no mode valid for package "
                             f"{self.package!r}")

    def packages(self) -> tuple[str, ...]:
        return expand(self.package, PACKAGES)

    def modes(self) -> tuple[str, ...]:
        valid = ()
        for pkg in self.packages():
            valid += OPCODE_MODES if pkg == "opcode" else FUNC_MODES
        return tuple(m for m in expand(self.mode, MODES) if m in valid)

    def opcodes(self) -> tuple[str, ...]:
        if "opcode" not in self.packages():
            return ()
        return expand(self.event, ALL_OPCODES)

    def is_func_rule(self) -> bool:
        return "func" in self.packages()


class MatchOutcome(enum.Enum):
    MATCH = "Match"
    NO_MATCH = "NoMatch"
    TYPE_NO_MATCH = "TypeNoMatch"


def mode_applies(mode: str, opcode: str) -> bool:
    if mode == "after" and opcode == "unreachable":
        return False
    if mode == "alt" and opcode in STRUCTURED:
        return False
    return mode in OPCODE_MODES


def bounds_hold(bounds: dict, site: Site, local_types=None) -> bool:
    for var, ty in bounds.items():
        kind, n = split_indexed(var)
        if kind == "arg":
            if n >= len(site.stack_in) or site.stack_in[n] != ty:
                return False
        elif kind == "local":
            if local_types is None or n >= len(local_types) or local_types[n] != ty:
                return False
    return True


def rule_matches(rule: MatchRule, site: Site, local_types=None,
                 mode: Optional[str] = None) -> MatchOutcome:
    """Classify ``site`` against ``rule`` (for ``mode``, default: any of its modes)."""
    if "wasm" not in expand(rule.provider, PROVIDERS) or "opcode" not in rule.packages():
        return MatchOutcome.NO_MATCH
    if not pattern_matches(rule.event, site.opcode):
        return MatchOutcome.NO_MATCH
    modes = (mode,) if mode else rule.modes()
    if not any(mode_applies(m, site.opcode) for m in modes):
        return MatchOutcome.NO_MATCH
    if not bounds_hold(rule.bounds, site, local_types):
        return MatchOutcome.TYPE_NO_MATCH
    return MatchOutcome.MATCH


# bound-variable catalog ----------------------------------------------------


@dataclass(frozen=True)
class BoundVar:
    name: str
    kind: str  # argN immN localN pc fid target_fn_name addr effective_addr taken trap category_id
    static: bool
    ty: Optional[str]  # DSL type name; None when it depends on the site (needs a bound)


STATIC_KINDS = ("pc", "fid", "imm", "target_fn_name", "category_id")
DYNAMIC_KINDS = ("arg", "local", "addr", "effective_addr", "taken", "trap")

_INDEXED = re.compile(r"(arg|imm|local)(\d+)\Z")


def split_indexed(name: str) -> tuple[str, int]:
    m = _INDEXED.match(name)
    if m:
        return m.group(1), int(m.group(2))
    return name, -1


def arg_shape(opcode: str) -> tuple[tuple, bool]:
    """Operand types consumed, top of stack first, and whether more may follow.

    ``None`` entries are polymorphic (their type depends on the site).
    """
    info = OPS[opcode]
    if info.sig is not None:
        return tuple(reversed(info.sig[0])), False
    if opcode in ("local.set", "local.tee", "global.set", "drop"):
        return (None,), False
    if opcode == "select":
        return (I32, None, None), False
    if opcode in ("br_if", "br_table", "if", "call_indirect"):
        return (I32,), True
    if opcode in ("call", "block", "loop", "else", "end", "br", "return"):
        return (), True
    return (), False  # nop, unreachable, local.get, global.get


def arg_type(opcode: str, n: int) -> tuple[bool, Optional[str]]:
    """(possible, fixed type or None) for ``argN`` at ``opcode``."""
    fixed, variadic = arg_shape(opcode)
    if n < len(fixed):
        return True, fixed[n]
    return variadic, None


_IMM_COUNT = {"memarg": 3, "br_table": 1, "blocktype": 1, "label": 1, "func": 1,
              "call_indirect": 2, "local": 1, "global": 1, "i32": 1, "i64": 1, "f32": 1,
              "f64": 1, "memidx": 1, "none": 0}


def imm_count(opcode: str) -> int:
    return _IMM_COUNT[OPS[opcode].imm]


def is_divide(opcode: str) -> bool:
    return opcode[:4] in ("i32.", "i64.") and opcode[4:] in ("div_s", "div_u", "rem_s", "rem_u")


def derivable(var: str, opcode: str) -> bool:
    kind, n = split_indexed(var)
    if kind in ("pc", "fid", "category_id", "local"):
        return True
    if kind == "imm":
        return n < imm_count(opcode)
    if kind == "arg":
        return arg_type(opcode, n)[0]
    if kind == "target_fn_name":
        return opcode in ("call", "call_indirect")
    if kind in ("addr", "effective_addr"):
        return is_memory_access(opcode)
    if kind == "taken":
        return opcode in ("br_if", "br_table")
    if kind == "trap":
        return is_memory_access(opcode) or is_divide(opcode)
    return False


def is_bound_name(name: str) -> bool:
    kind, _ = split_indexed(name)
    return kind in STATIC_KINDS + DYNAMIC_KINDS


def is_static(name: str) -> bool:
    return split_indexed(name)[0] in STATIC_KINDS


def var_type(name: str, opcode: Optional[str] = None) -> Optional[str]:
    """DSL type of a bound variable, or None when a type bound is required."""
    kind, n = split_indexed(name)
    fixed = {"pc": "u32", "fid": "u32", "imm": "i64", "target_fn_name": "str",
             "category_id": "u32", "addr": "u32", "effective_addr": "u64", "taken": "bool",
             "trap": "bool"}
    if kind in fixed:
        return fixed[kind]
    if kind == "arg" and opcode is not None:
        return arg_type(opcode, n)[1]
    return None


def catalog(opcode: str, max_index: int = 3) -> list[BoundVar]:
    """Bound variables in scope at ``opcode`` (indexed families up to ``max_index``)."""
    out = [BoundVar("pc", "pc", True, "u32"), BoundVar("fid", "fid", True, "u32"),
           BoundVar("category_id", "category_id", True, "u32")]
    for i in range(imm_count(opcode)):
        out.append(BoundVar(f"imm{i}", "immN", True, "i64"))
    if derivable("target_fn_name", opcode):
        out.append(BoundVar("target_fn_name", "target_fn_name", True, "str"))
    fixed, variadic = arg_shape(opcode)
    for i in range(max(len(fixed), max_index if variadic else 0)):
        ty = fixed[i] if i < len(fixed) else None
        out.append(BoundVar(f"arg{i}", "argN", False, ty))
    out.append(BoundVar("localN", "localN", False, None))
    for name in ("addr", "effective_addr", "taken", "trap"):
        if derivable(name, opcode):
            out.append(BoundVar(name, name, False, var_type(name)))
    return out


FUNC_VARS = ("fid", "local")


def func_derivable(var: str) -> bool:
    return split_indexed(var)[0] in FUNC_VARS


# derived variables ----------------------------------------------------------


@dataclass(frozen=True)
class DerivedPlan:
    """How to compute a bound variable at a concrete opcode.

    ``recipe`` is a small tuple tree:

    * ``("arg", n)`` / ``("local", n)`` / ``("imm", n)``
    * ``("const", value)``
    * ``("addr_plus", n, offset)`` - u64 sum of ``argN`` and a static offset
    * ``("ne0", n)`` - ``argN != 0``
    * ``("mem_oob", n, offset, size, memidx)`` - out-of-bounds check
    * ``("div_trap", signed, width)`` - zero divisor (and signed overflow)
    """

    variable: str
    recipe: tuple


def derive(site: Site, var: str) -> DerivedPlan:
    op = site.opcode
    if not derivable(var, op):
        raise NotDerivableHere(var, op)
    kind, n = split_indexed(var)
    imms = site.immediates
    if kind in ("arg", "local", "imm"):
        return DerivedPlan(var, (kind, n))
    if kind in ("addr", "effective_addr", "trap") and is_memory_access(op):
        a = 0 if is_load(op) else 1
        offset, _, memidx = imms
        if kind == "addr":
            return DerivedPlan(var, ("arg", a))
        if kind == "effective_addr":
            return DerivedPlan(var, ("addr_plus", a, offset))
        return DerivedPlan(var, ("mem_oob", a, offset, access_size(op), memidx))
    if kind == "trap":
        return DerivedPlan(var, ("div_trap", op.endswith("_s") and "div" in op,
                                 32 if op.startswith("i32") else 64))
    if kind == "taken":
        if op == "br_if":
            return DerivedPlan(var, ("ne0", 0))
        return DerivedPlan(var, ("const", True))
    if kind == "pc":
        return DerivedPlan(var, ("const", site.pc))
    if kind == "fid":
        return DerivedPlan(var, ("const", site.fid))
    if kind == "category_id":
        return DerivedPlan(var, ("const", category_id(op)))
    if kind == "target_fn_name":
        return DerivedPlan(var, ("target_fn_name",))
    raise NotDerivableHere(var, op)


def recipe_key(var: str, opcode: str) -> tuple:
    """Opcode-dependent part of a variable's recipe (sites sharing it share code)."""
    kind, n = split_indexed(var)
    if kind == "category_id":
        return ("const", category_id(opcode))
    if kind == "arg":
        return ("arg", arg_type(opcode, n)[1])
    if kind in ("addr", "effective_addr", "trap") and is_memory_access(opcode):
        a = 0 if is_load(opcode) else 1
        return (kind, a, access_size(opcode) if kind == "trap" else 0)
    if kind == "trap":
        return ("div_trap", opcode.endswith("_s") and "div" in opcode, opcode[:3])
    if kind == "taken":
        return ("taken", opcode)
    return (kind,)


def args_needed(plan: DerivedPlan) -> list[int]:
    r = plan.recipe
    if r[0] in ("arg", "addr_plus", "ne0", "mem_oob"):
        return [r[1]]
    if r[0] == "div_trap":
        return [0, 1] if r[1] else [0]
    return []


# parameter vectors ----------------------------------------------------------


def collect_params(exprs_and_stmts) -> list[str]:
    """Bound variables referenced by the given trees, in first-use order."""
    from .lang import ast as A

    seen: dict[str, None] = {}

    def visit(node):
        if isinstance(node, A.Var):
            if is_bound_name(node.name) and not _is_declared(node):
                seen.setdefault(node.name, None)
            return
        if isinstance(node, list):
            for x in node:
                visit(x)
            return
        if node is None or isinstance(node, (str, int, float, bool, A.Prim, A.MapT, A.TupleT)):
            return
        for f in node.__dataclass_fields__:
            if f in ("ty", "ref", "info", "line", "col", "storage"):
                continue
            visit(getattr(node, f))

    visit(list(exprs_and_stmts))
    return list(seen)


def _is_declared(var) -> bool:
    """True when a Var resolves to a script variable rather than a bound one."""
    ref = getattr(var, "ref", None)
    return ref is not None and not isinstance(ref, str)
