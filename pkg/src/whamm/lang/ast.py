"""Syntax tree for scripts.

Nodes compare structurally; source positions and the type annotations
filled in by the checker are excluded from equality.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

# types ----------------------------------------------------------------------

INT_TYPES = ("u8", "i8", "u16", "i16", "u32", "i32", "u64", "i64")
FLOAT_TYPES = ("f32", "f64")
PRIMITIVES = INT_TYPES + FLOAT_TYPES + ("bool", "str")

INT_WIDTH = {"u8": 8, "i8": 8, "u16": 16, "i16": 16, "u32": 32, "i32": 32, "u64": 64, "i64": 64}


@dataclass(frozen=True)
class Prim:
    name: str

    def __str__(self):
        return self.name

    @property
    def is_int(self) -> bool:
        return self.name in INT_TYPES

    @property
    def is_float(self) -> bool:
        return self.name in FLOAT_TYPES

    @property
    def is_numeric(self) -> bool:
        return self.is_int or self.is_float

    @property
    def signed(self) -> bool:
        return self.name.startswith("i") or self.is_float

    @property
    def width(self) -> int:
        return INT_WIDTH.get(self.name, 64 if self.name == "f64" else 32)


@dataclass(frozen=True)
class TupleT:
    items: tuple

    def __str__(self):
        return "(" + ", ".join(map(str, self.items)) + ")"


@dataclass(frozen=True)
class MapT:
    key: object
    value: object

    def __str__(self):
        return f"map<{self.key}, {self.value}>"


DslType = Union[Prim, TupleT, MapT]

U32 = Prim("u32")
I32T = Prim("i32")
U64 = Prim("u64")
I64T = Prim("i64")
F32T = Prim("f32")
F64T = Prim("f64")
BOOL = Prim("bool")
STR = Prim("str")


def wasm_type(t) -> str:
    """Wasm value type used to hold a DSL value."""
    if isinstance(t, Prim):
        if t.name in ("u64", "i64"):
            return "i64"
        if t.name in ("f32", "f64"):
            return t.name
        return "i32"
    raise TypeError(f"{t} has no single wasm representation")


def from_wasm_type(vt: str) -> Prim:
    return Prim(vt)


# expressions ----------------------------------------------------------------


def _pos():
    return field(default=0, compare=False, repr=False)


def _ann():
    return field(default=None, compare=False, repr=False)


@dataclass
class Expr:
    pass


@dataclass
class IntLit(Expr):
    value: int
    line: int = _pos()
    col: int = _pos()
    ty: object = _ann()


@dataclass
class FloatLit(Expr):
    value: float
    line: int = _pos()
    col: int = _pos()
    ty: object = _ann()


@dataclass
class BoolLit(Expr):
    value: bool
    line: int = _pos()
    col: int = _pos()
    ty: object = _ann()


@dataclass
class StrLit(Expr):
    value: str
    line: int = _pos()
    col: int = _pos()
    ty: object = _ann()


@dataclass
class Var(Expr):
    name: str
    line: int = _pos()
    col: int = _pos()
    ty: object = _ann()
    ref: object = _ann()  # VarInfo or BoundRef after checking


@dataclass
class MapGet(Expr):
    name: str
    key: Expr
    line: int = _pos()
    col: int = _pos()
    ty: object = _ann()
    ref: object = _ann()


@dataclass
class Call(Expr):
    lib: Optional[str]
    name: str
    args: list
    line: int = _pos()
    col: int = _pos()
    ty: object = _ann()
    ref: object = _ann()


@dataclass
class Unary(Expr):
    op: str
    operand: Expr
    line: int = _pos()
    col: int = _pos()
    ty: object = _ann()


@dataclass
class Binary(Expr):
    op: str
    left: Expr
    right: Expr
    line: int = _pos()
    col: int = _pos()
    ty: object = _ann()


@dataclass
class Cast(Expr):
    operand: Expr
    target: Prim
    line: int = _pos()
    col: int = _pos()
    ty: object = _ann()


@dataclass
class Ternary(Expr):
    cond: Expr
    then: Expr
    orelse: Expr
    line: int = _pos()
    col: int = _pos()
    ty: object = _ann()


@dataclass
class TupleLit(Expr):
    items: list
    line: int = _pos()
    col: int = _pos()
    ty: object = _ann()


@dataclass
class AlwaysTrap(Expr):
    """Produced by folding; evaluating it traps (e.g. integer division by zero)."""

    kind: str
    line: int = _pos()
    col: int = _pos()
    ty: object = _ann()


# statements -----------------------------------------------------------------


@dataclass
class Decl:
    name: str
    ty: object
    storage: frozenset
    init: Optional[Expr] = None
    line: int = _pos()
    col: int = _pos()
    info: object = _ann()


@dataclass
class Assign:
    target: Union[Var, MapGet]
    value: Expr
    line: int = _pos()
    col: int = _pos()


@dataclass
class Incr:
    target: Union[Var, MapGet]
    delta: int  # +1 or -1
    line: int = _pos()
    col: int = _pos()


@dataclass
class ExprStmt:
    expr: Call
    line: int = _pos()
    col: int = _pos()


@dataclass
class Return:
    value: Optional[Expr]
    line: int = _pos()
    col: int = _pos()


@dataclass
class If:
    cond: Expr
    then: list
    orelse: list  # an elif is a single nested If in orelse
    is_elif: bool = field(default=False, compare=False)
    line: int = _pos()
    col: int = _pos()


# top level ------------------------------------------------------------------


@dataclass
class RuleText:
    provider: str
    package: str
    event: str
    mode: str

    def __str__(self):
        return f"{self.provider}:{self.package}:{self.event}:{self.mode}"


@dataclass
class Directive:
    rule: RuleText
    bounds: list  # [(var name, Prim)]
    predicate: Optional[Expr]
    body: list
    line: int = _pos()
    col: int = _pos()


@dataclass
class Use:
    name: str
    line: int = _pos()
    col: int = _pos()


@dataclass
class Script:
    uses: list = field(default_factory=list)
    globals: list = field(default_factory=list)  # script-level Decls
    directives: list = field(default_factory=list)
