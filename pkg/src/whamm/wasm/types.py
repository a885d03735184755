"""In-memory representation of a decoded WebAssembly module."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Optional, Union

I32 = "i32"
I64 = "i64"
F32 = "f32"
F64 = "f64"
VALTYPES = (I32, I64, F32, F64)

ValType = str

VALTYPE_BYTES = {0x7F: I32, 0x7E: I64, 0x7D: F32, 0x7C: F64}
VALTYPE_TO_BYTE = {v: k for k, v in VALTYPE_BYTES.items()}

# block type: None (empty), a value type, or a type index
BlockType = Union[None, str, int]

PAGE_SIZE = 65536


@dataclass(frozen=True)
class FuncType:
    params: tuple[ValType, ...] = ()
    results: tuple[ValType, ...] = ()

    def __str__(self) -> str:
        return f"[{' '.join(self.params)}] -> [{' '.join(self.results)}]"


@dataclass(frozen=True)
class Instr:
    """One instruction. ``imm`` holds the immediates in binary order.

    memory ops: ``(align, offset, memidx)``; br_table: ``(labels, default)``;
    float constants carry their raw bit pattern so NaN payloads survive.
    """

    op: str
    imm: tuple = ()

    def __str__(self) -> str:
        if not self.imm:
            return self.op
        return f"{self.op} {' '.join(map(str, self.imm))}"


@dataclass(frozen=True)
class Site:
    fid: int
    pc: int
    opcode: str
    stack_in: tuple  # index 0 is the top of stack; None marks unreachable slots
    immediates: tuple[int, ...] = ()


@dataclass
class FunctionIR:
    fid: int
    type_idx: int
    sig: FuncType
    locals: list[ValType] = field(default_factory=list)
    body: list[Instr] = field(default_factory=list)
    sites: list[Site] = field(default_factory=list)

    @property
    def local_types(self) -> list[ValType]:
        return list(self.sig.params) + list(self.locals)


@dataclass(frozen=True)
class Limits:
    min: int
    max: Optional[int] = None


@dataclass
class Global:
    valtype: ValType
    mutable: bool
    init: list[Instr]


@dataclass
class Import:
    module: str
    name: str
    kind: str  # func | table | memory | global
    desc: object  # type index, Limits, Limits, or (valtype, mutable)


@dataclass
class ElemSegment:
    offset: list[Instr]
    funcs: list[int]
    table: int = 0


@dataclass
class DataSegment:
    offset: list[Instr]
    data: bytes
    memory: int = 0


@dataclass
class CustomSection:
    name: str
    payload: bytes
    after: int  # id of the preceding known section (0 = before all)


@dataclass
class ModuleIR:
    types: list[FuncType] = field(default_factory=list)
    imports: list[Import] = field(default_factory=list)
    funcs: list[FunctionIR] = field(default_factory=list)
    tables: list[Limits] = field(default_factory=list)
    memories: list[Limits] = field(default_factory=list)
    globals: list[Global] = field(default_factory=list)
    exports: dict[str, tuple[str, int]] = field(default_factory=dict)
    start: Optional[int] = None
    elements: list[ElemSegment] = field(default_factory=list)
    data: list[DataSegment] = field(default_factory=list)
    names: dict[int, str] = field(default_factory=dict)
    module_name: Optional[str] = None
    customs: list[CustomSection] = field(default_factory=list)
    data_count: bool = False
    # raw name-section subsections other than module/function names
    name_extra: list[tuple[int, bytes]] = field(default_factory=list)

    def copy(self) -> "ModuleIR":
        return copy.deepcopy(self)

    # index-space helpers -------------------------------------------------

    def imported(self, kind: str) -> list[Import]:
        return [imp for imp in self.imports if imp.kind == kind]

    @property
    def num_imported_funcs(self) -> int:
        return len(self.imported("func"))

    @property
    def num_funcs(self) -> int:
        return self.num_imported_funcs + len(self.funcs)

    def func_type(self, fidx: int) -> FuncType:
        nimp = self.num_imported_funcs
        if fidx < nimp:
            return self.types[self.imported("func")[fidx].desc]
        return self.funcs[fidx - nimp].sig

    def func(self, fidx: int) -> FunctionIR:
        nimp = self.num_imported_funcs
        if fidx < nimp:
            raise KeyError(f"function {fidx} is imported")
        return self.funcs[fidx - nimp]

    def all_memories(self) -> list[Limits]:
        return [imp.desc for imp in self.imported("memory")] + list(self.memories)

    def all_tables(self) -> list[Limits]:
        return [imp.desc for imp in self.imported("table")] + list(self.tables)

    def all_globals(self) -> list[tuple[ValType, bool]]:
        out = [tuple(imp.desc) for imp in self.imported("global")]
        out += [(g.valtype, g.mutable) for g in self.globals]
        return out

    def func_name(self, fidx: int) -> str:
        return self.names.get(fidx, f"func{fidx}")

    def export_func(self, name: str) -> int:
        kind, idx = self.exports[name]
        if kind != "func":
            raise KeyError(f"export {name!r} is not a function")
        return idx

    def add_type(self, ft: FuncType) -> int:
        for i, t in enumerate(self.types):
            if t == ft:
                return i
        self.types.append(ft)
        return len(self.types) - 1

    def block_type(self, bt: BlockType) -> FuncType:
        if bt is None:
            return FuncType()
        if isinstance(bt, str):
            return FuncType((), (bt,))
        return self.types[bt]

    def all_sites(self) -> list[Site]:
        return [s for f in self.funcs for s in f.sites]
