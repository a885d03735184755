"""Decode, validate and encode a subset of the WebAssembly binary format."""

from .binary import decode_module, encode_module
from .errors import (
    EncodeOverflow,
    InvalidIndex,
    MalformedBinary,
    StackUnderflow,
    UnsupportedFeature,
    ValidationError,
    WasmError,
    WasmTypeError,
)
from .types import (
    F32,
    F64,
    I32,
    I64,
    FunctionIR,
    FuncType,
    Instr,
    Limits,
    ModuleIR,
    Site,
)
from .validate import validate


def load(data: bytes) -> ModuleIR:
    """Decode and validate in one step."""
    return validate(decode_module(data))


__all__ = [
    "decode_module", "encode_module", "validate", "load",
    "ModuleIR", "FunctionIR", "FuncType", "Instr", "Limits", "Site",
    "I32", "I64", "F32", "F64",
    "WasmError", "MalformedBinary", "UnsupportedFeature", "EncodeOverflow",
    "ValidationError", "WasmTypeError", "StackUnderflow", "InvalidIndex",
]
