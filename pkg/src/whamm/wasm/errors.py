"""Exceptions raised while decoding, validating and encoding modules."""


class WasmError(Exception):
    """Base class for every error raised by :mod:`whamm.wasm`."""


class MalformedBinary(WasmError):
    def __init__(self, offset: int, reason: str):
        super().__init__(f"malformed binary at offset {offset:#x}: {reason}")
        self.offset = offset
        self.reason = reason


class UnsupportedFeature(WasmError):
    def __init__(self, name: str, detail: str = ""):
        msg = f"unsupported feature: {name}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
        self.name = name


class EncodeOverflow(WasmError):
    pass


class ValidationError(WasmError):
    """A function body failed type checking."""

    def __init__(self, fid: int, pc: int, reason: str):
        super().__init__(f"validation failed in func {fid} at pc {pc}: {reason}")
        self.fid = fid
        self.pc = pc
        self.reason = reason


class WasmTypeError(ValidationError):
    def __init__(self, fid: int, pc: int, expected, found):
        super().__init__(fid, pc, f"type mismatch: expected {expected}, found {found}")
        self.expected = expected
        self.found = found


class StackUnderflow(ValidationError):
    def __init__(self, fid: int, pc: int):
        super().__init__(fid, pc, "operand stack underflow")


class InvalidIndex(ValidationError):
    pass
