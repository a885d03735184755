"""Errors raised by the DSL front end, the backends and the engine."""

from __future__ import annotations


class WhammError(Exception):
    """Base class for toolchain errors (not for application traps)."""


# front end -----------------------------------------------------------------


class ParseError(WhammError):
    def __init__(self, line: int, col: int, expected: str, found: str = ""):
        msg = f"{line}:{col}: expected {expected}"
        if found:
            msg += f", found {found!r}"
        super().__init__(msg)
        self.line = line
        self.col = col
        self.expected = expected
        self.found = found


class CheckError(WhammError):
    """Static error in a parsed script; carries the source position when known."""

    def __init__(self, msg: str, line: int = 0, col: int = 0):
        super().__init__(f"{line}:{col}: {msg}" if line else msg)
        self.line = line
        self.col = col


class UnknownVar(CheckError):
    def __init__(self, name: str, line: int = 0, col: int = 0):
        super().__init__(f"unknown variable or function {name!r}", line, col)
        self.name = name


class TypeMismatch(CheckError):
    def __init__(self, what: str, expected, found, line: int = 0, col: int = 0):
        super().__init__(f"type mismatch in {what}: expected {expected}, found {found}", line, col)
        self.expected = expected
        self.found = found


class IllegalStorage(CheckError):
    def __init__(self, name: str, reason: str, line: int = 0, col: int = 0):
        super().__init__(f"illegal storage for {name!r}: {reason}", line, col)
        self.name = name


class AmbiguousType(CheckError):
    def __init__(self, name: str, types, line: int = 0, col: int = 0):
        shown = ", ".join(sorted(str(t) for t in types)) or "unknown"
        super().__init__(
            f"type of {name!r} is ambiguous ({shown}); add a type bound such as "
            f"'({name}: i32)' after the event", line, col)
        self.name = name


class UnsatisfiableBound(CheckError):
    def __init__(self, rule: str, opcode: str, detail: str = "", line: int = 0, col: int = 0):
        super().__init__(f"type bound in {rule!r} can never hold for {opcode}"
                         + (f": {detail}" if detail else ""), line, col)
        self.rule = rule
        self.opcode = opcode


class NotDerivableHere(CheckError):
    def __init__(self, var: str, opcode: str, line: int = 0, col: int = 0):
        super().__init__(f"variable {var!r} is not available at {opcode}", line, col)
        self.var = var
        self.opcode = opcode


class TooManyStaticAtoms(WhammError):
    def __init__(self, n: int):
        super().__init__(f"predicate has {n} static atoms; at most 16 are supported")
        self.n = n


# backends ------------------------------------------------------------------


class LinkError(WhammError):
    pass


class UnsupportedForEngineTarget(WhammError):
    def __init__(self, feature: str):
        super().__init__(f"not supported by the monitor-module target: {feature}")
        self.feature = feature


class MalformedProbeName(WhammError):
    def __init__(self, name: str, detail: str):
        super().__init__(f"malformed probe export {name!r}: {detail}")
        self.name = name
        self.detail = detail


class DuplicateAlternate(WhammError):
    def __init__(self, site):
        super().__init__(f"more than one alternate decorator at {site}")
        self.site = site


class TargetNotFound(WhammError):
    pass


class ValidationFailed(WhammError):
    def __init__(self, fid: int, pc: int, reason: str):
        super().__init__(f"instrumented code fails validation in func {fid} at pc {pc}: {reason}")
        self.fid = fid
        self.pc = pc
        self.reason = reason


# runtime -------------------------------------------------------------------


class Trap(Exception):
    """The application (or library code it runs) trapped."""

    def __init__(self, kind: str, fid: int = -1, pc: int = -1):
        where = f" in func {fid} at pc {pc}" if fid >= 0 else ""
        super().__init__(f"trap: {kind}{where}")
        self.kind = kind
        self.fid = fid
        self.pc = pc


class MonitorTrap(Exception):
    """Code running inside an attached monitor trapped."""

    def __init__(self, kind: str, fid: int = -1, pc: int = -1, detail: str = ""):
        super().__init__(f"monitor trap: {kind}" + (f" ({detail})" if detail else ""))
        self.kind = kind
        self.fid = fid
        self.pc = pc
        self.detail = detail
