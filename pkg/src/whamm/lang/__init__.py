"""Script language: lexer, parser, pretty-printer and type checker."""

from .parser import parse_expr, parse_script
from .printer import print_expr, print_script
from .typecheck import LibFunc, TypedDirective, TypedScript, VarInfo, typecheck

__all__ = ["parse_script", "parse_expr", "print_script", "print_expr", "typecheck",
           "TypedScript", "TypedDirective", "VarInfo", "LibFunc"]
