"""Recursive-descent parser producing :mod:`whamm.lang.ast` trees.

Surface syntax, top level::

    use cache;
    report var hits: map<u32, u64>;
    wasm:opcode:call(arg0: i32):before / fid == 53 && arg0 == 3 / { ... }

Inside a predicate a bare ``/`` ends the predicate, so division there must
be parenthesized.  Negative numeric literals are written ``-5``; there is
no general unary minus.
"""

from __future__ import annotations



from ..errors import ParseError
from . import ast as A
from .lexer import Lexer, Token

STORAGE_WORDS = ("report", "unshared", "shared", "frame")

# binary operator precedence, loosest first
LEVELS = [
    ("||",), ("&&",), ("|",), ("^",), ("&",), ("==", "!="), ("<", "<=", ">", ">="),
    ("<<", ">>"), ("+", "-"), ("*", "/", "%"),
]


class Parser:
    def __init__(self, text: str):
        self.lx = Lexer(text)
        self.buf: list[Token] = []
        self.pred_depth = 0  # >0 while inside a predicate at paren depth 0

    # token helpers ------------------------------------------------------

    def peek(self, k: int = 0) -> Token:
        while len(self.buf) <= k:
            self.buf.append(self.lx.next())
        return self.buf[k]

    def take(self) -> Token:
        tok = self.peek()
        self.buf.pop(0)
        return tok

    def at(self, text: str, k: int = 0) -> bool:
        tok = self.peek(k)
        return tok.kind in ("OP", "KW") and tok.text == text

    def expect(self, text: str) -> Token:
        tok = self.peek()
        if not (tok.kind in ("OP", "KW") and tok.text == text):
            raise ParseError(tok.line, tok.col, repr(text), tok.text or "end of input")
        return self.take()

    def expect_id(self, what: str = "identifier") -> Token:
        tok = self.peek()
        if tok.kind != "ID":
            raise ParseError(tok.line, tok.col, what, tok.text or "end of input")
        return self.take()

    def error(self, expected: str):
        tok = self.peek()
        raise ParseError(tok.line, tok.col, expected, tok.text or "end of input")

    # script -------------------------------------------------------------

    def script(self) -> A.Script:
        s = A.Script()
        while self.peek().kind != "EOF":
            tok = self.peek()
            if self.at("use"):
                self.take()
                name = self.expect_id("library name")
                self.expect(";")
                s.uses.append(A.Use(name.text, tok.line, tok.col))
            elif tok.kind == "KW" and (tok.text == "var" or tok.text in STORAGE_WORDS):
                s.globals.append(self.decl_stmt())
            elif tok.kind == "ID":
                s.directives.append(self.directive())
            else:
                self.error("'use', a declaration, or a match rule")
        return s

    def directive(self) -> A.Directive:
        if self.buf:
            # the rule must be scanned raw from the first character
            first = self.buf[0]
            if len(self.buf) > 1:
                self.error("a match rule")
            self.buf.clear()
            self.lx.pos -= len(first.text)
            self.lx.col -= len(first.text)
        start = self.lx.raw_rule()
        parts = start.text.split(":")
        bounds: list = []
        if self.lx.peek_char() == "(":
            if len(parts) != 3 or not all(parts):
                raise ParseError(start.line, start.col, "'provider:package:event' before type bounds",
                                 start.text)
            self.expect("(")
            bounds = self.bounds()
            self.expect(")")
            self.lx.skip_space()
            if self.lx.peek_char() != ":":
                self.error("':' and a mode after type bounds")
            self.lx._advance(1)
            mode = self.lx.raw_rule()
            if not mode.text or ":" in mode.text:
                raise ParseError(mode.line, mode.col, "a mode", mode.text)
            parts.append(mode.text)
        if len(parts) != 4 or not all(parts):
            raise ParseError(start.line, start.col, "a four-part match rule provider:package:event:mode",
                             start.text)
        rule = A.RuleText(*parts)
        pred = None
        if self.at("/"):
            self.take()
            self.pred_depth += 1
            pred = self.expr()
            self.pred_depth -= 1
            self.expect("/")
        body = self.block()
        return A.Directive(rule, bounds, pred, body, start.line, start.col)

    def bounds(self) -> list:
        out = []
        if self.at(")"):
            return out
        while True:
            name = self.expect_id("bound variable")
            self.expect(":")
            out.append((name.text, self.prim_type()))
            if not self.at(","):
                return out
            self.take()

    # types --------------------------------------------------------------

    def prim_type(self) -> A.Prim:
        tok = self.peek()
        if tok.kind == "ID" and tok.text in A.PRIMITIVES:
            self.take()
            return A.Prim(tok.text)
        self.error("a primitive type")

    def type_(self):
        tok = self.peek()
        if self.at("map"):
            self.take()
            self.expect("<")
            key = self.type_()
            self.expect(",")
            val = self.type_()
            self._expect_close_angle()
            return A.MapT(key, val)
        if self.at("("):
            self.take()
            items = []
            if not self.at(")"):
                items.append(self.type_())
                while self.at(","):
                    self.take()
                    items.append(self.type_())
            self.expect(")")
            return A.TupleT(tuple(items))
        if tok.kind == "ID" and tok.text in A.PRIMITIVES:
            self.take()
            return A.Prim(tok.text)
        self.error("a type")

    def _expect_close_angle(self):
        tok = self.peek()
        if self.at(">"):
            self.take()
        elif self.at(">>"):
            # split '>>' closing two nested maps
            self.buf[0] = Token("OP", ">", ">", tok.line, tok.col + 1)
        else:
            self.error("'>'")

    # statements ---------------------------------------------------------

    def block(self) -> list:
        self.expect("{")
        stmts = []
        while not self.at("}"):
            if self.peek().kind == "EOF":
                self.error("'}'")
            stmts.append(self.statement())
        self.expect("}")
        return stmts

    def decl_stmt(self) -> A.Decl:
        tok = self.peek()
        storage = []
        while self.peek().kind == "KW" and self.peek().text in STORAGE_WORDS:
            storage.append(self.take().text)
        self.expect("var")
        name = self.expect_id("variable name")
        self.expect(":")
        ty = self.type_()
        init = None
        if self.at("="):
            self.take()
            init = self.expr()
        self.expect(";")
        return A.Decl(name.text, ty, frozenset(storage), init, tok.line, tok.col)

    def statement(self):
        tok = self.peek()
        if tok.kind == "KW" and (tok.text == "var" or tok.text in STORAGE_WORDS):
            return self.decl_stmt()
        if self.at("if"):
            return self.if_stmt()
        if self.at("return"):
            self.take()
            value = None if self.at(";") else self.expr()
            self.expect(";")
            return A.Return(value, tok.line, tok.col)
        if tok.kind == "ID":
            if self.at(".", 1) or self.at("(", 1):
                call = self.call()
                self.expect(";")
                return A.ExprStmt(call, tok.line, tok.col)
            target = self.lvalue()
            if self.at("++") or self.at("--"):
                delta = 1 if self.take().text == "++" else -1
                self.expect(";")
                return A.Incr(target, delta, tok.line, tok.col)
            self.expect("=")
            value = self.expr()
            self.expect(";")
            return A.Assign(target, value, tok.line, tok.col)
        self.error("a statement")

    def lvalue(self):
        name = self.expect_id()
        if self.at("["):
            self.take()
            key = self.expr()
            self.expect("]")
            return A.MapGet(name.text, key, name.line, name.col)
        return A.Var(name.text, name.line, name.col)

    def if_stmt(self) -> A.If:
        tok = self.take()  # 'if' or 'elif'
        self.expect("(")
        cond = self.expr()
        self.expect(")")
        then = self.block()
        orelse: list = []
        if self.at("elif"):
            orelse = [self.if_stmt()]
            orelse[0].is_elif = True
        elif self.at("else"):
            self.take()
            orelse = self.block()
        return A.If(cond, then, orelse, False, tok.line, tok.col)

    # expressions --------------------------------------------------------

    def expr(self) -> A.Expr:
        cond = self.binary(0)
        if self.at("?"):
            tok = self.take()
            then = self.expr()
            self.expect(":")
            orelse = self.expr()
            return A.Ternary(cond, then, orelse, tok.line, tok.col)
        return cond

    def binary(self, level: int) -> A.Expr:
        if level == len(LEVELS):
            return self.unary()
        left = self.binary(level + 1)
        while True:
            tok = self.peek()
            if tok.kind != "OP" or tok.text not in LEVELS[level]:
                return left
            if tok.text == "/" and self.pred_depth:
                return left
            self.take()
            right = self.binary(level + 1)
            left = A.Binary(tok.text, left, right, tok.line, tok.col)

    def unary(self) -> A.Expr:
        tok = self.peek()
        if self.at("!") or self.at("~"):
            self.take()
            return A.Unary(tok.text, self.unary(), tok.line, tok.col)
        if self.at("-") and self.peek(1).kind in ("INT", "FLOAT"):
            self.take()
            lit = self.take()
            node = (A.IntLit(-lit.value, tok.line, tok.col) if lit.kind == "INT"
                    else A.FloatLit(-lit.value, tok.line, tok.col))
            return self.postfix(node)
        return self.postfix(self.primary())

    def postfix(self, node: A.Expr) -> A.Expr:
        while self.at("as"):
            tok = self.take()
            node = A.Cast(node, self.prim_type(), tok.line, tok.col)
        return node

    def call(self) -> A.Call:
        name = self.expect_id()
        lib = None
        if self.at("."):
            self.take()
            lib = name.text
            fn = self.expect_id("function name")
        else:
            fn = name
        self.expect("(")
        args = []
        saved = self.pred_depth
        self.pred_depth = 0
        if not self.at(")"):
            args.append(self.expr())
            while self.at(","):
                self.take()
                args.append(self.expr())
        self.expect(")")
        self.pred_depth = saved
        return A.Call(lib, fn.text, args, name.line, name.col)

    def primary(self) -> A.Expr:
        tok = self.peek()
        if tok.kind == "INT":
            self.take()
            return A.IntLit(tok.value, tok.line, tok.col)
        if tok.kind == "FLOAT":
            self.take()
            return A.FloatLit(tok.value, tok.line, tok.col)
        if tok.kind == "STRING":
            self.take()
            return A.StrLit(tok.value, tok.line, tok.col)
        if self.at("true") or self.at("false"):
            self.take()
            return A.BoolLit(tok.text == "true", tok.line, tok.col)
        if tok.kind == "ID":
            if self.at(".", 1) or self.at("(", 1):
                return self.call()
            self.take()
            if self.at("["):
                self.take()
                saved = self.pred_depth
                self.pred_depth = 0
                key = self.expr()
                self.pred_depth = saved
                self.expect("]")
                return A.MapGet(tok.text, key, tok.line, tok.col)
            return A.Var(tok.text, tok.line, tok.col)
        if self.at("("):
            self.take()
            if self.at(")"):
                self.take()
                return A.TupleLit([], tok.line, tok.col)
            saved = self.pred_depth
            self.pred_depth = 0
            first = self.expr()
            if self.at(","):
                items = [first]
                while self.at(","):
                    self.take()
                    items.append(self.expr())
                self.expect(")")
                self.pred_depth = saved
                return A.TupleLit(items, tok.line, tok.col)
            self.expect(")")
            self.pred_depth = saved
            return first
        self.error("an expression")


def parse_script(text: str) -> A.Script:
    """Parse a whole script; raises :class:`ParseError` with line/column."""
    return Parser(text).script()


def parse_expr(text: str) -> A.Expr:
    p = Parser(text)
    e = p.expr()
    if p.peek().kind != "EOF":
        p.error("end of expression")
    return e
