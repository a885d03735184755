"""Tokenizer for ``.mm`` scripts.

Match rules are scanned as raw text (see :meth:`Lexer.raw_rule`) because
their parts may contain characters such as ``*``, ``|`` and ``.`` that are
operators elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import ParseError

KEYWORDS = {
    "var", "report", "unshared", "shared", "frame", "if", "elif", "else", "return",
    "as", "use", "true", "false", "map",
}

# longest first so that the scanner is greedy
PUNCT = [
    "<<", ">>", "&&", "||", "==", "!=", ">=", "<=", "++", "--",
    "{", "}", "(", ")", "[", "]", ";", ":", ",", ".", "/", "?", "+", "-", "*", "%",
    "&", "|", "^", ">", "<", "!", "~", "=",
]

RULE_CHARS = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_.*|:")


@dataclass(frozen=True)
class Token:
    kind: str  # ID, INT, FLOAT, STRING, KW, OP, EOF
    text: str
    value: object
    line: int
    col: int


class Lexer:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.line = 1
        self.col = 1

    def _advance(self, n: int):
        for ch in self.text[self.pos:self.pos + n]:
            if ch == "\n":
                self.line += 1
                self.col = 1
            else:
                self.col += 1
        self.pos += n

    def skip_space(self):
        t = self.text
        while self.pos < len(t):
            ch = t[self.pos]
            if ch in " \t\r\n":
                self._advance(1)
            elif t.startswith("//", self.pos):
                end = t.find("\n", self.pos)
                self._advance((len(t) if end < 0 else end) - self.pos)
            elif t.startswith("/*", self.pos):
                end = t.find("*/", self.pos + 2)
                if end < 0:
                    raise ParseError(self.line, self.col, "'*/' to close comment")
                self._advance(end + 2 - self.pos)
            else:
                break

    def next(self) -> Token:
        self.skip_space()
        t = self.text
        line, col = self.line, self.col
        if self.pos >= len(t):
            return Token("EOF", "", None, line, col)
        ch = t[self.pos]
        if ch.isalpha() or ch == "_":
            end = self.pos
            while end < len(t) and (t[end].isalnum() or t[end] == "_"):
                end += 1
            word = t[self.pos:end]
            self._advance(end - self.pos)
            kind = "KW" if word in KEYWORDS else "ID"
            return Token(kind, word, word, line, col)
        if ch.isdigit():
            return self._number(line, col)
        if ch == '"':
            return self._string(line, col)
        for p in PUNCT:
            if t.startswith(p, self.pos):
                self._advance(len(p))
                return Token("OP", p, p, line, col)
        raise ParseError(line, col, "a token", ch)

    def _number(self, line, col) -> Token:
        t = self.text
        start = self.pos
        if t.startswith(("0x", "0X"), start):
            end = start + 2
            while end < len(t) and (t[end] in "0123456789abcdefABCDEF_"):
                end += 1
            text = t[start:end]
            if end == start + 2:
                raise ParseError(line, col, "hex digits", text)
            self._advance(end - start)
            return Token("INT", text, int(text.replace("_", ""), 16), line, col)
        end = start
        while end < len(t) and (t[end].isdigit() or t[end] == "_"):
            end += 1
        is_float = False
        if end + 1 < len(t) and t[end] == "." and t[end + 1].isdigit():
            is_float = True
            end += 1
            while end < len(t) and t[end].isdigit():
                end += 1
        if end < len(t) and t[end] in "eE":
            k = end + 1
            if k < len(t) and t[k] in "+-":
                k += 1
            if k < len(t) and t[k].isdigit():
                is_float = True
                end = k
                while end < len(t) and t[end].isdigit():
                    end += 1
        text = t[start:end]
        if end < len(t) and (t[end].isalpha() or t[end] == "_"):
            raise ParseError(line, col, "a number", t[start:end + 1])
        self._advance(end - start)
        clean = text.replace("_", "")
        if is_float:
            return Token("FLOAT", text, float(clean), line, col)
        return Token("INT", text, int(clean), line, col)

    def _string(self, line, col) -> Token:
        t = self.text
        i = self.pos + 1
        out = []
        escapes = {"n": "\n", "t": "\t", '"': '"', "\\": "\\", "r": "\r"}
        while True:
            if i >= len(t) or t[i] == "\n":
                raise ParseError(line, col, "closing '\"'")
            ch = t[i]
            if ch == '"':
                break
            if ch == "\\":
                nxt = t[i + 1] if i + 1 < len(t) else ""
                if nxt not in escapes:
                    raise ParseError(line, col + (i - self.pos), "a valid escape", "\\" + nxt)
                out.append(escapes[nxt])
                i += 2
                continue
            out.append(ch)
            i += 1
        text = t[self.pos:i + 1]
        self._advance(i + 1 - self.pos)
        return Token("STRING", text, "".join(out), line, col)

    def raw_rule(self) -> Token:
        """Scan a run of match-rule characters starting at the current position."""
        self.skip_space()
        line, col = self.line, self.col
        t = self.text
        end = self.pos
        while end < len(t) and t[end] in RULE_CHARS:
            end += 1
        text = t[self.pos:end]
        self._advance(end - self.pos)
        return Token("RULE", text, text, line, col)

    def peek_char(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""
