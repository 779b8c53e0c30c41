"""The action language the planner speaks.

Instead of executing model-written code, the agent accepts a closed grammar:

    action  := call | finish
    call    := "call" IDENT "(" [arg ("," arg)*] ")"
    finish  := "finish" "(" "caption" "=" STRING ")"
    arg     := IDENT "=" value
    value   := STRING | INTEGER | IDENT

Whitespace between tokens is ignored. Strings are double-quoted and support
the escapes \\\\, \\", \\n, \\t, \\r; raw newlines are not allowed inside a
string, so an action always fits on one line. ``serialize_action`` emits the
canonical form and ``parse_action(serialize_action(a)) == a`` for every valid
action value.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from .errors import ParseError, UnknownForm

__all__ = [
    "Symbol",
    "ToolCall",
    "FinalAnswer",
    "ArgValue",
    "parse_action",
    "serialize_action",
]


@dataclass(frozen=True)
class Symbol:
    """A bare identifier used as an argument value, e.g. ``sentiment=positive``."""

    name: str

    def __post_init__(self):
        if not _is_identifier(self.name):
            raise ValueError(f"not a valid identifier: {self.name!r}")


ArgValue = Union[str, int, "Symbol"]


@dataclass(frozen=True)
class ToolCall:
    """A parsed ``call name(...)`` action with arguments in written order."""

    tool_name: str
    args: tuple[tuple[str, str | int | Symbol], ...] = ()

    def __post_init__(self):
        if not _is_identifier(self.tool_name):
            raise ValueError(f"not a valid tool name: {self.tool_name!r}")
        names = [name for name, _ in self.args]
        if len(names) != len(set(names)):
            raise ValueError(f"duplicate argument names in {self.tool_name} call")

    def arg_map(self) -> dict[str, str | int | Symbol]:
        return dict(self.args)


@dataclass(frozen=True)
class FinalAnswer:
    """The terminating ``finish(caption=...)`` action."""

    caption_text: str

    def __post_init__(self):
        if not self.caption_text:
            raise ValueError("finish caption must be non-empty")


_ESCAPES = {"\\": "\\", '"': '"', "n": "\n", "t": "\t", "r": "\r"}
_UNESCAPES = {"\\": "\\\\", '"': '\\"', "\n": "\\n", "\t": "\\t", "\r": "\\r"}


def _is_identifier(s: str) -> bool:
    if not s:
        return False
    if not (s[0].isascii() and (s[0].isalpha() or s[0] == "_")):
        return False
    return all(c.isascii() and (c.isalnum() or c == "_") for c in s)


class _Cursor:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def skip_ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos] in " \t\r\n":
            self.pos += 1

    def at_end(self) -> bool:
        self.skip_ws()
        return self.pos >= len(self.text)

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, literal: str, expected: str) -> None:
        self.skip_ws()
        if not self.text.startswith(literal, self.pos):
            raise ParseError("unexpected input", self.pos, (expected,))
        self.pos += len(literal)

    def identifier(self, expected: str = "identifier") -> str:
        self.skip_ws()
        start = self.pos
        ch = self.peek()
        if not (ch.isascii() and (ch.isalpha() or ch == "_")):
            raise ParseError("expected an identifier", start, (expected,))
        while True:
            ch = self.peek()
            if ch.isascii() and (ch.isalnum() or ch == "_"):
                self.pos += 1
            else:
                break
        return self.text[start : self.pos]

    def string(self) -> str:
        self.skip_ws()
        start = self.pos
        if self.peek() != '"':
            raise ParseError("expected a string", start, ("string",))
        self.pos += 1
        out: list[str] = []
        while True:
            if self.pos >= len(self.text):
                raise ParseError("unterminated string", start, ('"',))
            ch = self.text[self.pos]
            if ch == '"':
                self.pos += 1
                return "".join(out)
            if ch == "\n":
                raise ParseError("raw newline inside string", self.pos, ('\\n or "',))
            if ch == "\\":
                if self.pos + 1 >= len(self.text):
                    raise ParseError("dangling escape", self.pos, tuple(_ESCAPES))
                esc = self.text[self.pos + 1]
                if esc not in _ESCAPES:
                    raise ParseError(
                        f"unknown escape \\{esc}", self.pos, tuple("\\" + e for e in _ESCAPES)
                    )
                out.append(_ESCAPES[esc])
                self.pos += 2
            else:
                out.append(ch)
                self.pos += 1

    def integer(self) -> int:
        self.skip_ws()
        start = self.pos
        if self.peek() == "-":
            self.pos += 1
        if not self.peek().isdigit():
            raise ParseError("expected an integer", start, ("integer",))
        while self.peek().isdigit():
            self.pos += 1
        return int(self.text[start : self.pos])

    def value(self) -> str | int | Symbol:
        self.skip_ws()
        ch = self.peek()
        if ch == '"':
            return self.string()
        if ch == "-" or ch.isdigit():
            return self.integer()
        if ch.isascii() and (ch.isalpha() or ch == "_"):
            return Symbol(self.identifier())
        raise ParseError("expected a value", self.pos, ("string", "integer", "identifier"))


def parse_action(text: str) -> ToolCall | FinalAnswer:
    """Parse one action line; raises ParseError/UnknownForm with a position."""
    cur = _Cursor(text)
    cur.skip_ws()
    head_pos = cur.pos
    try:
        head = cur.identifier("call or finish")
    except ParseError:
        raise UnknownForm("action must start with 'call' or 'finish'", head_pos, ("call", "finish"))
    if head == "call":
        return _parse_call(cur)
    if head == "finish":
        return _parse_finish(cur)
    raise UnknownForm(f"unknown action form {head!r}", head_pos, ("call", "finish"))


def _parse_call(cur: _Cursor) -> ToolCall:
    tool_name = cur.identifier("tool name")
    cur.expect("(", "(")
    args: list[tuple[str, str | int | Symbol]] = []
    seen: set[str] = set()
    cur.skip_ws()
    if cur.peek() != ")":
        while True:
            cur.skip_ws()
            name_pos = cur.pos
            name = cur.identifier("argument name")
            if name in seen:
                raise ParseError(f"duplicate argument {name!r}", name_pos, ("fresh argument name",))
            seen.add(name)
            cur.expect("=", "=")
            args.append((name, cur.value()))
            cur.skip_ws()
            if cur.peek() == ",":
                cur.pos += 1
                continue
            break
    cur.expect(")", ")")
    if not cur.at_end():
        raise ParseError("trailing input after action", cur.pos, ("end of input",))
    return ToolCall(tool_name, tuple(args))


def _parse_finish(cur: _Cursor) -> FinalAnswer:
    cur.expect("(", "(")
    cur.skip_ws()
    name_pos = cur.pos
    name = cur.identifier("caption")
    if name != "caption":
        raise ParseError("finish takes exactly one argument", name_pos, ("caption",))
    cur.expect("=", "=")
    cur.skip_ws()
    text_pos = cur.pos
    caption = cur.string()
    cur.expect(")", ")")
    if not cur.at_end():
        raise ParseError("trailing input after action", cur.pos, ("end of input",))
    if not caption:
        raise ParseError("caption must be non-empty", text_pos, ("non-empty string",))
    return FinalAnswer(caption)


def _quote(s: str) -> str:
    return '"' + "".join(_UNESCAPES.get(c, c) for c in s) + '"'


def _render_value(value: str | int | Symbol) -> str:
    if isinstance(value, Symbol):
        return value.name
    if isinstance(value, bool):  # bool is an int subclass; reject explicitly
        raise TypeError("boolean argument values are not part of the action grammar")
    if isinstance(value, int):
        return str(value)
    if isinstance(value, str):
        return _quote(value)
    raise TypeError(f"unsupported argument value type: {type(value).__name__}")


def serialize_action(action: ToolCall | FinalAnswer) -> str:
    """Render the canonical single-line form of an action."""
    if isinstance(action, FinalAnswer):
        return f"finish(caption={_quote(action.caption_text)})"
    rendered = ", ".join(f"{name}={_render_value(value)}" for name, value in action.args)
    return f"call {action.tool_name}({rendered})"
