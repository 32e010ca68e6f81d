"""The context-condition expression language.

Grammar, lowest precedence first::

    or     := and (OR and)*
    and    := unary (AND unary)*
    unary  := NOT unary | primary
    primary:= comparison | operand
    operand:= '(' or ')' | 'true' | 'false' | call | IDENT | ENUM_NAME
              | NUMBER | STRING

``&&``/``AND``, ``||``/``OR``, ``!``/``NOT`` are synonyms. A comparison is a
single non-associative ``== != < <= > >=`` between two operands; chains like
``a < b < c`` are rejected. Enum literals are bare uppercase names (VEHICLE),
variables are lowercase (user_movement_type). Two built-in calls exist:
``near(pattern[, min_rssi])`` over the current fingerprint and ``zone(id)``
over the debounced proximity zones.

Evaluation collapses three-valued logic: a comparison or boolean variable over
absent data is false, so unannotated pages degrade to hidden-by-default.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .context import ContextState
from .fingerprint import Fingerprint, canonical_mac

__all__ = [
    "TokenKind",
    "Token",
    "RuleError",
    "RuleLexError",
    "RuleParseError",
    "RuleEvalError",
    "EnumName",
    "Or",
    "And",
    "Not",
    "Compare",
    "Call",
    "Var",
    "Lit",
    "tokenize",
    "parse",
    "evaluate",
    "format_ast",
    "VARIABLES",
    "FUNCTIONS",
]


class RuleError(ValueError):
    """Base for DSL errors; ``offset`` is a byte position into the source."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class RuleLexError(RuleError):
    pass


class RuleParseError(RuleError):
    def __init__(self, message: str, offset: int, expected: tuple[str, ...] = ()):
        if expected:
            message = f"{message}; expected {', '.join(expected)}"
        super().__init__(message, offset)
        self.expected = expected


class RuleEvalError(RuleError):
    pass


class TokenKind(enum.Enum):
    IDENT = "IDENT"
    ENUM_NAME = "ENUM_NAME"
    NUMBER = "NUMBER"
    STRING = "STRING"
    LPAREN = "LPAREN"
    RPAREN = "RPAREN"
    COMMA = "COMMA"
    EQ = "EQ"
    NE = "NE"
    LT = "LT"
    LE = "LE"
    GT = "GT"
    GE = "GE"
    AND = "AND"
    OR = "OR"
    NOT = "NOT"
    TRUE = "TRUE"
    FALSE = "FALSE"
    EOF = "EOF"


@dataclass(frozen=True)
class Token:
    kind: TokenKind
    lexeme: str
    offset: int  # byte position in the source


_PUNCT = {
    "(": TokenKind.LPAREN,
    ")": TokenKind.RPAREN,
    ",": TokenKind.COMMA,
}
_KEYWORDS = {
    "AND": TokenKind.AND,
    "OR": TokenKind.OR,
    "NOT": TokenKind.NOT,
    "true": TokenKind.TRUE,
    "false": TokenKind.FALSE,
}
COMPARISON_KINDS = (TokenKind.EQ, TokenKind.NE, TokenKind.LT, TokenKind.LE, TokenKind.GT, TokenKind.GE)


def _is_ident_start(ch: str) -> bool:
    return ch.isascii() and (ch.isalpha() or ch == "_")


def _is_ident_char(ch: str) -> bool:
    return ch.isascii() and (ch.isalnum() or ch == "_")


def _is_digit(ch: str) -> bool:
    # str.isdigit() admits Unicode digits float() rejects (e.g. superscripts)
    return "0" <= ch <= "9"


def tokenize(text: str) -> list[Token]:
    """Longest-match lexing; every token carries its byte offset and the list
    ends with an EOF token."""
    tokens: list[Token] = []
    i = 0
    n = len(text)
    # byte offset of each character position (text may contain non-ASCII in strings)
    byte_at = [0] * (n + 1)
    for k, ch in enumerate(text):
        byte_at[k + 1] = byte_at[k] + len(ch.encode("utf-8"))

    def emit(kind: TokenKind, start: int, end: int):
        tokens.append(Token(kind, text[start:end], byte_at[start]))

    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch in _PUNCT:
            emit(_PUNCT[ch], i, i + 1)
            i += 1
            continue
        if ch == "&":
            if text[i : i + 2] != "&&":
                raise RuleLexError("single '&' (use '&&' or 'AND')", byte_at[i])
            emit(TokenKind.AND, i, i + 2)
            i += 2
            continue
        if ch == "|":
            if text[i : i + 2] != "||":
                raise RuleLexError("single '|' (use '||' or 'OR')", byte_at[i])
            emit(TokenKind.OR, i, i + 2)
            i += 2
            continue
        if ch == "!":
            if text[i : i + 2] == "!=":
                emit(TokenKind.NE, i, i + 2)
                i += 2
            else:
                emit(TokenKind.NOT, i, i + 1)
                i += 1
            continue
        if ch == "=":
            if text[i : i + 2] != "==":
                raise RuleLexError("single '=' (use '==')", byte_at[i])
            emit(TokenKind.EQ, i, i + 2)
            i += 2
            continue
        if ch == "<":
            if text[i : i + 2] == "<=":
                emit(TokenKind.LE, i, i + 2)
                i += 2
            else:
                emit(TokenKind.LT, i, i + 1)
                i += 1
            continue
        if ch == ">":
            if text[i : i + 2] == ">=":
                emit(TokenKind.GE, i, i + 2)
                i += 2
            else:
                emit(TokenKind.GT, i, i + 1)
                i += 1
            continue
        if ch == '"':
            j = i + 1
            while j < n:
                if text[j] == "\\":
                    if j + 1 >= n or text[j + 1] not in ('"', "\\"):
                        raise RuleLexError("bad escape in string", byte_at[j])
                    j += 2
                    continue
                if text[j] == '"':
                    break
                j += 1
            else:
                raise RuleLexError("unterminated string", byte_at[i])
            emit(TokenKind.STRING, i, j + 1)
            i = j + 1
            continue
        if _is_digit(ch) or (ch == "-" and i + 1 < n and _is_digit(text[i + 1])):
            j = i + 1
            while j < n and _is_digit(text[j]):
                j += 1
            if j < n and text[j] == "." and j + 1 < n and _is_digit(text[j + 1]):
                j += 1
                while j < n and _is_digit(text[j]):
                    j += 1
            emit(TokenKind.NUMBER, i, j)
            i = j
            continue
        if _is_ident_start(ch):
            j = i + 1
            while j < n and _is_ident_char(text[j]):
                j += 1
            word = text[i:j]
            keyword = _KEYWORDS.get(word)
            if keyword is not None:
                emit(keyword, i, j)
            elif any(c.islower() for c in word):
                emit(TokenKind.IDENT, i, j)
            else:
                emit(TokenKind.ENUM_NAME, i, j)
            i = j
            continue
        raise RuleLexError(f"illegal character {ch!r}", byte_at[i])
    tokens.append(Token(TokenKind.EOF, "", byte_at[n]))
    return tokens


# --- AST ------------------------------------------------------------------
# offset is excluded from equality so parse(format(a)) == a holds structurally.


@dataclass(frozen=True)
class EnumName:
    name: str


@dataclass(frozen=True)
class Or:
    left: "Node"
    right: "Node"
    offset: int = field(default=0, compare=False)


@dataclass(frozen=True)
class And:
    left: "Node"
    right: "Node"
    offset: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Not:
    operand: "Node"
    offset: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Compare:
    op: TokenKind
    left: "Node"
    right: "Node"
    offset: int = field(default=0, compare=False)

    def __post_init__(self):
        if self.op not in COMPARISON_KINDS:
            raise ValueError(f"{self.op} is not a comparison operator")


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple["Node", ...]
    offset: int = field(default=0, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))
        if self.name not in FUNCTIONS:
            raise ValueError(f"unknown function {self.name!r}")


@dataclass(frozen=True)
class Var:
    name: str
    offset: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Lit:
    value: bool | float | str | EnumName
    offset: int = field(default=0, compare=False)


Node = Or | And | Not | Compare | Call | Var | Lit

FUNCTIONS = ("near", "zone")

# Context variables and how they read from a ContextState. ABSENT (None)
# collapses any enclosing comparison or boolean use to false.
VARIABLES = {
    "user_movement_type": lambda s: EnumName(s.movement.value),
    "noise_level": lambda s: EnumName(s.noise.value),
    "noise_db": lambda s: s.noise_db,
    "stable_surface": lambda s: s.stable_surface,
    "rotating": lambda s: s.rotating,
    "light_level": lambda s: EnumName(s.light.value),
    "lux": lambda s: s.lux,
}


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        token = self.tokens[self.pos]
        if token.kind is not TokenKind.EOF:
            self.pos += 1
        return token

    def expect(self, kind: TokenKind, what: str) -> Token:
        token = self.peek()
        if token.kind is not kind:
            raise RuleParseError(f"unexpected {token.kind.value} {token.lexeme!r}", token.offset, (what,))
        return self.advance()

    def parse_expression(self) -> Node:
        node = self.parse_or()
        token = self.peek()
        if token.kind is not TokenKind.EOF:
            raise RuleParseError(f"trailing input {token.lexeme!r}", token.offset, ("end of input",))
        return node

    def parse_or(self) -> Node:
        node = self.parse_and()
        while self.peek().kind is TokenKind.OR:
            op = self.advance()
            node = Or(node, self.parse_and(), offset=op.offset)
        return node

    def parse_and(self) -> Node:
        node = self.parse_unary()
        while self.peek().kind is TokenKind.AND:
            op = self.advance()
            node = And(node, self.parse_unary(), offset=op.offset)
        return node

    def parse_unary(self) -> Node:
        token = self.peek()
        if token.kind is TokenKind.NOT:
            self.advance()
            return Not(self.parse_unary(), offset=token.offset)
        return self.parse_primary()

    def parse_primary(self) -> Node:
        left = self.parse_operand()
        token = self.peek()
        if token.kind in COMPARISON_KINDS:
            op = self.advance()
            right = self.parse_operand()
            chained = self.peek()
            if chained.kind in COMPARISON_KINDS:
                raise RuleParseError("comparison chain", chained.offset, ("&&", "||", "end of input"))
            return Compare(op.kind, left, right, offset=op.offset)
        return left

    def parse_operand(self) -> Node:
        token = self.peek()
        if token.kind is TokenKind.LPAREN:
            self.advance()
            node = self.parse_or()
            self.expect(TokenKind.RPAREN, "')'")
            return node
        if token.kind is TokenKind.TRUE:
            self.advance()
            return Lit(True, offset=token.offset)
        if token.kind is TokenKind.FALSE:
            self.advance()
            return Lit(False, offset=token.offset)
        if token.kind is TokenKind.NUMBER:
            self.advance()
            return Lit(float(token.lexeme), offset=token.offset)
        if token.kind is TokenKind.STRING:
            self.advance()
            return Lit(_unquote(token.lexeme), offset=token.offset)
        if token.kind is TokenKind.ENUM_NAME:
            self.advance()
            return Lit(EnumName(token.lexeme), offset=token.offset)
        if token.kind is TokenKind.IDENT:
            self.advance()
            if self.peek().kind is TokenKind.LPAREN:
                return self.parse_call(token)
            return Var(token.lexeme, offset=token.offset)
        raise RuleParseError(
            f"unexpected {token.kind.value} {token.lexeme!r}",
            token.offset,
            ("'('", "literal", "variable", "call"),
        )

    def parse_call(self, name_token: Token) -> Node:
        self.expect(TokenKind.LPAREN, "'('")
        name = name_token.lexeme
        if name not in FUNCTIONS:
            raise RuleParseError(f"unknown function {name!r}", name_token.offset, FUNCTIONS)
        args: list[Node] = []
        if self.peek().kind is not TokenKind.RPAREN:
            while True:
                args.append(self.parse_call_arg(name))
                if self.peek().kind is TokenKind.COMMA:
                    self.advance()
                    continue
                break
        close = self.expect(TokenKind.RPAREN, "')'")
        self.validate_call(name, args, name_token, close)
        return Call(name, tuple(args), offset=name_token.offset)

    def parse_call_arg(self, name: str) -> Node:
        token = self.peek()
        if token.kind is TokenKind.STRING:
            self.advance()
            return Lit(_unquote(token.lexeme), offset=token.offset)
        if token.kind is TokenKind.NUMBER:
            self.advance()
            return Lit(float(token.lexeme), offset=token.offset)
        if name == "zone" and token.kind is TokenKind.ENUM_NAME:
            self.advance()
            return Lit(EnumName(token.lexeme), offset=token.offset)
        if name == "zone" and token.kind is TokenKind.IDENT:
            self.advance()
            return Var(token.lexeme, offset=token.offset)
        raise RuleParseError(
            f"bad argument for {name}()", token.offset,
            ("string", "number") if name == "near" else ("identifier", "string"),
        )

    def validate_call(self, name: str, args: list[Node], name_token: Token, close: Token):
        if name == "near":
            if not 1 <= len(args) <= 2:
                raise RuleParseError("near() takes 1 or 2 arguments", name_token.offset)
            if not (isinstance(args[0], Lit) and isinstance(args[0].value, str)):
                raise RuleParseError("near() pattern must be a string", args[0].offset)
            if len(args) == 2 and not (isinstance(args[1], Lit) and isinstance(args[1].value, float)):
                raise RuleParseError("near() threshold must be a number", args[1].offset)
        else:  # zone
            if len(args) != 1:
                raise RuleParseError("zone() takes exactly 1 argument", name_token.offset)


def _unquote(lexeme: str) -> str:
    body = lexeme[1:-1]
    return body.replace('\\"', '"').replace("\\\\", "\\")


def _quote(value: str) -> str:
    return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'


def parse(text: str) -> Node:
    """Parse one expression; total over valid inputs, rejects the rest with a
    byte-offset error."""
    return _Parser(tokenize(text)).parse_expression()


_OP_TEXT = {
    TokenKind.EQ: "==",
    TokenKind.NE: "!=",
    TokenKind.LT: "<",
    TokenKind.LE: "<=",
    TokenKind.GT: ">",
    TokenKind.GE: ">=",
}


def format_ast(node: Node) -> str:
    """Canonical fully parenthesized text; parse(format_ast(a)) equals a."""
    if isinstance(node, Or):
        return f"({format_ast(node.left)} || {format_ast(node.right)})"
    if isinstance(node, And):
        return f"({format_ast(node.left)} && {format_ast(node.right)})"
    if isinstance(node, Not):
        return f"!{format_ast(node.operand)}"
    if isinstance(node, Compare):
        return f"({format_ast(node.left)} {_OP_TEXT[node.op]} {format_ast(node.right)})"
    if isinstance(node, Call):
        return f"{node.name}({', '.join(format_ast(a) for a in node.args)})"
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Lit):
        value = node.value
        if isinstance(value, bool):
            return "true" if value else "false"
        if isinstance(value, float):
            return str(int(value)) if value.is_integer() else repr(value)
        if isinstance(value, EnumName):
            return value.name
        return _quote(value)
    raise TypeError(f"not an AST node: {node!r}")


_ABSENT = object()


def evaluate(node: Node, state: ContextState, fingerprint: Fingerprint | None = None) -> bool:
    """Evaluate a parsed expression against a context snapshot.

    ``fingerprint`` backs near(); it defaults to the state's own networks.
    """
    if fingerprint is None:
        fingerprint = state.networks
    result = _eval(node, state, fingerprint)
    return bool(result) if result is not _ABSENT else False


def _normalize(value):
    if isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    return value


def _eval(node: Node, state: ContextState, fp: Fingerprint):
    if isinstance(node, Lit):
        return _normalize(node.value)
    if isinstance(node, Var):
        reader = VARIABLES.get(node.name)
        if reader is None:
            raise RuleEvalError(f"unknown variable {node.name!r}", node.offset)
        value = reader(state)
        return _ABSENT if value is None else _normalize(value)
    if isinstance(node, Or):
        return _bool_operand(node.left, state, fp) or _bool_operand(node.right, state, fp)
    if isinstance(node, And):
        return _bool_operand(node.left, state, fp) and _bool_operand(node.right, state, fp)
    if isinstance(node, Not):
        return not _bool_operand(node.operand, state, fp)
    if isinstance(node, Compare):
        return _compare(node, state, fp)
    if isinstance(node, Call):
        if node.name == "near":
            return _near(node, fp)
        return _zone(node, state)
    raise TypeError(f"not an AST node: {node!r}")


def _bool_operand(node: Node, state: ContextState, fp: Fingerprint) -> bool:
    value = _eval(node, state, fp)
    if value is _ABSENT:
        return False
    if not isinstance(value, bool):
        raise RuleEvalError(f"expected a boolean, got {_tag(value)}", node.offset)
    return value


def _tag(value) -> str:
    if isinstance(value, bool):
        return "boolean"
    if isinstance(value, float) or isinstance(value, int):
        return "number"
    if isinstance(value, EnumName):
        return f"enum {value.name}"
    return "text"


def _compare(node: Compare, state: ContextState, fp: Fingerprint) -> bool:
    left = _eval(node.left, state, fp)
    right = _eval(node.right, state, fp)
    if left is _ABSENT or right is _ABSENT:
        return False  # three-valued collapse
    ordered = node.op in (TokenKind.LT, TokenKind.LE, TokenKind.GT, TokenKind.GE)
    if type(left) is not type(right):
        raise RuleEvalError(f"cannot compare {_tag(left)} with {_tag(right)}", node.offset)
    if ordered:
        if not isinstance(left, float) or isinstance(left, bool):
            raise RuleEvalError(f"ordering comparison needs numbers, got {_tag(left)}", node.offset)
        return {
            TokenKind.LT: left < right,
            TokenKind.LE: left <= right,
            TokenKind.GT: left > right,
            TokenKind.GE: left >= right,
        }[node.op]
    equal = left == right
    return equal if node.op is TokenKind.EQ else not equal


def _near(node: Call, fp: Fingerprint) -> bool:
    pattern = node.args[0].value
    min_rssi = node.args[1].value if len(node.args) == 2 else -90.0
    try:
        mac = canonical_mac(pattern)
    except ValueError:
        mac = None
    for obs in fp.observations:
        if mac is not None:
            hit = obs.mac == mac
        elif pattern.endswith("*"):
            hit = obs.ssid.startswith(pattern[:-1])
        else:
            hit = obs.ssid == pattern
        if hit and obs.rssi >= min_rssi:
            return True
    return False


def _zone(node: Call, state: ContextState) -> bool:
    arg = node.args[0]
    if isinstance(arg, Lit):
        zone_id = arg.value.name if isinstance(arg.value, EnumName) else str(arg.value)
    else:  # Var: the identifier itself is the zone id, not a variable lookup
        zone_id = arg.name
    return bool(state.zones.get(zone_id, False))
