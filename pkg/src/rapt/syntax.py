"""Concrete syntax: tokenizer, parser, and source-file loader.

Grammar (loosest to tightest): `+` choice, `t <| u` priority filter,
`||` / `|` / `&` parallel family (left associative, one level), `.`
sequence, then atoms: event labels (lowercase identifiers), `e[m]`
histories, `delta`, `tau`, `tau[m]`, `theta(t)`, `enc{H}(t)`,
`hide{I}(t)`, `<X|Spec>` recursion references, parentheses.  Uppercase
identifiers are recursion variables and only make sense inside a
specification body.  `#` starts a comment.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .recursion import RecSpec, UndefinedVariable
from .terms import (
    Abstract,
    Between,
    Choice,
    Comm,
    ConflictElim,
    Delta,
    Encap,
    Event,
    Par,
    RecRef,
    Seq,
    Signature,
    Tau,
    Term,
    TermError,
    UnknownLabel,
    Unless,
    canonicalize,
    render,
)

__all__ = [
    "parse_term",
    "parse_spec",
    "parse_source",
    "render",
    "SourceFile",
    "DuplicateVariable",
    "UndefinedVariable",
]


class DuplicateVariable(TermError):
    """Two equations in one specification bind the same variable."""


_SYMBOLS = ("||", "<|", "+", ".", "(", ")", "{", "}", "[", "]", ",", "|", "&", "<", ">", "=", ";")


@dataclass(frozen=True)
class _Tok:
    kind: str  # IDENT, INT, symbol text, EOF
    value: str
    line: int
    col: int


def _err(tok, expected):
    raise SyntaxError(f"{tok.line}:{tok.col}: expected {expected}, found {tok.value or tok.kind!r}")


def _tokenize(text: str):
    toks = []
    line, col, i = 1, 1, 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch == "#":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            toks.append(_Tok("IDENT", text[i:j], line, col))
            col += j - i
            i = j
            continue
        if ch.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            toks.append(_Tok("INT", text[i:j], line, col))
            col += j - i
            i = j
            continue
        two = text[i : i + 2]
        if two in ("||", "<|"):
            toks.append(_Tok(two, two, line, col))
            i += 2
            col += 2
            continue
        if ch in "+.(){}[],|&<>=;":
            toks.append(_Tok(ch, ch, line, col))
            i += 1
            col += 1
            continue
        raise SyntaxError(f"{line}:{col}: unexpected character {ch!r}")
    toks.append(_Tok("EOF", "", line, col))
    return toks


class _Parser:
    """Recursive descent over the token list.  When spec_name is set,
    uppercase identifiers resolve to <Var|spec_name> references against
    spec_vars."""

    def __init__(self, toks, spec_name=None, spec_vars=None):
        self.toks = toks
        self.pos = 0
        self.spec_name = spec_name
        self.spec_vars = spec_vars or set()

    def peek(self):
        return self.toks[self.pos]

    def take(self, kind=None):
        tok = self.toks[self.pos]
        if kind is not None and tok.kind != kind:
            _err(tok, repr(kind))
        self.pos += 1
        return tok

    def parse_expr(self) -> Term:
        return self.parse_choice()

    def parse_choice(self) -> Term:
        parts = [self.parse_unless()]
        while self.peek().kind == "+":
            self.take()
            parts.append(self.parse_unless())
        return parts[0] if len(parts) == 1 else Choice(tuple(parts))

    def parse_unless(self) -> Term:
        node = self.parse_parallel()
        while self.peek().kind == "<|":
            self.take()
            node = Unless(node, self.parse_parallel())
        return node

    def parse_parallel(self) -> Term:
        node = self.parse_seq()
        grown = False  # whether node is a Par built in this loop
        while self.peek().kind in ("||", "|", "&"):
            op = self.take().kind
            rhs = self.parse_seq()
            if op == "||":
                if grown:
                    node = Par(node.args + (rhs,))
                else:
                    node = Par((node, rhs))
                    grown = True
            elif op == "|":
                node = Comm(node, rhs)
                grown = False
            else:
                node = Between(node, rhs)
                grown = False
        return node

    def parse_seq(self) -> Term:
        parts = [self.parse_atom()]
        while self.peek().kind == ".":
            self.take()
            parts.append(self.parse_atom())
        return parts[0] if len(parts) == 1 else Seq(tuple(parts))

    def parse_atom(self) -> Term:
        tok = self.peek()
        if tok.kind == "(":
            self.take()
            node = self.parse_expr()
            self.take(")")
            return node
        if tok.kind == "<":
            self.take()
            var = self.take("IDENT").value
            self.take("|")
            spec = self.take("IDENT").value
            self.take(">")
            return RecRef(var, spec)
        if tok.kind == "IDENT":
            name = self.take().value
            if name == "delta":
                return Delta()
            if name == "tau":
                return Tau(self._optional_key())
            if name == "theta":
                self.take("(")
                node = self.parse_expr()
                self.take(")")
                return ConflictElim(node)
            if name in ("enc", "hide"):
                labels = self._label_set()
                self.take("(")
                node = self.parse_expr()
                self.take(")")
                cls = Encap if name == "enc" else Abstract
                return cls(frozenset(labels), node)
            if name[:1].isupper():
                if self.spec_name is not None and name in self.spec_vars:
                    return RecRef(name, self.spec_name)
                raise UndefinedVariable(
                    f"{tok.line}:{tok.col}: variable {name!r} has no equation"
                )
            return Event(name, self._optional_key())
        _err(tok, "a term")

    def _optional_key(self):
        if self.peek().kind == "[":
            self.take()
            key = int(self.take("INT").value)
            self.take("]")
            if key < 1:
                raise SyntaxError("step keys are positive")
            return key
        return None

    def _label_set(self):
        self.take("{")
        labels = []
        if self.peek().kind == "IDENT":
            labels.append(self.take().value)
            while self.peek().kind == ",":
                self.take()
                labels.append(self.take("IDENT").value)
        self.take("}")
        return labels

    def expect_eof(self):
        tok = self.peek()
        if tok.kind != "EOF":
            _err(tok, "end of input")


def _check_labels_deep(t: Term, sig: Signature):
    match t:
        case Event(label=lb):
            if lb not in sig.alphabet:
                raise UnknownLabel(f"event {lb!r} is not in the alphabet")
        case Encap(labels=ls) | Abstract(labels=ls):
            for lb in ls:
                if lb not in sig.alphabet:
                    raise UnknownLabel(f"label {lb!r} is not in the alphabet")
    from .terms import children

    for c in children(t):
        _check_labels_deep(c, sig)


def parse_term(text: str, sig: Signature | None = None) -> Term:
    """Parse a closed term; the result is canonicalized.  With a signature,
    every mentioned label must belong to its alphabet."""
    p = _Parser(_tokenize(text))
    node = p.parse_expr()
    p.expect_eof()
    node = canonicalize(node)
    if sig is not None:
        _check_labels_deep(node, sig)
    return node


def _equation_chunks(text: str):
    for raw_line in text.splitlines():
        for chunk in raw_line.split(";"):
            if chunk.split("#", 1)[0].strip():
                yield chunk


def parse_spec(text: str, sig: Signature | None = None, name: str = "E") -> RecSpec:
    """Parse `X = body` equations (newline or `;` separated) into a named
    specification.  Uppercase identifiers in bodies refer to the equations
    declared in the same text."""
    heads = []
    for chunk in _equation_chunks(text):
        toks = _tokenize(chunk)
        if toks[0].kind != "IDENT" or not toks[0].value[:1].isupper():
            _err(toks[0], "a recursion variable")
        if toks[1].kind != "=":
            _err(toks[1], "'='")
        heads.append((toks[0].value, toks))
    declared = set()
    for var, _ in heads:
        if var in declared:
            raise DuplicateVariable(f"variable {var!r} defined twice")
        declared.add(var)
    equations = {}
    for var, toks in heads:
        p = _Parser(toks, spec_name=name, spec_vars=declared)
        p.pos = 2  # past `X =`
        body = p.parse_expr()
        p.expect_eof()
        if sig is not None:
            _check_labels_deep(body, sig)
        equations[var] = body
    if not equations:
        raise SyntaxError("1:1: specification has no equations")
    return RecSpec(name, equations)


@dataclass(frozen=True)
class SourceFile:
    """A `.rapt` file: one signature, named specifications, named terms."""

    signature: Signature
    specs: dict = field(default_factory=dict)
    terms: dict = field(default_factory=dict)


def _parse_signature_lines(lines) -> Signature:
    alphabet = set()
    gamma = {}
    conflict = set()
    priority = set()
    for lineno, ln in lines:
        words = ln.replace(",", " ").split()
        if words[0] == "alphabet":
            alphabet.update(words[1:])
        elif words[0] == "gamma":
            if len(words) != 5 or words[3] != "=":
                raise SyntaxError(f"{lineno}:1: expected 'gamma a b = c'")
            gamma[(words[1], words[2])] = words[4]
        elif words[0] == "conflict":
            if len(words) != 3:
                raise SyntaxError(f"{lineno}:1: expected 'conflict a b'")
            conflict.add((words[1], words[2]))
        elif words[0] == "prio":
            if len(words) != 4 or words[2] != "<":
                raise SyntaxError(f"{lineno}:1: expected 'prio a < b'")
            priority.add((words[1], words[3]))
        else:
            raise SyntaxError(f"{lineno}:1: unknown signature directive {words[0]!r}")
    return Signature(frozenset(alphabet), gamma, frozenset(conflict), frozenset(priority))


def parse_source(text: str) -> SourceFile:
    """Load a sectioned source file: `[signature]`, `[spec NAME]`, `[terms]`."""
    sections = []  # (header, [(lineno, line)])
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        ln = raw.split("#", 1)[0].strip()
        if not ln:
            continue
        if ln.startswith("["):
            if not ln.endswith("]"):
                raise SyntaxError(f"{lineno}:1: malformed section header {ln!r}")
            current = (ln[1:-1].strip(), [])
            sections.append(current)
            continue
        if current is None:
            raise SyntaxError(f"{lineno}:1: content before any section header")
        current[1].append((lineno, ln))

    sig_lines = None
    spec_sections = []
    term_lines = []
    for header, lines in sections:
        if header == "signature":
            if sig_lines is not None:
                raise SyntaxError("1:1: duplicate [signature] section")
            sig_lines = lines
        elif header.startswith("spec"):
            parts = header.split()
            if len(parts) != 2 or not parts[1].isidentifier():
                raise SyntaxError("1:1: spec sections are headed '[spec NAME]'")
            spec_sections.append((parts[1], lines))
        elif header == "terms":
            term_lines.extend(lines)
        else:
            raise SyntaxError(f"1:1: unknown section {header!r}")
    if sig_lines is None:
        raise SyntaxError("1:1: missing [signature] section")

    sig = _parse_signature_lines(sig_lines)
    specs = {}
    for name, lines in spec_sections:
        if name in specs:
            raise SyntaxError(f"1:1: duplicate spec section {name!r}")
        body = "\n".join(ln for _, ln in lines)
        specs[name] = parse_spec(body, sig, name=name)

    terms = {}
    for lineno, ln in term_lines:
        lhs, eq, rhs = ln.partition("=")
        if not eq or not lhs.strip().isidentifier():
            raise SyntaxError(f"{lineno}:1: expected 'name = term'")
        tname = lhs.strip()
        if tname in terms:
            raise SyntaxError(f"{lineno}:1: duplicate term name {tname!r}")
        t = parse_term(rhs, sig)
        _check_recrefs(t, specs, lineno)
        terms[tname] = t
    return SourceFile(sig, specs, terms)


def _check_recrefs(t: Term, specs: dict, lineno: int):
    if isinstance(t, RecRef):
        if t.spec not in specs:
            raise UndefinedVariable(
                f"{lineno}:1: reference to unknown specification {t.spec!r}"
            )
        if t.var not in specs[t.spec].equations:
            raise UndefinedVariable(
                f"{lineno}:1: {t.spec} does not define {t.var!r}"
            )
    from .terms import children

    for c in children(t):
        _check_recrefs(c, specs, lineno)
