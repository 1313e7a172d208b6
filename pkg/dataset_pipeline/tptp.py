"""
Parser for the FOF dialect of TPTP problem files.

Only `fof(...)` and `include(...)` are accepted; the clausal and typed
dialects (cnf, tff, thf, tcf, tpi) are rejected with UnsupportedDialectError
instead of being mis-read. Formulas become a term tree that `to_tptp`
serializes fully parenthesised, so parse(to_tptp(f)) == f.
"""
import logging
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import List, Optional, Set, Tuple, Union

logger = logging.getLogger(__name__)


class TptpSyntaxError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class UnsupportedDialectError(ValueError):
    def __init__(self, construct: str, line: int = 0):
        super().__init__(f"unsupported TPTP dialect '{construct}' (line {line}); only fof is supported")
        self.construct = construct
        self.line = line


class ProblemStructureError(ValueError):
    """Raised when a problem does not have exactly one conjecture, or an include cannot be resolved."""


# -------------------------------------------------------------------
# Term tree
# -------------------------------------------------------------------

@dataclass(frozen=True)
class Variable:
    name: str


@dataclass(frozen=True)
class Constant:
    name: str


@dataclass(frozen=True)
class FunctionApp:
    name: str
    args: Tuple["Term", ...]


Term = Union[Variable, Constant, FunctionApp]


@dataclass(frozen=True)
class Atom:
    predicate: str
    args: Tuple[Term, ...] = ()


@dataclass(frozen=True)
class Equality:
    left: Term
    right: Term
    negated: bool = False


@dataclass(frozen=True)
class TruthConstant:
    value: bool


@dataclass(frozen=True)
class Not:
    body: "Formula"


@dataclass(frozen=True)
class Binary:
    op: str  # one of BINARY_OPS
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Quantified:
    quantifier: str  # "!" (forall) or "?" (exists)
    variables: Tuple[str, ...]
    body: "Formula"


Formula = Union[Atom, Equality, TruthConstant, Not, Binary, Quantified]

NONASSOC_OPS = ("<=>", "<~>", "=>", "<=", "~|", "~&")
BINARY_OPS = NONASSOC_OPS + ("|", "&")


class FormulaRole(str, Enum):
    AXIOM = "Axiom"
    CONJECTURE = "Conjecture"
    HYPOTHESIS = "Hypothesis"
    OTHER = "Other"


# TPTP roles that state background facts
AXIOM_ROLES = {"axiom", "definition", "assumption", "lemma", "theorem", "corollary"}


def classify_role(role_name: str) -> FormulaRole:
    if role_name in AXIOM_ROLES:
        return FormulaRole.AXIOM
    if role_name == "conjecture":
        return FormulaRole.CONJECTURE
    if role_name == "hypothesis":
        return FormulaRole.HYPOTHESIS
    return FormulaRole.OTHER


@dataclass(frozen=True)
class AnnotatedFormula:
    label: str
    role: FormulaRole
    role_name: str
    formula: Formula
    source_text: str
    annotations: Optional[str] = None
    origin: str = ""  # file the formula was read from ("" for the main text)

    def to_tptp(self) -> str:
        tail = f", {self.annotations}" if self.annotations else ""
        return f"fof({self.label}, {self.role_name}, {to_tptp(self.formula)}{tail})."


@dataclass
class TptpProblem:
    name: str
    domain: str
    formulas: List[AnnotatedFormula] = field(default_factory=list)

    @property
    def conjectures(self) -> List[AnnotatedFormula]:
        return [f for f in self.formulas if f.role is FormulaRole.CONJECTURE]

    @property
    def premises(self) -> List[AnnotatedFormula]:
        return [f for f in self.formulas if f.role in (FormulaRole.AXIOM, FormulaRole.HYPOTHESIS)]

    def validate(self) -> None:
        count = len(self.conjectures)
        if count != 1:
            raise ProblemStructureError(f"problem {self.name or '<unnamed>'} has {count} conjectures, expected 1")

    def axioms_text(self) -> str:
        return "\n".join(f.source_text for f in self.premises)

    def conjecture_text(self) -> str:
        return "\n".join(f.source_text for f in self.conjectures)


# -------------------------------------------------------------------
# Serialization
# -------------------------------------------------------------------

def term_to_tptp(term: Term) -> str:
    if isinstance(term, FunctionApp):
        return f"{term.name}({','.join(term_to_tptp(a) for a in term.args)})"
    return term.name


def to_tptp(formula: Formula) -> str:
    if isinstance(formula, Atom):
        if not formula.args:
            return formula.predicate
        return f"{formula.predicate}({','.join(term_to_tptp(a) for a in formula.args)})"
    if isinstance(formula, Equality):
        op = "!=" if formula.negated else "="
        return f"{term_to_tptp(formula.left)} {op} {term_to_tptp(formula.right)}"
    if isinstance(formula, TruthConstant):
        return "$true" if formula.value else "$false"
    if isinstance(formula, Not):
        return f"~ {to_tptp(formula.body)}"
    if isinstance(formula, Binary):
        return f"({to_tptp(formula.left)} {formula.op} {to_tptp(formula.right)})"
    if isinstance(formula, Quantified):
        return f"{formula.quantifier} [{','.join(formula.variables)}] : {to_tptp(formula.body)}"
    raise TypeError(f"not a formula: {formula!r}")


# -------------------------------------------------------------------
# Lexer
# -------------------------------------------------------------------

@dataclass(frozen=True)
class Token:
    kind: str
    value: str
    line: int
    column: int
    offset: int


OPERATORS = ("<=>", "<~>", "=>", "<=", "~|", "~&", "!=", "=", "~", "&", "|", "!", "?")
PUNCT = {"(": "LPAREN", ")": "RPAREN", "[": "LBRACK", "]": "RBRACK", ",": "COMMA", ".": "DOT", ":": "COLON"}
_NUMBER = re.compile(r"[+-]?\d+(?:/\d+|\.\d+(?:[eE][+-]?\d+)?)?")


class Lexer:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.line = 1
        self.col = 1

    def error(self, message: str) -> TptpSyntaxError:
        return TptpSyntaxError(message, self.line, self.col)

    def advance(self, n: int) -> None:
        for ch in self.text[self.pos:self.pos + n]:
            if ch == "\n":
                self.line += 1
                self.col = 1
            else:
                self.col += 1
        self.pos += n

    def skip_ws_and_comments(self) -> None:
        while self.pos < len(self.text):
            ch = self.text[self.pos]
            if ch.isspace():
                self.advance(1)
            elif ch == "%":
                end = self.text.find("\n", self.pos)
                self.advance((len(self.text) if end < 0 else end) - self.pos)
            elif self.text.startswith("/*", self.pos):
                end = self.text.find("*/", self.pos + 2)
                if end < 0:
                    raise self.error("unterminated block comment")
                self.advance(end + 2 - self.pos)
            else:
                break

    def _quoted(self, quote: str) -> str:
        i = self.pos + 1
        while i < len(self.text):
            if self.text[i] == "\\":
                i += 2
                continue
            if self.text[i] == quote:
                return self.text[self.pos:i + 1]
            i += 1
        raise self.error(f"unterminated {quote}-quoted token")

    def next_token(self) -> Token:
        self.skip_ws_and_comments()
        line, col, start = self.line, self.col, self.pos
        if self.pos >= len(self.text):
            return Token("EOF", "", line, col, start)
        ch = self.text[self.pos]
        if ch in "'\"":
            value = self._quoted(ch)
            self.advance(len(value))
            return Token("SQUOTE" if ch == "'" else "DQUOTE", value, line, col, start)
        if ch in PUNCT:
            self.advance(1)
            return Token(PUNCT[ch], ch, line, col, start)
        for op in OPERATORS:
            if self.text.startswith(op, self.pos):
                self.advance(len(op))
                return Token("OP", op, line, col, start)
        if ch.isalpha() or ch == "$":
            m = re.compile(r"\$\$?[a-z][A-Za-z0-9_]*|[A-Za-z][A-Za-z0-9_]*").match(self.text, self.pos)
            if not m:
                raise self.error(f"unexpected character {ch!r}")
            word = m.group(0)
            self.advance(len(word))
            if word.startswith("$"):
                kind = "DOLLAR"
            else:
                kind = "UPPER" if word[0].isupper() else "LOWER"
            return Token(kind, word, line, col, start)
        m = _NUMBER.match(self.text, self.pos)
        if m:
            self.advance(len(m.group(0)))
            return Token("NUMBER", m.group(0), line, col, start)
        raise self.error(f"unexpected character {ch!r}")


# -------------------------------------------------------------------
# Parser
# -------------------------------------------------------------------

UNSUPPORTED_DIALECTS = ("cnf", "tff", "thf", "tcf", "tpi")


class Parser:
    def __init__(self, text: str):
        self.text = text
        self.lexer = Lexer(text)
        self.current = self.lexer.next_token()

    def error(self, message: str, token: Optional[Token] = None) -> TptpSyntaxError:
        token = token or self.current
        return TptpSyntaxError(message, token.line, token.column)

    def eat(self, kind: str, value: Optional[str] = None) -> Token:
        token = self.current
        if token.kind != kind or (value is not None and token.value != value):
            wanted = value or kind
            raise self.error(f"expected {wanted}, got {token.value or token.kind!r}")
        self.current = self.lexer.next_token()
        return token

    def at_op(self, *ops: str) -> bool:
        return self.current.kind == "OP" and self.current.value in ops

    # -- formulas --------------------------------------------------

    def parse_formula(self) -> Formula:
        left = self.parse_or()
        if self.at_op(*NONASSOC_OPS):
            op = self.eat("OP").value
            right = self.parse_or()
            if self.at_op(*NONASSOC_OPS):
                raise self.error(f"'{op}' is non-associative; add parentheses")
            return Binary(op, left, right)
        return left

    def parse_or(self) -> Formula:
        left = self.parse_and()
        while self.at_op("|"):
            self.eat("OP")
            left = Binary("|", left, self.parse_and())
        return left

    def parse_and(self) -> Formula:
        left = self.parse_unit()
        while self.at_op("&"):
            self.eat("OP")
            left = Binary("&", left, self.parse_unit())
        return left

    def parse_unit(self) -> Formula:
        token = self.current
        if self.at_op("~"):
            self.eat("OP")
            return Not(self.parse_unit())
        if self.at_op("!", "?"):
            quantifier = self.eat("OP").value
            self.eat("LBRACK")
            variables = [self.eat("UPPER").value]
            while self.current.kind == "COMMA":
                self.eat("COMMA")
                variables.append(self.eat("UPPER").value)
            self.eat("RBRACK")
            self.eat("COLON")
            return Quantified(quantifier, tuple(variables), self.parse_unit())
        if token.kind == "LPAREN":
            self.eat("LPAREN")
            inner = self.parse_formula()
            self.eat("RPAREN")
            return inner
        return self.parse_atomic()

    def parse_atomic(self) -> Formula:
        token = self.current
        if token.kind == "DOLLAR" and token.value in ("$true", "$false") and not self._next_is_infix_eq():
            self.eat("DOLLAR")
            return TruthConstant(token.value == "$true")
        left = self.parse_term()
        if self.at_op("=", "!="):
            op = self.eat("OP").value
            right = self.parse_term()
            return Equality(left, right, negated=(op == "!="))
        if isinstance(left, Variable):
            raise self.error("a variable cannot stand alone as a formula", token)
        if isinstance(left, FunctionApp):
            return Atom(left.name, left.args)
        if token.kind in ("NUMBER", "DQUOTE"):
            raise self.error(f"{token.value} cannot be a predicate", token)
        return Atom(left.name)

    def _next_is_infix_eq(self) -> bool:
        rest = self.text[self.current.offset + len(self.current.value):].lstrip()
        return rest.startswith("=") and not rest.startswith("=>") or rest.startswith("!=")

    def parse_term(self) -> Term:
        token = self.current
        if token.kind == "UPPER":
            self.eat("UPPER")
            return Variable(token.value)
        if token.kind in ("LOWER", "SQUOTE", "DOLLAR"):
            self.eat(token.kind)
            if self.current.kind == "LPAREN":
                self.eat("LPAREN")
                args = [self.parse_term()]
                while self.current.kind == "COMMA":
                    self.eat("COMMA")
                    args.append(self.parse_term())
                self.eat("RPAREN")
                return FunctionApp(token.value, tuple(args))
            return Constant(token.value)
        if token.kind in ("NUMBER", "DQUOTE"):
            self.eat(token.kind)
            return Constant(token.value)
        raise self.error(f"expected a term, got {token.value or token.kind!r}")

    # -- annotated formulas ----------------------------------------

    def parse_name(self) -> str:
        if self.current.kind in ("LOWER", "SQUOTE", "NUMBER"):
            return self.eat(self.current.kind).value
        raise self.error(f"expected a formula name, got {self.current.value or self.current.kind!r}")

    def skip_annotations(self) -> Optional[str]:
        """Consume `, source[, info]` up to the closing paren; return the raw text."""
        if self.current.kind != "COMMA":
            return None
        self.eat("COMMA")
        start = self.current.offset
        depth = 0
        while True:
            token = self.current
            if token.kind == "EOF":
                raise self.error("unterminated annotations")
            if token.kind in ("LPAREN", "LBRACK"):
                depth += 1
            elif token.kind in ("RPAREN", "RBRACK"):
                if depth == 0:
                    return self.text[start:token.offset].strip()
                depth -= 1
            self.current = self.lexer.next_token()

    def parse_fof(self, origin: str) -> AnnotatedFormula:
        start = self.eat("LOWER", "fof")
        self.eat("LPAREN")
        label = self.parse_name()
        self.eat("COMMA")
        role_name = self.eat("LOWER").value
        self.eat("COMMA")
        formula = self.parse_formula()
        annotations = self.skip_annotations()
        self.eat("RPAREN")
        end = self.eat("DOT")
        return AnnotatedFormula(
            label=label,
            role=classify_role(role_name),
            role_name=role_name,
            formula=formula,
            source_text=self.text[start.offset:end.offset + 1],
            annotations=annotations,
            origin=origin,
        )

    def parse_include(self) -> Tuple[str, Optional[List[str]]]:
        self.eat("LOWER", "include")
        self.eat("LPAREN")
        path = self.eat("SQUOTE").value[1:-1]
        names: Optional[List[str]] = None
        if self.current.kind == "COMMA":
            self.eat("COMMA")
            self.eat("LBRACK")
            names = []
            if self.current.kind != "RBRACK":
                names.append(self.parse_name())
                while self.current.kind == "COMMA":
                    self.eat("COMMA")
                    names.append(self.parse_name())
            self.eat("RBRACK")
        self.eat("RPAREN")
        self.eat("DOT")
        return path, names

    def parse_inputs(self) -> List[Union[AnnotatedFormula, Tuple[str, Optional[List[str]]]]]:
        items: List[Union[AnnotatedFormula, Tuple[str, Optional[List[str]]]]] = []
        while self.current.kind != "EOF":
            token = self.current
            if token.kind == "LOWER" and token.value == "fof":
                items.append(self.parse_fof(origin=""))
            elif token.kind == "LOWER" and token.value == "include":
                items.append(self.parse_include())
            elif token.kind == "LOWER" and token.value in UNSUPPORTED_DIALECTS:
                raise UnsupportedDialectError(token.value, token.line)
            else:
                raise self.error(f"expected fof(...) or include(...), got {token.value or token.kind!r}")
        return items


# -------------------------------------------------------------------
# Public API
# -------------------------------------------------------------------

_PROBLEM_NAME = re.compile(r"^(?P<domain>[A-Z]{3})(?P<hundreds>\d)\d\d")


def domain_of(problem_name: str) -> str:
    """Domain code: three-letter TPTP domain plus the hundreds digit (GEO600+1 -> GEO6)."""
    m = _PROBLEM_NAME.match(Path(problem_name).name)
    if not m:
        return "unknown"
    return f"{m.group('domain')}{m.group('hundreds')}"


def parse_formula(text: str) -> Formula:
    parser = Parser(text)
    formula = parser.parse_formula()
    if parser.current.kind != "EOF":
        raise parser.error(f"unexpected trailing input {parser.current.value!r}")
    return formula


def _resolve_include(path: str, tptp_root: Optional[Path], base_dir: Optional[Path]) -> Path:
    for root in (tptp_root, base_dir):
        if root is not None and (Path(root) / path).is_file():
            return Path(root) / path
    raise ProblemStructureError(f"cannot resolve include '{path}' (TPTP root: {tptp_root})")


def _parse_text(
    text: str,
    origin: str,
    tptp_root: Optional[Path],
    base_dir: Optional[Path],
    seen: Set[Path],
) -> List[AnnotatedFormula]:
    formulas: List[AnnotatedFormula] = []
    for item in Parser(text).parse_inputs():
        if isinstance(item, AnnotatedFormula):
            formulas.append(item if not origin else replace(item, origin=origin))
            continue
        path, names = item
        resolved = _resolve_include(path, tptp_root, base_dir).resolve()
        if resolved in seen:
            raise ProblemStructureError(f"include cycle through {resolved}")
        included = _parse_text(
            resolved.read_text(encoding="utf-8"), path, tptp_root, resolved.parent, seen | {resolved}
        )
        if names is not None:
            wanted = set(names)
            included = [f for f in included if f.label in wanted]
            missing = wanted - {f.label for f in included}
            if missing:
                raise ProblemStructureError(f"include '{path}' has no formulas named {sorted(missing)}")
        formulas.extend(included)
    return formulas


def parse_tptp(
    text: str,
    name: str = "",
    tptp_root: Optional[Path] = None,
    base_dir: Optional[Path] = None,
    domain: Optional[str] = None,
) -> TptpProblem:
    """
    Parse a FOF problem. Includes resolve against `tptp_root` (then
    `base_dir`). No conjecture check here: call TptpProblem.validate().
    """
    root = Path(tptp_root) if tptp_root else None
    base = Path(base_dir) if base_dir else None
    formulas = _parse_text(text, "", root, base, set())
    return TptpProblem(name=name, domain=domain or domain_of(name), formulas=formulas)


def load_tptp_problem(path: Path, tptp_root: Optional[Path] = None, domain: Optional[str] = None) -> TptpProblem:
    path = Path(path)
    name = path.name
    for suffix in (".p", ".tptp"):
        if name.endswith(suffix):
            name = name[: -len(suffix)]
    return parse_tptp(path.read_text(encoding="utf-8"), name, tptp_root, path.parent, domain)
