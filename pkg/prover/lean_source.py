"""
Lexical helpers for Lean 4 source files.

Nothing here elaborates Lean: declarations are recognised by their leading
keyword at column 0, and comments/strings are masked with a small scanner so
keyword searches do not fire inside them.
"""
import re
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

DECLARATION_KEYWORDS = (
    "theorem", "lemma", "axiom", "axioms", "def", "abbrev", "structure",
    "inductive", "class", "instance", "variable", "variables", "constant",
    "opaque", "example", "namespace", "end", "section", "open", "universe",
    "set_option", "attribute", "notation", "infix", "infixl", "infixr",
    "prefix", "postfix", "macro", "syntax", "mutual", "import",
)

DECLARATION_START = re.compile(
    r"^(?:@\[[^\]]*\]\s*)?"
    r"(?:(?:private|protected|noncomputable|unsafe|partial)\s+)*"
    r"(?P<kind>" + "|".join(DECLARATION_KEYWORDS) + r")\b\s*(?P<name>[^\s:({\[]*)"
)
HEADER_FIELD = re.compile(r"^--\s*(?P<key>[A-Za-z_]+)\s*:\s*(?P<value>.*?)\s*$")

PLACEHOLDER_BODY = "by\n  sorry"
THEOREM_KINDS = ("theorem", "lemma")


@dataclass(frozen=True)
class Declaration:
    kind: str  # keyword, or "preamble" for text before the first declaration
    name: str
    text: str


def code_mask(source: str) -> List[bool]:
    """
    Return a per-character mask that is True for code and False inside
    line comments, (nested) block comments and string literals.
    """
    mask = [True] * len(source)
    i = 0
    n = len(source)
    depth = 0
    while i < n:
        two = source[i:i + 2]
        if depth > 0:
            if two == "/-":
                depth += 1
                mask[i] = mask[i + 1] = False
                i += 2
                continue
            if two == "-/":
                depth -= 1
                mask[i] = mask[i + 1] = False
                i += 2
                continue
            mask[i] = False
            i += 1
            continue
        if two == "/-":
            depth = 1
            mask[i] = mask[i + 1] = False
            i += 2
            continue
        if two == "--":
            while i < n and source[i] != "\n":
                mask[i] = False
                i += 1
            continue
        if source[i] == '"':
            mask[i] = False
            i += 1
            while i < n and source[i] != '"':
                if source[i] == "\\" and i + 1 < n:
                    mask[i] = False
                    i += 1
                mask[i] = False
                i += 1
            if i < n:
                mask[i] = False
                i += 1
            continue
        i += 1
    return mask


def _is_ident_char(ch: str) -> bool:
    return ch.isalnum() or ch in "_'.!?"


def find_tokens(source: str, words: Tuple[str, ...]) -> List[Tuple[int, int, str]]:
    """
    Find whole-identifier occurrences of `words` in code regions.
    Returns (line, column, word) with 1-based lines and 0-based columns.
    """
    if not words:
        return []
    mask = code_mask(source)
    pattern = re.compile("|".join(re.escape(w) for w in sorted(words, key=len, reverse=True)))
    hits = []
    for m in pattern.finditer(source):
        start, end = m.start(), m.end()
        if not all(mask[start:end]):
            continue
        if start > 0 and _is_ident_char(source[start - 1]):
            continue
        if end < len(source) and _is_ident_char(source[end]):
            continue
        line = source.count("\n", 0, start) + 1
        column = start - (source.rfind("\n", 0, start) + 1)
        hits.append((line, column, m.group(0)))
    return hits


def split_declarations(source: str) -> List[Declaration]:
    """
    Split source into contiguous top-level chunks. Joining the chunk texts
    with "\\n" reproduces the input exactly.
    """
    lines = source.split("\n")
    mask = code_mask(source)
    chunks: List[Tuple[str, str, List[str]]] = []
    offset = 0
    for line in lines:
        match = DECLARATION_START.match(line)
        starts_in_code = bool(line) and offset < len(mask) and mask[offset]
        if match and starts_in_code:
            chunks.append((match.group("kind"), match.group("name"), [line]))
        elif chunks:
            chunks[-1][2].append(line)
        else:
            chunks.append(("preamble", "", [line]))
        offset += len(line) + 1
    return [Declaration(kind, name, "\n".join(body)) for kind, name, body in chunks]


def join_declarations(decls: List[Declaration]) -> str:
    return "\n".join(d.text for d in decls)


def read_header(source: str) -> Dict[str, str]:
    """Read `-- key: value` metadata lines at the very top of a file."""
    header: Dict[str, str] = {}
    for line in source.split("\n"):
        m = HEADER_FIELD.match(line)
        if not m:
            break
        header[m.group("key").lower()] = m.group("value")
    return header


def split_imports(source: str) -> Tuple[List[str], str]:
    """
    Separate import lines from the rest of the source. Leading comment and
    blank lines before the imports are dropped along with them.
    """
    imports: List[str] = []
    rest: List[Declaration] = []
    for decl in split_declarations(source):
        if decl.kind == "import":
            first, _, tail = decl.text.partition("\n")
            imports.append(first.strip())
            if tail.strip():
                rest.append(Declaration("preamble", "", tail))
        elif decl.kind == "preamble" and not imports and not rest and _is_comment_or_blank(decl.text):
            continue
        else:
            rest.append(decl)
    return imports, join_declarations(rest).strip("\n")


def _is_comment_or_blank(text: str) -> bool:
    return all(not line.strip() or line.lstrip().startswith("--") for line in text.split("\n"))


def theorem_declarations(source: str) -> List[Declaration]:
    return [d for d in split_declarations(source) if d.kind in THEOREM_KINDS]


def find_assign(text: str) -> Optional[int]:
    """Index of the first top-level `:=` outside comments and strings."""
    mask = code_mask(text)
    depth = 0
    for i, ch in enumerate(text):
        if not mask[i]:
            continue
        if ch in "([{⟨":
            depth += 1
        elif ch in ")]}⟩":
            depth = max(0, depth - 1)
        elif ch == ":" and depth == 0 and text[i + 1:i + 2] == "=":
            return i
    return None


def _normalise_ws(text: str) -> str:
    return " ".join(text.split())


def replace_proof_body(theorem_text: str, placeholder: str = PLACEHOLDER_BODY) -> Tuple[str, Optional[str]]:
    """
    Replace the body of a theorem declaration with the placeholder proof.
    Returns (new_text, archived_body); archived_body is None when the body
    already was a placeholder.
    """
    stripped = theorem_text.rstrip()
    trailing = theorem_text[len(stripped):]
    idx = find_assign(stripped)
    if idx is None:
        return f"{stripped} := {placeholder}{trailing}", None
    head = stripped[:idx].rstrip()
    body = stripped[idx + 2:].strip()
    archived = None if _normalise_ws(body) in ("sorry", "by sorry") else body
    return f"{head} := {placeholder}{trailing}", archived


def strip_axiom_declarations(source: str) -> str:
    kept = [d for d in split_declarations(source) if d.kind not in ("axiom", "axioms")]
    return join_declarations(kept)


def declaration_head(text: str) -> str:
    """Whitespace-normalised statement of a declaration (text before `:=`)."""
    idx = find_assign(text)
    head = text if idx is None else text[:idx]
    mask = code_mask(head)
    code = "".join(ch if mask[i] else " " for i, ch in enumerate(head))
    return _normalise_ws(code)
