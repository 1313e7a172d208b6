"""
The Theorem record shared by the prover, the dataset pipeline and the harness.

A theorem file on disk is a Lean 4 source file: optional `-- key: value`
header lines, import lines, context declarations, and exactly one
`theorem` declaration whose body is the placeholder.
"""
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from .lean_source import (
    read_header,
    split_declarations,
    split_imports,
    strip_axiom_declarations,
    THEOREM_KINDS,
)


class TheoremStructureError(ValueError):
    """Raised when a source does not contain exactly one theorem declaration."""


class TheoremOrigin(str, Enum):
    TPTP_REVISED = "TptpRevised"
    MANUAL = "Manual"


@dataclass(frozen=True)
class Theorem:
    id: str
    domain: str
    context_source: str
    conjecture_source: str
    origin: TheoremOrigin = TheoremOrigin.TPTP_REVISED
    imports: Tuple[str, ...] = field(default_factory=tuple)

    def check_structure(self) -> None:
        count = sum(1 for d in split_declarations(self.conjecture_source) if d.kind in THEOREM_KINDS)
        if count != 1:
            raise TheoremStructureError(
                f"theorem {self.id!r}: conjecture must contain exactly one theorem declaration, found {count}"
            )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "id": self.id,
            "domain": self.domain,
            "context_source": self.context_source,
            "conjecture_source": self.conjecture_source,
            "origin": self.origin.value,
            "imports": list(self.imports),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Theorem":
        return cls(
            id=data["id"],
            domain=data.get("domain", "unknown"),
            context_source=data.get("context_source", ""),
            conjecture_source=data["conjecture_source"],
            origin=TheoremOrigin(data.get("origin", TheoremOrigin.TPTP_REVISED.value)),
            imports=tuple(data.get("imports", ())),
        )


def theorem_from_source(
    source: str,
    theorem_id: Optional[str] = None,
    domain: Optional[str] = None,
    origin: Optional[TheoremOrigin] = None,
) -> Theorem:
    """
    Split a Lean file into imports, context and the single conjecture.
    Header fields fill in id/domain/origin when they are not given.
    """
    header = read_header(source)
    imports, body = split_imports(source)
    decls = split_declarations(body)
    theorems = [d for d in decls if d.kind in THEOREM_KINDS]
    if len(theorems) != 1:
        raise TheoremStructureError(
            f"expected exactly one theorem declaration, found {len(theorems)}"
        )
    context = "\n".join(d.text for d in decls if d.kind not in THEOREM_KINDS).strip("\n")
    theorem_id = theorem_id or header.get("id") or theorems[0].name
    if not theorem_id:
        raise TheoremStructureError("theorem has no id and no declaration name")
    if origin is None:
        origin = TheoremOrigin(header.get("origin", TheoremOrigin.TPTP_REVISED.value))
    return Theorem(
        id=theorem_id,
        domain=domain or header.get("domain", "unknown"),
        context_source=context,
        conjecture_source=theorems[0].text.strip("\n"),
        origin=origin,
        imports=tuple(imports),
    )


def load_theorem(
    path: Path,
    theorem_id: Optional[str] = None,
    domain: Optional[str] = None,
    origin: Optional[TheoremOrigin] = None,
) -> Theorem:
    source = Path(path).read_text(encoding="utf-8")
    return theorem_from_source(source, theorem_id or None, domain, origin)


def render_theorem_file(theorem: Theorem) -> str:
    """Render a theorem as a self-describing Lean file (inverse of load_theorem)."""
    parts = [
        f"-- id: {theorem.id}",
        f"-- domain: {theorem.domain}",
        f"-- origin: {theorem.origin.value}",
    ]
    if theorem.imports:
        parts.append("\n".join(theorem.imports))
    if theorem.context_source.strip():
        parts.append("")
        parts.append(theorem.context_source.strip("\n"))
    parts.append("")
    parts.append(theorem.conjecture_source.strip("\n"))
    return "\n".join(parts) + "\n"


def strip_background_axioms(theorem: Theorem) -> Theorem:
    """Drop `axiom` declarations from the context (background-restriction runs)."""
    return replace(theorem, context_source=strip_axiom_declarations(theorem.context_source))
