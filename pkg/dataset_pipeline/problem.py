"""
LeanProblem: a translated theorem plus the provenance of how it was made.
"""
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Tuple

from prover.theorem import Theorem, TheoremOrigin, render_theorem_file


class StructureError(ValueError):
    """A draft without exactly one theorem declaration; goes to the manual review queue."""


@dataclass(frozen=True)
class Provenance:
    tptp_name: str
    translation_attempts: int = 0
    verified: bool = False
    optimized: bool = False
    archived_body: Optional[str] = None
    diagnostics: Tuple[str, ...] = ()
    notes: Tuple[str, ...] = ()

    def to_dict(self) -> Dict[str, Any]:
        return {
            "tptp_name": self.tptp_name,
            "translation_attempts": self.translation_attempts,
            "verified": self.verified,
            "optimized": self.optimized,
            "archived_body": self.archived_body,
            "diagnostics": list(self.diagnostics),
            "notes": list(self.notes),
        }


@dataclass(frozen=True)
class LeanProblem:
    theorem: Theorem
    imports: Tuple[str, ...] = ()
    provenance: Provenance = field(default_factory=lambda: Provenance(tptp_name=""))

    def file_text(self) -> str:
        """The theorem file as written to disk: header, imports, context, conjecture."""
        return render_theorem_file(replace(self.theorem, imports=self.imports))

    def with_provenance(self, **changes: Any) -> "LeanProblem":
        return replace(self, provenance=replace(self.provenance, **changes))

    def add_note(self, note: str) -> "LeanProblem":
        return self.with_provenance(notes=self.provenance.notes + (note,))


def unchecked_theorem(source: str, theorem_id: str, domain: str) -> Theorem:
    """Wrap a draft that may not have the right shape; postprocess decides."""
    return Theorem(
        id=theorem_id,
        domain=domain,
        context_source="",
        conjecture_source=source,
        origin=TheoremOrigin.TPTP_REVISED,
    )


def dedupe(lines: List[str]) -> Tuple[str, ...]:
    seen: List[str] = []
    for line in lines:
        line = line.strip()
        if line and line not in seen:
            seen.append(line)
    return tuple(seen)
