from __future__ import annotations

"""
Prompt templates for every model role.

Templates live in `prover/prompts/<name>.md`: YAML front matter (id, version,
role, requires, nonempty) followed by a Jinja2 body. The line `<<<USER>>>`
separates the system prompt from the user prompt.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Mapping, Tuple

import yaml
from enum import Enum

from jinja2 import Environment, StrictUndefined, Template, UndefinedError


class PromptRole(str, Enum):
    """Every model call in the pipeline carries exactly one role."""

    PROPOSE_AXIOMS = "ProposeAxioms"
    SYNTHESIZE_AXIOM = "SynthesizeAxiom"
    PROPOSE_STRATEGY = "ProposeStrategy"
    GENERATE_PROOF = "GenerateProof"
    ANNOTATE_SUBPROPOSITIONS = "AnnotateSubpropositions"
    ANALYZE_FAILURES = "AnalyzeFailures"
    TRANSLATE_TPTP = "TranslateTptp"
    OPTIMIZE_CONTEXT = "OptimizeContext"


PROMPTS_DIR = Path(__file__).parent / "prompts"
USER_MARKER = "<<<USER>>>"

TEMPLATE_FILES: Dict[PromptRole, str] = {
    PromptRole.PROPOSE_AXIOMS: "propose_axioms.md",
    PromptRole.SYNTHESIZE_AXIOM: "synthesize_axiom.md",
    PromptRole.PROPOSE_STRATEGY: "propose_strategy.md",
    PromptRole.GENERATE_PROOF: "generate_proof.md",
    PromptRole.ANNOTATE_SUBPROPOSITIONS: "annotate_subpropositions.md",
    PromptRole.ANALYZE_FAILURES: "analyze_failures.md",
    PromptRole.TRANSLATE_TPTP: "translate_tptp.md",
    PromptRole.OPTIMIZE_CONTEXT: "optimize_context.md",
}

_JINJA_ENV = Environment(
    autoescape=False,
    trim_blocks=True,
    lstrip_blocks=True,
    keep_trailing_newline=False,
    undefined=StrictUndefined,
)
_TEMPLATE_CACHE: Dict[PromptRole, "PromptTemplate"] = {}


class TemplateError(KeyError):
    """Raised when a template is missing a context field or cannot render."""

    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    metadata: Mapping[str, Any]
    system: Template
    user: Template

    @property
    def required_fields(self) -> Tuple[str, ...]:
        return tuple(str(f) for f in self.metadata.get("requires", ()) or ())

    @property
    def nonempty_fields(self) -> Tuple[str, ...]:
        return tuple(str(f) for f in self.metadata.get("nonempty", ()) or ())

    @property
    def version(self) -> int:
        return int(self.metadata.get("version", 1))

    def render(self, context: Mapping[str, Any]) -> Tuple[str, str]:
        missing = [f for f in self.required_fields if f not in context]
        if missing:
            raise TemplateError(f"template '{self.name}' is missing required field(s): {', '.join(missing)}")
        empty = [f for f in self.nonempty_fields if not context.get(f)]
        if empty:
            raise TemplateError(f"template '{self.name}' requires non-empty field(s): {', '.join(empty)}")
        try:
            return self.system.render(**context).strip(), self.user.render(**context).strip()
        except UndefinedError as exc:
            raise TemplateError(f"template '{self.name}': {exc.message}") from exc


def _parse_template(name: str, text: str) -> PromptTemplate:
    lines = text.splitlines()
    if not lines or lines[0].strip() != "---":
        raise TemplateError(f"template '{name}' has no YAML front matter")
    for index in range(1, len(lines)):
        if lines[index].strip() == "---":
            metadata = yaml.safe_load("\n".join(lines[1:index])) or {}
            body = "\n".join(lines[index + 1:])
            break
    else:
        raise TemplateError(f"template '{name}' has unterminated front matter")
    if USER_MARKER not in body:
        raise TemplateError(f"template '{name}' has no {USER_MARKER} section")
    system_body, user_body = body.split(USER_MARKER, 1)
    return PromptTemplate(
        name=name,
        metadata=metadata,
        system=_JINJA_ENV.from_string(system_body),
        user=_JINJA_ENV.from_string(user_body),
    )


def load_template(role: PromptRole) -> PromptTemplate:
    if role not in _TEMPLATE_CACHE:
        filename = TEMPLATE_FILES[role]
        path = PROMPTS_DIR / filename
        _TEMPLATE_CACHE[role] = _parse_template(filename, path.read_text(encoding="utf-8"))
    return _TEMPLATE_CACHE[role]


def render_prompt(role: PromptRole, context: Mapping[str, Any]) -> Tuple[str, str]:
    """Render (system_text, user_text) for a role. Pure in (role, context)."""
    return load_template(role).render(context)


def clear_cache() -> None:
    _TEMPLATE_CACHE.clear()
