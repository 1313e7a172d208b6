"""
Steps 2 and 3 of dataset construction.

postprocess: separate the conjecture from its context, reset the proof to
the placeholder and prepend the configured imports. Idempotent.

optimize_context: ask the model for a smaller context and keep it only when
it is a verbatim subset of the original and the file still compiles.
"""
import logging
from dataclasses import replace
from typing import List, Optional, Sequence

from prover.lean_source import (
    THEOREM_KINDS,
    join_declarations,
    replace_proof_body,
    split_declarations,
    split_imports,
)
from prover.llm_gateway import GatewayError, ModelGateway, PromptRole, extract_code_block
from prover.verifier import CheckerAdapter

from .problem import LeanProblem, StructureError, dedupe

logger = logging.getLogger(__name__)


def _draft_source(problem: LeanProblem) -> str:
    theorem = problem.theorem
    parts = list(problem.imports) + [""]
    if theorem.context_source.strip():
        parts += [theorem.context_source, ""]
    parts.append(theorem.conjecture_source)
    return "\n".join(parts)


def _strip_blank_edges(text: str) -> str:
    return text.strip("\n")


def postprocess(
    draft: LeanProblem,
    imports: Sequence[str] = ("import Mathlib",),
    verifier: Optional[CheckerAdapter] = None,
) -> LeanProblem:
    source = _draft_source(draft)
    draft_imports, body = split_imports(source)
    decls = split_declarations(body)
    theorems = [d for d in decls if d.kind in THEOREM_KINDS]
    if len(theorems) != 1:
        raise StructureError(
            f"{draft.theorem.id}: expected exactly one theorem declaration, found {len(theorems)}"
        )
    context = _strip_blank_edges(join_declarations([d for d in decls if d.kind not in THEOREM_KINDS]))
    conjecture, archived = replace_proof_body(_strip_blank_edges(theorems[0].text))

    merged_imports = dedupe(list(imports) + list(draft_imports))
    theorem = replace(
        draft.theorem,
        context_source=context,
        conjecture_source=conjecture,
        imports=merged_imports,
    )
    result = LeanProblem(
        theorem=theorem,
        imports=merged_imports,
        provenance=replace(
            draft.provenance,
            archived_body=archived if archived is not None else draft.provenance.archived_body,
        ),
    )
    if verifier is not None:
        verdict = verifier.compile_source(result.file_text(), theorem.id, allow_placeholders=True)
        result = result.with_provenance(verified=verdict.passed)
        if not verdict.passed:
            logger.warning("%s does not re-verify after post-processing", theorem.id)
    return result


def _context_blocks(context: str) -> List[str]:
    return [
        _strip_blank_edges(d.text)
        for d in split_declarations(context)
        if _strip_blank_edges(d.text)
    ]


def _without_imports(text: str) -> str:
    kept = []
    for decl in split_declarations(text):
        if decl.kind == "import":
            tail = decl.text.partition("\n")[2]
            if tail.strip():
                kept.append(tail)
        else:
            kept.append(decl.text)
    return "\n".join(kept)


def is_verbatim_subset(reduced: str, original: str) -> bool:
    """Every block of `reduced` appears byte-for-byte in `original`, in the same order."""
    remaining = iter(_context_blocks(original))
    return all(any(block == candidate for candidate in remaining) for block in _context_blocks(reduced))


def optimize_context(gateway: ModelGateway, verifier: CheckerAdapter, problem: LeanProblem) -> LeanProblem:
    if not problem.provenance.verified:
        return problem.with_provenance(optimized=False).add_note("optimize skipped: problem not verified")
    try:
        response = gateway.complete(PromptRole.OPTIMIZE_CONTEXT, {"theorem": problem.theorem})
    except GatewayError as exc:
        return problem.with_provenance(optimized=False).add_note(f"optimize rejected: gateway error: {exc}")

    reduced = _strip_blank_edges(_without_imports(extract_code_block(response.text).text))
    original = problem.theorem.context_source
    if any(d.kind in THEOREM_KINDS for d in split_declarations(reduced)):
        return problem.with_provenance(optimized=False).add_note("optimize rejected: reduced context contains a theorem")
    if not is_verbatim_subset(reduced, original):
        return problem.with_provenance(optimized=False).add_note("optimize rejected: not a verbatim subset")

    candidate = replace(problem, theorem=replace(problem.theorem, context_source=reduced))
    verdict = verifier.compile_source(candidate.file_text(), problem.theorem.id, allow_placeholders=True)
    if not verdict.passed:
        logger.info("reduced context for %s does not compile; keeping the original", problem.theorem.id)
        return problem.with_provenance(optimized=False).add_note("optimize rejected: reduced file does not verify")
    removed = len(_context_blocks(original)) - len(_context_blocks(reduced))
    logger.debug("optimized %s: %d blocks removed", problem.theorem.id, removed)
    return candidate.with_provenance(optimized=True)
