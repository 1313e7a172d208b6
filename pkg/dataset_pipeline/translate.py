"""
Step 1 of dataset construction: translate a TPTP problem to Lean 4.

Each attempt renders the TranslateTptp prompt, extracts the fenced Lean code
and compiles it with placeholders allowed (the conjecture ends in `sorry`).
A failed attempt is retried with its diagnostics appended to the prompt.
"""
import logging
from typing import Optional, Sequence

from prover.lean_source import split_imports, theorem_declarations
from prover.feedback import format_raw_errors
from prover.llm_gateway import ModelGateway, PromptRole, extract_code_block
from prover.theorem import TheoremStructureError, theorem_from_source
from prover.verifier import CheckerAdapter, Diagnostic, Severity, Verdict, VerdictStatus

from .problem import LeanProblem, Provenance, dedupe, unchecked_theorem
from .tptp import TptpProblem

logger = logging.getLogger(__name__)

RETRY_HEADER = "Previous attempt failed with:"


def with_imports(code: str, imports: Sequence[str]) -> str:
    """Prepend configured imports to a draft, keeping its own imports after them."""
    own, body = split_imports(code)
    header = dedupe(list(imports) + own)
    return "\n".join(header) + ("\n\n" if header else "") + body + "\n"


def retry_suffix(diagnostics: Sequence[Diagnostic]) -> str:
    return f"\n\n{RETRY_HEADER}\n{format_raw_errors(diagnostics)}"


def _structure_failure(count: int) -> Verdict:
    return Verdict(
        status=VerdictStatus.FAIL,
        diagnostics=(
            Diagnostic(1, 0, Severity.ERROR, f"expected exactly one theorem declaration, found {count}", kind="statement"),
        ),
    )


def translate_problem(
    gateway: ModelGateway,
    verifier: CheckerAdapter,
    problem: TptpProblem,
    max_attempts: int = 60,
    imports: Sequence[str] = (),
) -> LeanProblem:
    """
    Return the first translation that compiles (placeholder-tolerant), or the
    last attempt with verified=False and its diagnostics attached.
    """
    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    problem.validate()
    context = {"axioms": problem.axioms_text(), "conjecture": problem.conjecture_text()}

    suffix = ""
    last_code = ""
    last_verdict: Optional[Verdict] = None
    for attempt in range(1, max_attempts + 1):
        response = gateway.complete(PromptRole.TRANSLATE_TPTP, context, user_suffix=suffix)
        code = extract_code_block(response.text).text
        last_code = with_imports(code, imports)
        count = len(theorem_declarations(split_imports(last_code)[1]))
        if count != 1:
            verdict = _structure_failure(count)
        else:
            verdict = verifier.compile_source(last_code, problem.name, allow_placeholders=True)
        last_verdict = verdict
        if verdict.passed:
            theorem = theorem_from_source(last_code, problem.name, problem.domain)
            logger.info("translated %s on attempt %d", problem.name, attempt)
            return LeanProblem(
                theorem=theorem,
                imports=theorem.imports,
                provenance=Provenance(tptp_name=problem.name, translation_attempts=attempt, verified=True),
            )
        logger.debug("translation of %s failed on attempt %d", problem.name, attempt)
        suffix = retry_suffix(verdict.diagnostics)

    logger.warning("no verified translation for %s after %d attempts", problem.name, max_attempts)
    diagnostics = tuple(format_raw_errors(last_verdict.diagnostics).splitlines()) if last_verdict else ()
    try:
        theorem = theorem_from_source(last_code, problem.name, problem.domain)
    except TheoremStructureError:
        theorem = unchecked_theorem(last_code, problem.name, problem.domain)
    return LeanProblem(
        theorem=theorem,
        imports=theorem.imports,
        provenance=Provenance(
            tptp_name=problem.name,
            translation_attempts=max_attempts,
            verified=False,
            diagnostics=diagnostics,
        ),
    )
