"""
Sub-proposition error feedback.

1. align_errors places one comment line after every line a diagnostic points
   at, so the model sees errors next to the code that caused them.
2. annotate_subpropositions asks the model to label each proof block with
   the sub-proposition it establishes. The model never gets to change the
   proof: its output is validated line by line and rejected otherwise.
3. build_insight summarises the annotated failure history for the next
   Refine revision.

All inserted lines start with the comment prefix (default `-- [DREAM]`), so
strip_sentinel_lines recovers the original proof byte for byte.
"""
import hashlib
import json
import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from .llm_gateway import GatewayError, ModelGateway, PromptRole, Strategy, extract_code_block
from .theorem import Theorem
from .verifier import Diagnostic, Verdict

logger = logging.getLogger(__name__)

DEFAULT_PREFIX = "-- [DREAM]"


class PreconditionError(ValueError):
    """Raised when an operation is called in a state it does not support."""


class AttemptMode(str, Enum):
    INITIAL = "Initial"
    DIVERSIFY = "Diversify"
    REFINE = "Refine"
    SAMPLE = "Sample"


@dataclass(frozen=True)
class Insight:
    revision: int
    text: str
    inputs_digest: str
    elided: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "revision": self.revision,
            "text": self.text,
            "inputs_digest": self.inputs_digest,
            "elided": self.elided,
        }


@dataclass(frozen=True)
class ProofAttempt:
    revision: int
    proof_source: str
    verdict: Verdict
    mode: AttemptMode
    strategy: Optional[Strategy] = None
    insight: Optional[Insight] = None
    unfenced: bool = False

    def __post_init__(self) -> None:
        if self.revision < 1:
            raise ValueError(f"revision must be >= 1, got {self.revision}")
        if self.mode is AttemptMode.DIVERSIFY and self.strategy is None:
            raise ValueError("a Diversify attempt needs a strategy")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "revision": self.revision,
            "mode": self.mode.value,
            "proof_source": self.proof_source,
            "verdict": self.verdict.to_dict(),
            "strategy": self.strategy.to_dict() if self.strategy else None,
            "insight": self.insight.to_dict() if self.insight else None,
            "unfenced": self.unfenced,
        }


@dataclass(frozen=True)
class AnnotatedProof:
    source_with_comments: str
    attempt_ref: int
    annotation_count: int
    error_comment_count: int
    fallback: bool = False
    fallback_reason: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "attempt_ref": self.attempt_ref,
            "source_with_comments": self.source_with_comments,
            "annotation_count": self.annotation_count,
            "error_comment_count": self.error_comment_count,
            "fallback": self.fallback,
            "fallback_reason": self.fallback_reason,
        }


@dataclass
class FeedbackPool:
    """Append-only history of failed attempts for one theorem."""

    theorem_id: str
    attempts: List[ProofAttempt] = field(default_factory=list)
    annotated: List[AnnotatedProof] = field(default_factory=list)

    def append(self, attempt: ProofAttempt, annotated: AnnotatedProof) -> None:
        if annotated.attempt_ref != attempt.revision:
            raise PreconditionError(
                f"annotated proof refers to revision {annotated.attempt_ref}, attempt is {attempt.revision}"
            )
        if self.attempts and attempt.revision <= self.attempts[-1].revision:
            raise PreconditionError("pool revisions must increase")
        self.attempts.append(attempt)
        self.annotated.append(annotated)

    def __len__(self) -> int:
        return len(self.attempts)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "theorem_id": self.theorem_id,
            "attempts": [a.to_dict() for a in self.attempts],
            "annotated": [a.to_dict() for a in self.annotated],
        }


# -------------------------------------------------------------------
# Alignment
# -------------------------------------------------------------------

def _split(text: str) -> Tuple[List[str], bool]:
    """
    Split into source lines. A final newline ends the last line rather than
    starting an empty one: "a" and "a\\n" have one line, "a\\n\\n" has two.
    """
    trailing = text.endswith("\n")
    body = text[:-1] if trailing else text
    return body.split("\n"), trailing


def _join(lines: Sequence[str], trailing: bool) -> str:
    return "\n".join(lines) + ("\n" if trailing else "")


def _fold(message: str) -> str:
    return " ".join(part.strip() for part in message.splitlines() if part.strip())


def error_comment(diagnostic: Diagnostic, prefix: str = DEFAULT_PREFIX, note: str = "") -> str:
    label = diagnostic.severity.value.upper()
    return f"{prefix} {label}(line {diagnostic.line}, col {diagnostic.column}): {_fold(diagnostic.message)}{note}"


def align_errors(proof_source: str, diagnostics: Sequence[Diagnostic], comment_prefix: str = DEFAULT_PREFIX) -> str:
    """
    Insert one comment line after the source line of every diagnostic.
    Diagnostics on the same line go in (column, input order); those beyond
    the last line attach after it with a range note.
    """
    if not diagnostics:
        return proof_source
    lines, trailing = _split(proof_source)
    last = len(lines)
    inserts: Dict[int, List[Tuple[int, int, str]]] = {}
    for index, diag in enumerate(diagnostics):
        if diag.line <= last:
            target, note = diag.line, ""
        else:
            target, note = last, f" (reported at line {diag.line}, beyond the last line {last})"
        inserts.setdefault(target, []).append((diag.column, index, error_comment(diag, comment_prefix, note)))

    out: List[str] = []
    for number, line in enumerate(lines, start=1):
        out.append(line)
        for _, _, comment in sorted(inserts.get(number, ())):
            out.append(comment)
    return _join(out, trailing)


def strip_sentinel_lines(text: str, comment_prefix: str = DEFAULT_PREFIX) -> str:
    lines, trailing = _split(text)
    return _join([line for line in lines if not line.startswith(comment_prefix)], trailing)


def count_error_comments(text: str, comment_prefix: str = DEFAULT_PREFIX) -> int:
    pattern = _error_comment_pattern(comment_prefix)
    return sum(1 for line in _split(text)[0] if pattern.match(line))


def _error_comment_pattern(prefix: str) -> "re.Pattern[str]":
    return re.compile(re.escape(prefix) + r" (?:ERROR|WARNING)\(line \d+, col \d+\):")


def format_raw_errors(diagnostics: Sequence[Diagnostic]) -> str:
    """Plain compiler error listing (used when sub-proposition feedback is off)."""
    return "\n".join(
        f"line {d.line}, col {d.column}: {d.severity.value.lower()}: {_fold(d.message)}" for d in diagnostics
    )


# -------------------------------------------------------------------
# Annotation
# -------------------------------------------------------------------

class AnnotationRejected(ValueError):
    pass


def _normalise_annotation(line: str, prefix: str) -> str:
    body = line.strip()
    if body.startswith(prefix):
        body = body[len(prefix):]
    else:
        body = body[2:]  # plain `--`
    return f"{prefix} {body.strip()}".rstrip()


def _validate_annotation(candidate: str, error_aligned_source: str, prefix: str) -> Tuple[str, int]:
    """
    Walk the candidate against the original lines. Every original line must
    appear unchanged and in order; extra lines may only be comments (kept,
    normalised to the prefix) or blank (dropped).
    """
    original, trailing = _split(error_aligned_source)
    cand_lines = candidate.rstrip("\n").split("\n")
    error_pattern = _error_comment_pattern(prefix)
    out: List[str] = []
    pointer = 0
    added = 0
    for line in cand_lines:
        if pointer < len(original) and line == original[pointer]:
            out.append(line)
            pointer += 1
            continue
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("--"):
            normalised = _normalise_annotation(line, prefix)
            if error_pattern.match(normalised):
                raise AnnotationRejected("annotation imitates an error comment")
            out.append(normalised)
            added += 1
            continue
        raise AnnotationRejected(f"changed or added code line: {line[:80]!r}")
    if pointer != len(original):
        raise AnnotationRejected(
            f"dropped or reordered original line {pointer + 1}: {original[pointer][:80]!r}"
        )
    return _join(out, trailing), added


def annotate_subpropositions(
    gateway: ModelGateway,
    theorem: Theorem,
    error_aligned_source: str,
    revision: int,
    comment_prefix: str = DEFAULT_PREFIX,
    retries: int = 1,
) -> AnnotatedProof:
    error_count = count_error_comments(error_aligned_source, comment_prefix)
    context = {
        "theorem": theorem,
        "error_aligned_source": error_aligned_source,
        "comment_prefix": comment_prefix,
    }
    reason = ""
    for attempt in range(retries + 1):
        try:
            response = gateway.complete(PromptRole.ANNOTATE_SUBPROPOSITIONS, context)
        except GatewayError as exc:
            reason = f"gateway error: {exc}"
            logger.warning("annotation of %s r%d failed (%s)", theorem.id, revision, reason)
            continue
        candidate = extract_code_block(response.text).text
        try:
            annotated, added = _validate_annotation(candidate, error_aligned_source, comment_prefix)
        except AnnotationRejected as exc:
            reason = str(exc)
            logger.info("annotation of %s r%d rejected (try %d): %s", theorem.id, revision, attempt + 1, reason)
            continue
        return AnnotatedProof(
            source_with_comments=annotated,
            attempt_ref=revision,
            annotation_count=added,
            error_comment_count=error_count,
        )
    return AnnotatedProof(
        source_with_comments=error_aligned_source,
        attempt_ref=revision,
        annotation_count=0,
        error_comment_count=error_count,
        fallback=True,
        fallback_reason=reason or "annotation rejected",
    )


def unannotated(proof_source: str, revision: int, reason: str) -> AnnotatedProof:
    """Pool entry for runs without sub-proposition feedback."""
    return AnnotatedProof(
        source_with_comments=proof_source,
        attempt_ref=revision,
        annotation_count=0,
        error_comment_count=0,
        fallback=True,
        fallback_reason=reason,
    )


# -------------------------------------------------------------------
# History and insight
# -------------------------------------------------------------------

def select_history(items: Sequence[Dict[str, Any]], budget: int) -> Tuple[List[Dict[str, Any]], int]:
    """
    Keep the newest suffix of history items whose `source` texts fit the
    character budget (the newest item is always kept). Returns (kept, elided).
    """
    kept: List[Dict[str, Any]] = []
    used = 0
    for item in reversed(items):
        size = len(item["source"]) + len(item.get("errors", ""))
        if kept and used + size > budget:
            break
        kept.append(item)
        used += size
    kept.reverse()
    return kept, len(items) - len(kept)


def annotated_history(pool: FeedbackPool) -> List[Dict[str, Any]]:
    return [{"revision": a.attempt_ref, "source": a.source_with_comments, "errors": ""} for a in pool.annotated]


def raw_history(pool: FeedbackPool) -> List[Dict[str, Any]]:
    return [
        {"revision": a.revision, "source": a.proof_source, "errors": format_raw_errors(a.verdict.diagnostics)}
        for a in pool.attempts
    ]


def history_digest(items: Sequence[Dict[str, Any]]) -> str:
    payload = json.dumps([[i["revision"], i["source"]] for i in items], ensure_ascii=False)
    return "sha256:" + hashlib.sha256(payload.encode("utf-8")).hexdigest()


def build_insight(
    gateway: ModelGateway,
    theorem: Theorem,
    pool: FeedbackPool,
    r: int,
    budget: int = 24_000,
) -> Insight:
    if r < 2:
        raise PreconditionError(f"insights feed Refine revisions (r >= 2), got r={r}")
    if not pool.annotated:
        raise PreconditionError(f"feedback pool for {theorem.id} is empty")
    if len(pool.annotated) != r - 1:
        raise PreconditionError(f"revision {r} needs {r - 1} annotated attempts, pool has {len(pool.annotated)}")

    kept, elided = select_history(annotated_history(pool), budget)
    if elided:
        logger.info("insight for %s r%d: elided %d oldest attempts", theorem.id, r, elided)
    response = gateway.complete(PromptRole.ANALYZE_FAILURES, {"theorem": theorem, "annotated_history": kept})
    text = response.text.strip()
    if not text:
        logger.warning("empty analysis for %s r%d", theorem.id, r)
        text = "No analysis was returned; revise the overall proof structure."
    return Insight(revision=r, text=text, inputs_digest=history_digest(kept), elided=elided)


def dump_annotated(pool: FeedbackPool, out_dir: Path) -> List[Path]:
    """Write every annotated proof to <out_dir>/<theorem>/revision_NN.lean."""
    target = Path(out_dir) / re.sub(r"[^A-Za-z0-9_.+-]+", "_", pool.theorem_id)
    target.mkdir(parents=True, exist_ok=True)
    written = []
    for annotated in pool.annotated:
        path = target / f"revision_{annotated.attempt_ref:02d}.lean"
        path.write_text(annotated.source_with_comments, encoding="utf-8")
        written.append(path)
    return written
