import random

import pytest

from prover.feedback import (
    AnnotatedProof,
    AttemptMode,
    FeedbackPool,
    PreconditionError,
    ProofAttempt,
    align_errors,
    annotate_subpropositions,
    build_insight,
    count_error_comments,
    dump_annotated,
    error_comment,
    format_raw_errors,
    select_history,
    strip_sentinel_lines,
    unannotated,
)
from prover.llm_gateway import PromptRole
from prover.verifier import Diagnostic, Severity, Verdict, VerdictStatus
from tests.helpers import BAD_ALIGNED, BAD_PROOF, fenced, stub_gateway

PREFIX = "-- [DREAM]"
PROOF_LINES = ["intro h", "  exact pq a h", "", "  · simp", "have hq : Q a := pq a h", "  -- a remark", "exact hq"]


def _error(line, column=0, message="unknown identifier 'bogus'"):
    return Diagnostic(line, column, Severity.ERROR, message)


def _failed(*diagnostics):
    return Verdict(VerdictStatus.FAIL, tuple(diagnostics or (_error(1),)))


def _attempt(revision, proof=BAD_PROOF):
    return ProofAttempt(revision=revision, proof_source=proof, verdict=_failed(), mode=AttemptMode.REFINE)


def _pool(n, theorem_id="goal_thm"):
    pool = FeedbackPool(theorem_id=theorem_id)
    for r in range(1, n + 1):
        pool.append(_attempt(r), AnnotatedProof(f"{BAD_ALIGNED}\n-- r{r}", r, 0, 1))
    return pool


# --- alignment -------------------------------------------------------

def _comments_after_each_line(aligned, n_lines):
    counts = [0] * (n_lines + 1)
    current = 0
    for line in aligned.split("\n"):
        if line.startswith(PREFIX):
            counts[current] += 1
        else:
            current += 1
    return counts[1:]


def test_alignment_on_random_fixtures():
    rng = random.Random(500)
    for _ in range(500):
        lines = [rng.choice(PROOF_LINES) for _ in range(rng.randint(1, 12))]
        proof = "\n".join(lines) + ("\n" if rng.random() < 0.3 else "")
        # a final newline ends the last line, so ["x", ""] joined is one line
        lines = (proof[:-1] if proof.endswith("\n") else proof).split("\n")
        diagnostics = [
            _error(rng.randint(1, len(lines) + 2), rng.randint(0, 20), rng.choice(["bad", "type mismatch\n  h"]))
            for _ in range(rng.randint(0, 6))
        ]
        aligned = align_errors(proof, diagnostics)

        assert count_error_comments(aligned) == len(diagnostics)
        assert strip_sentinel_lines(aligned) == proof
        expected = [0] * len(lines)
        for diag in diagnostics:
            expected[min(diag.line, len(lines)) - 1] += 1
        assert _comments_after_each_line(aligned, len(lines)) == expected


def test_same_line_errors_are_ordered_by_column():
    aligned = align_errors("exact foo bar", [_error(1, 10, "second"), _error(1, 6, "first")])
    assert aligned.split("\n")[1:] == [
        f"{PREFIX} ERROR(line 1, col 6): first",
        f"{PREFIX} ERROR(line 1, col 10): second",
    ]


def test_errors_past_the_end_attach_to_the_last_line():
    aligned = align_errors("intro h\nexact h", [_error(5)])
    assert aligned.split("\n")[-1].endswith("(reported at line 5, beyond the last line 2)")


@pytest.mark.parametrize(
    "proof,expected",
    [
        ("intro h\n", f"intro h\n{PREFIX} ERROR(line 2, col 0): bad (reported at line 2, beyond the last line 1)\n"),
        ("intro h\n\n", f"intro h\n\n{PREFIX} ERROR(line 2, col 0): bad\n"),
    ],
    ids=["final-newline", "blank-last-line"],
)
def test_a_final_newline_does_not_add_a_line(proof, expected):
    aligned = align_errors(proof, [_error(2, 0, "bad")])
    assert aligned == expected
    assert strip_sentinel_lines(aligned) == proof


def test_no_diagnostics_leaves_the_proof_alone():
    assert align_errors("exact h\n", []) == "exact h\n"


def test_error_comment_folds_multiline_messages():
    comment = error_comment(_error(3, 4, "type mismatch\n  h\nhas type\n  P a"))
    assert comment == f"{PREFIX} ERROR(line 3, col 4): type mismatch h has type P a"


def test_format_raw_errors():
    text = format_raw_errors([_error(1, 0, "oops"), Diagnostic(2, 3, Severity.WARNING, "unused")])
    assert text == "line 1, col 0: error: oops\nline 2, col 3: warning: unused"


# --- annotation ------------------------------------------------------

def test_valid_annotation_is_accepted(theorem):
    reply = fenced("-- Sub-proposition: Q a follows from P a\n\n" + BAD_ALIGNED)
    gateway = stub_gateway({"AnnotateSubpropositions:1": reply})
    annotated = annotate_subpropositions(gateway, theorem, BAD_ALIGNED, revision=1)
    assert not annotated.fallback
    assert annotated.annotation_count == 1
    assert annotated.error_comment_count == 1
    assert annotated.source_with_comments.split("\n")[0] == f"{PREFIX} Sub-proposition: Q a follows from P a"
    assert strip_sentinel_lines(annotated.source_with_comments) == BAD_PROOF


@pytest.mark.parametrize(
    "reply",
    [
        "exact bogus2\n" + BAD_ALIGNED.split("\n")[1],
        f"{PREFIX} Sub-proposition: Q a",
        BAD_ALIGNED.split("\n")[1] + "\n" + BAD_PROOF,
        f"{PREFIX} ERROR(line 2, col 0): invented error\n" + BAD_ALIGNED,
        "intro h\n" + BAD_ALIGNED,
    ],
    ids=["changed-line", "dropped-lines", "reordered", "fake-error", "added-code"],
)
def test_rejected_annotations_fall_back_to_the_aligned_proof(theorem, reply):
    gateway = stub_gateway({"AnnotateSubpropositions:*": fenced(reply)})
    annotated = annotate_subpropositions(gateway, theorem, BAD_ALIGNED, revision=2)
    assert annotated.fallback
    assert annotated.fallback_reason
    assert annotated.source_with_comments == BAD_ALIGNED
    assert annotated.annotation_count == 0
    assert gateway.backend.count(PromptRole.ANNOTATE_SUBPROPOSITIONS) == 2


def test_annotation_retry_can_recover(theorem):
    gateway = stub_gateway(
        {
            "AnnotateSubpropositions:1": fenced("intro h\n" + BAD_ALIGNED),
            "AnnotateSubpropositions:2": fenced("-- Sub-proposition: goal\n" + BAD_ALIGNED),
        }
    )
    annotated = annotate_subpropositions(gateway, theorem, BAD_ALIGNED, revision=1)
    assert not annotated.fallback
    assert annotated.annotation_count == 1


def test_gateway_failure_falls_back(theorem):
    annotated = annotate_subpropositions(stub_gateway({}), theorem, BAD_ALIGNED, revision=1, retries=0)
    assert annotated.fallback
    assert annotated.fallback_reason.startswith("gateway error")


def test_unannotated_entry():
    entry = unannotated(BAD_PROOF, 3, "error feedback disabled")
    assert entry.fallback and entry.attempt_ref == 3
    assert entry.source_with_comments == BAD_PROOF


# --- pool ------------------------------------------------------------

def test_pool_rejects_mismatched_annotation():
    pool = FeedbackPool(theorem_id="t")
    with pytest.raises(PreconditionError):
        pool.append(_attempt(1), AnnotatedProof(BAD_ALIGNED, 2, 0, 1))


def test_pool_revisions_must_increase():
    pool = _pool(2)
    with pytest.raises(PreconditionError):
        pool.append(_attempt(2), AnnotatedProof(BAD_ALIGNED, 2, 0, 1))
    assert len(pool) == 2


def test_diversify_attempt_needs_strategy():
    with pytest.raises(ValueError):
        ProofAttempt(revision=4, proof_source=BAD_PROOF, verdict=_failed(), mode=AttemptMode.DIVERSIFY)


# --- history and insight ---------------------------------------------

def test_select_history_keeps_newest_suffix():
    items = [{"revision": r, "source": "x" * 10, "errors": ""} for r in range(1, 6)]
    kept, elided = select_history(items, budget=25)
    assert [i["revision"] for i in kept] == [4, 5]
    assert elided == 3
    kept, elided = select_history(items, budget=1)
    assert [i["revision"] for i in kept] == [5]
    assert elided == 4


def test_insight_summarises_the_pool(theorem):
    gateway = stub_gateway({"AnalyzeFailures:1": "Instantiate pq rather than guessing names."})
    insight = build_insight(gateway, theorem, _pool(2), r=3)
    assert insight.revision == 3
    assert insight.text == "Instantiate pq rather than guessing names."
    assert insight.inputs_digest.startswith("sha256:")
    prompt = gateway.backend.calls[0].user_text
    assert "Attempt 1:" in prompt and "Attempt 2:" in prompt
    assert "-- r2" in prompt


def test_insight_digest_depends_on_history(theorem):
    gateway = stub_gateway({"AnalyzeFailures:*": "analysis"})
    first = build_insight(gateway, theorem, _pool(1), r=2)
    second = build_insight(gateway, theorem, _pool(1, theorem_id="other"), r=2)
    assert first.inputs_digest == second.inputs_digest
    third = build_insight(gateway, theorem, _pool(2), r=3)
    assert third.inputs_digest != first.inputs_digest


def test_empty_analysis_gets_a_fallback_text(theorem):
    insight = build_insight(stub_gateway({"AnalyzeFailures:1": "  "}), theorem, _pool(1), r=2)
    assert insight.text


def test_insight_elides_old_attempts(theorem):
    gateway = stub_gateway({"AnalyzeFailures:1": "analysis"})
    insight = build_insight(gateway, theorem, _pool(4), r=5, budget=len(BAD_ALIGNED) + 10)
    assert insight.elided == 3
    assert "Attempt 1:" not in gateway.backend.calls[0].user_text


@pytest.mark.parametrize("pool_size,r", [(0, 2), (1, 1), (1, 3), (3, 3)])
def test_insight_preconditions(theorem, pool_size, r):
    with pytest.raises(PreconditionError):
        build_insight(stub_gateway({"AnalyzeFailures:*": "x"}), theorem, _pool(pool_size), r=r)


def test_dump_annotated_writes_one_file_per_revision(tmp_path):
    written = dump_annotated(_pool(3, theorem_id="GEO/odd id"), tmp_path)
    assert [p.name for p in written] == ["revision_01.lean", "revision_02.lean", "revision_03.lean"]
    assert written[0].parent.name == "GEO_odd_id"
    assert written[2].read_text().endswith("-- r3")
