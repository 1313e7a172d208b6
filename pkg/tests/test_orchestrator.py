import time

import pytest

from prover.axiom_tree import InvalidArgumentError
from prover.config import ScheduleConfig, VerifierSettings
from prover.feedback import AttemptMode
from prover.llm_gateway import PromptRole
from prover.orchestrator import ScheduleError, configure_method, prove_theorem, reverify, revision_mode
from prover.verifier import LeanCheckerAdapter
from tests.helpers import (
    BAD_PROOF,
    GOOD_PROOF,
    accepting,
    dream_script,
    fenced,
    mock_checker,
    sample_theorem,
    stub_gateway,
)

I, D, R, S = AttemptMode.INITIAL, AttemptMode.DIVERSIFY, AttemptMode.REFINE, AttemptMode.SAMPLE


def _generate_calls(gateway):
    return [c for c in gateway.backend.calls if c.role is PromptRole.GENERATE_PROOF]


def _solve_at(revision):
    return dream_script(**{f"GenerateProof:{revision}": fenced(GOOD_PROOF)})


def test_default_schedule_modes():
    schedule = ScheduleConfig()
    assert [revision_mode(r, schedule) for r in range(1, 11)] == [I, R, R, D, R, R, D, R, R, R]


@pytest.mark.parametrize("r", [0, 11])
def test_revision_outside_budget_is_rejected(r):
    with pytest.raises(InvalidArgumentError):
        revision_mode(r, ScheduleConfig())


def test_unknown_method_is_rejected(theorem, schedule):
    with pytest.raises(ScheduleError):
        configure_method(schedule, "bogus")


def test_solved_on_first_revision_builds_no_tree(theorem, schedule):
    gateway = stub_gateway(_solve_at(1))
    result = prove_theorem(theorem, gateway, mock_checker(accepting(GOOD_PROOF)), schedule)
    assert result.solved
    assert result.solved_at_revision == 1
    assert result.final_proof == GOOD_PROOF
    assert result.tree_snapshot is None
    assert gateway.backend.count(PromptRole.PROPOSE_AXIOMS) == 0
    assert gateway.backend.count(PromptRole.ANNOTATE_SUBPROPOSITIONS) == 0


def test_solved_on_first_diversify_revision(theorem, schedule):
    gateway = stub_gateway(_solve_at(4))
    result = prove_theorem(theorem, gateway, mock_checker(accepting(GOOD_PROOF)), schedule)
    assert result.solved_at_revision == 4
    assert [a.mode for a in result.attempts] == [I, R, R, D]
    last = result.attempts[-1]
    assert last.strategy.focus_axioms.parent_indices == (1, 2)
    assert "Instantiate pq at a." in _generate_calls(gateway)[-1].user_text
    backend = gateway.backend
    assert backend.count(PromptRole.PROPOSE_AXIOMS) == 1
    assert backend.count(PromptRole.SYNTHESIZE_AXIOM) == 1
    assert backend.count(PromptRole.ANALYZE_FAILURES) == 2
    assert backend.count(PromptRole.ANNOTATE_SUBPROPOSITIONS) == 3


def test_full_failing_run_uses_every_role_as_scheduled(theorem, schedule, rejecting_checker):
    gateway = stub_gateway(dream_script())
    result = prove_theorem(theorem, gateway, rejecting_checker, schedule)
    backend = gateway.backend

    assert not result.solved
    assert not result.aborted
    assert result.failure_reason == "unsolved"
    assert len(result.attempts) == 10
    assert backend.count(PromptRole.PROPOSE_AXIOMS) == 1
    assert backend.count(PromptRole.SYNTHESIZE_AXIOM) == 2
    assert backend.count(PromptRole.PROPOSE_STRATEGY) == 2
    assert backend.count(PromptRole.GENERATE_PROOF) == 10
    assert backend.count(PromptRole.ANALYZE_FAILURES) == 7
    assert backend.count(PromptRole.ANNOTATE_SUBPROPOSITIONS) == 10
    assert sorted(result.tree_snapshot["leaves"]) == ["1,2", "1,3"]
    assert [a.strategy.focus_axioms.parent_indices for a in result.attempts if a.mode is D] == [(1, 2), (1, 3)]
    assert not any(a.fallback for a in result.annotated)


def test_refine_prompt_carries_annotated_history_and_analysis(theorem, schedule, rejecting_checker):
    gateway = stub_gateway(dream_script())
    prove_theorem(theorem, gateway, rejecting_checker, schedule)
    second = _generate_calls(gateway)[1].user_text
    assert "Sub-proposition: Q a from P a" in second
    assert "Analysis of the previous failures:" in second
    assert "instantiate pq instead" in second


def test_exhausted_tree_reuses_leaves(theorem, rejecting_checker):
    schedule = ScheduleConfig(diversify_at=frozenset({2, 3, 4, 5}), seed=7)
    gateway = stub_gateway(dream_script())
    result = prove_theorem(theorem, gateway, rejecting_checker, schedule)
    focus = [a.strategy.focus_axioms.parent_indices for a in result.attempts if a.mode is D]
    assert focus == [(1, 2), (1, 3), (2, 3), (1, 2)]
    assert gateway.backend.count(PromptRole.SYNTHESIZE_AXIOM) == 3


def test_repeated_sampling_keeps_no_history(theorem, schedule, rejecting_checker):
    gateway = stub_gateway(dream_script())
    result = prove_theorem(theorem, gateway, rejecting_checker, schedule, method="repeated")
    assert result.method == "repeated"
    assert [a.mode for a in result.attempts] == [S] * 10
    prompts = {c.user_text for c in _generate_calls(gateway)}
    assert len(prompts) == 1
    assert len(gateway.backend.calls) == 10
    assert all(a.fallback for a in result.annotated)


def test_repeated_sampling_stops_at_first_pass(theorem, schedule):
    gateway = stub_gateway(_solve_at(3))
    result = prove_theorem(theorem, gateway, mock_checker(accepting(GOOD_PROOF)), schedule, method="repeated")
    assert result.solved_at_revision == 3
    assert gateway.backend.count(PromptRole.GENERATE_PROOF) == 3


def test_without_diversification_every_later_revision_refines(theorem, schedule, rejecting_checker):
    gateway = stub_gateway(dream_script())
    result = prove_theorem(theorem, gateway, rejecting_checker, schedule, method="dream-no-sd")
    assert [a.mode for a in result.attempts] == [I] + [R] * 9
    assert gateway.backend.count(PromptRole.PROPOSE_AXIOMS) == 0
    assert result.tree_snapshot is None


def test_without_error_feedback_refine_sees_raw_errors(theorem, schedule, rejecting_checker):
    gateway = stub_gateway(dream_script())
    result = prove_theorem(theorem, gateway, rejecting_checker, schedule, method="dream-no-se")
    assert gateway.backend.count(PromptRole.ANNOTATE_SUBPROPOSITIONS) == 0
    assert gateway.backend.count(PromptRole.ANALYZE_FAILURES) == 0
    assert gateway.backend.count(PromptRole.PROPOSE_AXIOMS) == 1
    second = _generate_calls(gateway)[1].user_text
    assert "Compiler errors:" in second
    assert "line 1, col 0: error: mock checker rejected the proof" in second
    assert "Analysis of the previous failures" not in second
    assert all(a.fallback for a in result.annotated)


def test_gateway_failure_aborts_and_keeps_attempts(theorem, schedule, rejecting_checker):
    script = dream_script()
    del script["GenerateProof:*"]
    script["GenerateProof:1"] = fenced(BAD_PROOF)
    result = prove_theorem(theorem, stub_gateway(script), rejecting_checker, schedule)
    assert result.aborted
    assert result.failure_reason.startswith("ScriptExhaustedError:")
    assert len(result.attempts) == 1


def test_theorem_without_an_axiom_tree_keeps_refining(theorem, schedule, rejecting_checker):
    gateway = stub_gateway(dream_script(**{"ProposeAxioms:*": ""}))
    result = prove_theorem(theorem, gateway, rejecting_checker, schedule)
    assert not result.aborted
    assert result.failure_reason == "unsolved"
    assert [a.mode for a in result.attempts] == [I] + [R] * 9
    assert result.tree_snapshot is None
    assert gateway.backend.count(PromptRole.PROPOSE_AXIOMS) == 1
    assert gateway.backend.count(PromptRole.PROPOSE_STRATEGY) == 0


def test_missing_checker_aborts(
tmp_path, theorem, schedule):
    checker = LeanCheckerAdapter(
        VerifierSettings(kind="lean", command="definitely-not-a-lean-binary {file}", project_root=str(tmp_path))
    )
    result = prove_theorem(theorem, stub_gateway(dream_script()), checker, schedule)
    assert result.aborted
    assert result.failure_reason.startswith("CheckerEnvironmentError:")
    assert result.attempts == []


def test_wall_clock_budget_stops_the_loop(theorem, rejecting_checker):
    schedule = ScheduleConfig(wall_clock_budget=0.0)
    result = prove_theorem(theorem, stub_gateway(dream_script()), rejecting_checker, schedule)
    assert result.aborted
    assert "wall-clock budget" in result.failure_reason
    assert result.attempts == []


def test_twenty_theorem_replay_is_fast(schedule, rejecting_checker):
    gateway = stub_gateway(dream_script())
    theorems = [sample_theorem(f"t{i:02d}") for i in range(20)]
    start = time.perf_counter()
    results = [prove_theorem(t, gateway, rejecting_checker, schedule) for t in theorems]
    assert time.perf_counter() - start < 5.0
    assert all(len(r.attempts) == 10 for r in results)
    assert gateway.backend.count(PromptRole.PROPOSE_AXIOMS) == 20


def test_runs_are_deterministic(theorem, schedule, rejecting_checker):
    def run():
        result = prove_theorem(theorem, stub_gateway(dream_script()), rejecting_checker, schedule)
        return [(a.revision, a.mode, a.proof_source, a.strategy, a.insight) for a in result.attempts], result.tree_snapshot

    assert run() == run()


def test_on_attempt_sees_every_attempt(theorem, schedule):
    seen = []
    prove_theorem(
        theorem,
        stub_gateway(_solve_at(2)),
        mock_checker(accepting(GOOD_PROOF)),
        schedule,
        on_attempt=lambda attempt, annotated: seen.append((attempt.revision, annotated is None)),
    )
    assert seen == [(1, False), (2, True)]


def test_background_axioms_can_be_stripped(theorem):
    gateway = stub_gateway(_solve_at(1))
    schedule = ScheduleConfig(strip_background_axioms=True)
    prove_theorem(theorem, gateway, mock_checker(accepting(GOOD_PROOF)), schedule)
    prompt = _generate_calls(gateway)[0].user_text
    assert "axiom pq" not in prompt
    assert "theorem goal" in prompt


def test_reverify_recompiles_the_final_proof(theorem, schedule):
    checker = mock_checker(accepting(GOOD_PROOF))
    solved = prove_theorem(theorem, stub_gateway(_solve_at(1)), checker, schedule)
    assert reverify(solved, theorem, checker).passed
    assert reverify(solved, theorem, mock_checker({})).passed is False

    unsolved = prove_theorem(theorem, stub_gateway(dream_script()), checker, schedule)
    assert reverify(unsolved, theorem, checker) is None
