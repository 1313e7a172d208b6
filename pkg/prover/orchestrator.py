"""
The per-theorem revision loop as a LangGraph workflow.

    select_mode -> generate -> verify -> record_feedback -> select_mode ...

Revision 1 is Initial, revisions in `diversify_at` draw a new leaf from the
axiom tree and condition on a fresh strategy, every other revision refines
from the analysed failure history. The loop stops at the first passing proof
or when the revision budget (or the wall-clock budget) runs out.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, TypedDict

from langgraph.graph import StateGraph, END

from .axiom_tree import (
    AxiomTree,
    AxiomTreeExhausted,
    InvalidArgumentError,
    SecondLevelAxiom,
    TreeConstructionError,
    build_axiom_tree,
    next_leaf,
)
from .config import FeedbackSettings, ScheduleConfig
from .feedback import (
    AnnotatedProof,
    AttemptMode,
    FeedbackPool,
    Insight,
    ProofAttempt,
    align_errors,
    annotate_subpropositions,
    annotated_history,
    build_insight,
    raw_history,
    select_history,
    unannotated,
)
from .llm_gateway import GatewayError, ModelGateway, PromptRole, Strategy, extract_code_block
from .theorem import Theorem, strip_background_axioms
from .verifier import CheckerAdapter, CheckerEnvironmentError, Verdict, rebase_diagnostics

logger = logging.getLogger(__name__)

METHODS = ("dream", "repeated", "dream-no-sd", "dream-no-se")

AttemptCallback = Callable[[ProofAttempt, Optional[AnnotatedProof]], None]


class ScheduleError(ValueError):
    """Raised for an unknown proving method."""


def revision_mode(r: int, schedule: ScheduleConfig) -> AttemptMode:
    if not 1 <= r <= schedule.max_revisions:
        raise InvalidArgumentError(f"revision {r} outside [1, {schedule.max_revisions}]")
    if r == 1:
        return AttemptMode.INITIAL
    if r in schedule.diversify_at and schedule.enable_diversification:
        return AttemptMode.DIVERSIFY
    return AttemptMode.REFINE


def configure_method(schedule: ScheduleConfig, method: str) -> ScheduleConfig:
    """Apply the ablation switches a method name implies."""
    if method not in METHODS:
        raise ScheduleError(f"unknown method {method!r}; expected one of {', '.join(METHODS)}")
    if method == "dream-no-sd":
        return replace(schedule, enable_diversification=False)
    if method == "dream-no-se":
        return replace(schedule, enable_error_feedback=False)
    return schedule


@dataclass
class ProofResult:
    theorem_id: str
    method: str
    solved: bool = False
    solved_at_revision: Optional[int] = None
    attempts: List[ProofAttempt] = field(default_factory=list)
    tree_snapshot: Optional[Dict[str, Any]] = None
    wall_time: float = 0.0
    aborted: bool = False
    failure_reason: Optional[str] = None
    annotated: List[AnnotatedProof] = field(default_factory=list)

    @property
    def final_proof(self) -> Optional[str]:
        return self.attempts[-1].proof_source if self.solved else None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "theorem_id": self.theorem_id,
            "method": self.method,
            "solved": self.solved,
            "solved_at_revision": self.solved_at_revision,
            "attempts": [a.to_dict() for a in self.attempts],
            "annotated": [a.to_dict() for a in self.annotated],
            "tree_snapshot": self.tree_snapshot,
            "wall_time": round(self.wall_time, 3),
            "aborted": self.aborted,
            "failure_reason": self.failure_reason,
        }


@dataclass
class ProvingSession:
    """Mutable per-theorem state; outlives the graph run if a node raises."""

    theorem: Theorem
    gateway: ModelGateway
    verifier: CheckerAdapter
    schedule: ScheduleConfig
    feedback: FeedbackSettings
    sampling: bool = False
    on_attempt: Optional[AttemptCallback] = None
    pool: FeedbackPool = field(init=False)
    tree: Optional[AxiomTree] = None
    attempts: List[ProofAttempt] = field(default_factory=list)
    started: float = field(default_factory=time.monotonic)
    solved_at: Optional[int] = None
    stop_reason: Optional[str] = None
    tree_error: Optional[str] = None

    def __post_init__(self) -> None:
        self.pool = FeedbackPool(self.theorem.id)

    @property
    def next_revision(self) -> int:
        return len(self.attempts) + 1


class ProvingState(TypedDict, total=False):
    session: ProvingSession
    revision: int
    mode: AttemptMode
    proof: str
    unfenced: bool
    strategy: Optional[Strategy]
    insight: Optional[Insight]
    verdict: Verdict
    done: bool


def _draw_leaf(session: ProvingSession) -> Optional[SecondLevelAxiom]:
    """Next leaf of the theorem's axiom tree, or None when no tree can be built."""
    if session.tree_error is not None:
        return None
    if session.tree is None:
        s = session.schedule
        try:
            session.tree = build_axiom_tree(
                session.theorem, session.gateway, m_target=s.m_range, k=s.k, selection=s.selection, seed=s.seed
            )
        except TreeConstructionError as exc:
            logger.warning("%s: no axiom tree (%s); diversify revisions refine instead", session.theorem.id, exc)
            session.tree_error = str(exc)
            return None
    try:
        return next_leaf(session.tree, session.gateway, session.theorem)
    except AxiomTreeExhausted:
        logger.info("axiom tree for %s exhausted, reusing leaves", session.theorem.id)
        return session.tree.reuse_leaf()


def _refine_context(session: ProvingSession, r: int) -> Dict[str, Any]:
    budget = session.feedback.history_char_budget
    if session.schedule.enable_error_feedback:
        insight = build_insight(session.gateway, session.theorem, session.pool, r, budget)
        history, _ = select_history(annotated_history(session.pool), budget)
        return {"history": history, "insight": insight}
    history, _ = select_history(raw_history(session.pool), budget)
    return {"history": history, "insight": None}


def node_select_mode(state: ProvingState) -> ProvingState:
    session = state["session"]
    r = session.next_revision
    if session.solved_at is not None or r > session.schedule.max_revisions:
        state["done"] = True
        return state
    elapsed = time.monotonic() - session.started
    if elapsed > session.schedule.wall_clock_budget:
        session.stop_reason = f"wall-clock budget of {session.schedule.wall_clock_budget:.0f}s exceeded"
        state["done"] = True
        return state
    state["revision"] = r
    state["mode"] = AttemptMode.SAMPLE if session.sampling else revision_mode(r, session.schedule)
    state["done"] = False
    return state


def node_generate(state: ProvingState) -> ProvingState:
    session = state["session"]
    mode = state["mode"]
    context: Dict[str, Any] = {"theorem": session.theorem}
    strategy: Optional[Strategy] = None
    insight: Optional[Insight] = None

    if mode is AttemptMode.DIVERSIFY:
        leaf = _draw_leaf(session)
        if leaf is None:
            mode = state["mode"] = AttemptMode.REFINE
    if mode is AttemptMode.DIVERSIFY:
        plan = session.gateway.complete(
            PromptRole.PROPOSE_STRATEGY, {"theorem": session.theorem, "axiom": leaf}
        ).text.strip()
        strategy = Strategy(description=plan or leaf.statement, focus_axioms=leaf)
        context["strategy"] = strategy
    elif mode is AttemptMode.REFINE:
        extra = _refine_context(session, state["revision"])
        insight = extra["insight"]
        context.update(extra)

    response = session.gateway.complete(PromptRole.GENERATE_PROOF, context)
    extracted = extract_code_block(response.text)
    state["proof"] = extracted.text
    state["unfenced"] = extracted.unfenced
    state["strategy"] = strategy
    state["insight"] = insight
    return state


def node_verify(state: ProvingState) -> ProvingState:
    session = state["session"]
    state["verdict"] = session.verifier.compile(state["proof"], session.theorem, allow_placeholders=False)
    return state


def node_record_feedback(state: ProvingState) -> ProvingState:
    session = state["session"]
    r = state["revision"]
    verdict = state["verdict"]
    attempt = ProofAttempt(
        revision=r,
        proof_source=state["proof"],
        verdict=verdict,
        mode=state["mode"],
        strategy=state.get("strategy"),
        insight=state.get("insight"),
        unfenced=state.get("unfenced", False),
    )
    session.attempts.append(attempt)
    logger.info(
        "%s r%d %s -> %s", session.theorem.id, r, attempt.mode.value, verdict.status.value
    )

    annotated: Optional[AnnotatedProof] = None
    if verdict.passed:
        session.solved_at = r
    elif session.sampling:
        annotated = unannotated(attempt.proof_source, r, "repeated sampling keeps no feedback")
    elif not session.schedule.enable_error_feedback:
        annotated = unannotated(attempt.proof_source, r, "sub-proposition feedback disabled")
    else:
        prefix = session.feedback.comment_prefix
        aligned = align_errors(attempt.proof_source, rebase_diagnostics(verdict), prefix)
        annotated = annotate_subpropositions(
            session.gateway, session.theorem, aligned, revision=r,
            comment_prefix=prefix, retries=session.feedback.annotate_retries,
        )
    if annotated is not None:
        session.pool.append(attempt, annotated)
    if session.on_attempt is not None:
        session.on_attempt(attempt, annotated)
    return state


def _route(state: ProvingState) -> str:
    return END if state.get("done") else "generate"


def _after_record(state: ProvingState) -> str:
    return END if state["session"].solved_at is not None else "select_mode"


def build_app():
    """Build and return the revision-loop LangGraph app."""
    graph = StateGraph(ProvingState)

    graph.add_node("select_mode", node_select_mode)
    graph.add_node("generate", node_generate)
    graph.add_node("verify", node_verify)
    graph.add_node("record_feedback", node_record_feedback)

    graph.set_entry_point("select_mode")
    graph.add_conditional_edges("select_mode", _route, {"generate": "generate", END: END})
    graph.add_edge("generate", "verify")
    graph.add_edge("verify", "record_feedback")
    graph.add_conditional_edges("record_feedback", _after_record, {"select_mode": "select_mode", END: END})

    return graph.compile()


_APP = None


def _app():
    global _APP
    if _APP is None:
        _APP = build_app()
    return _APP


def _run_session(session: ProvingSession, method: str) -> ProofResult:
    try:
        _app().invoke({"session": session}, config={"recursion_limit": session.schedule.max_revisions * 4 + 10})
        aborted = session.stop_reason is not None
        reason = session.stop_reason
    except (GatewayError, CheckerEnvironmentError) as exc:
        logger.error("%s aborted: %s", session.theorem.id, exc)
        aborted = True
        reason = f"{type(exc).__name__}: {exc}"

    solved = session.solved_at is not None
    return ProofResult(
        theorem_id=session.theorem.id,
        method=method,
        solved=solved,
        solved_at_revision=session.solved_at,
        attempts=list(session.attempts),
        tree_snapshot=session.tree.to_dict() if session.tree is not None else None,
        wall_time=time.monotonic() - session.started,
        aborted=aborted and not solved,
        failure_reason=None if solved else (reason or "unsolved"),
        annotated=list(session.pool.annotated),
    )


def prove_theorem(
    theorem: Theorem,
    gateway: ModelGateway,
    verifier: CheckerAdapter,
    schedule: Optional[ScheduleConfig] = None,
    feedback: Optional[FeedbackSettings] = None,
    on_attempt: Optional[AttemptCallback] = None,
    method: str = "dream",
) -> ProofResult:
    """
    Run the revision loop for one theorem. Environment failures (backend
    unreachable, checker missing) end the run with aborted=True and a
    failure reason; the attempts made so far are kept.
    """
    schedule = configure_method(schedule or ScheduleConfig(), method)
    if method == "repeated":
        return sample_repeatedly(theorem, gateway, verifier, schedule, feedback, on_attempt)
    theorem.check_structure()
    if schedule.strip_background_axioms:
        theorem = strip_background_axioms(theorem)
    session = ProvingSession(
        theorem=theorem,
        gateway=gateway,
        verifier=verifier,
        schedule=schedule,
        feedback=feedback or FeedbackSettings(),
        on_attempt=on_attempt,
    )
    return _run_session(session, method)


def sample_repeatedly(
    theorem: Theorem,
    gateway: ModelGateway,
    verifier: CheckerAdapter,
    schedule: Optional[ScheduleConfig] = None,
    feedback: Optional[FeedbackSettings] = None,
    on_attempt: Optional[AttemptCallback] = None,
) -> ProofResult:
    """Repeated-sampling baseline: R independent, history-free proof generations."""
    schedule = schedule or ScheduleConfig()
    theorem.check_structure()
    if schedule.strip_background_axioms:
        theorem = strip_background_axioms(theorem)
    session = ProvingSession(
        theorem=theorem,
        gateway=gateway,
        verifier=verifier,
        schedule=schedule,
        feedback=feedback or FeedbackSettings(),
        sampling=True,
        on_attempt=on_attempt,
    )
    return _run_session(session, "repeated")


def reverify(result: ProofResult, theorem: Theorem, verifier: CheckerAdapter) -> Optional[Verdict]:
    """Recompile the final proof of a solved result; None when unsolved."""
    if not result.solved or result.final_proof is None:
        return None
    return verifier.compile(result.final_proof, theorem, allow_placeholders=False)
