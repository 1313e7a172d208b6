"""
Run one proving method over every theorem of a manifest, appending to a
JSONL run log as revisions complete.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Set

from tqdm import tqdm

from dataset_pipeline.manifest import Manifest, ManifestEntry
from prover.config import Settings
from prover.llm_gateway import ModelGateway, build_gateway
from prover.orchestrator import ProofResult, configure_method, prove_theorem, reverify
from prover.theorem import TheoremStructureError, load_theorem
from prover.verifier import CheckerAdapter, build_verifier

from .records import RunLogWriter, RunRecord, completed_theorems, read_run_log, rewrite_run_log

logger = logging.getLogger(__name__)


@dataclass
class RunSummary:
    log_path: Path
    method: str
    attempted: List[str] = field(default_factory=list)
    skipped: List[str] = field(default_factory=list)
    solved: List[str] = field(default_factory=list)
    aborted: List[str] = field(default_factory=list)

    def to_text(self) -> str:
        return (
            f"Method: {self.method}\n"
            f"Attempted: {len(self.attempted)} (skipped {len(self.skipped)} already completed)\n"
            f"Solved: {len(self.solved)}\n"
            f"Aborted: {len(self.aborted)}\n"
            f"Log: {self.log_path}\n"
        )


def _prove_entry(
    entry: ManifestEntry,
    manifest: Manifest,
    method: str,
    settings: Settings,
    gateway: ModelGateway,
    verifier: CheckerAdapter,
    writer: RunLogWriter,
    check_again: bool,
) -> ProofResult:
    try:
        theorem = load_theorem(manifest.resolve(entry), theorem_id=entry.id, domain=entry.domain, origin=entry.origin)
        theorem.check_structure()
    except (OSError, UnicodeDecodeError, TheoremStructureError) as exc:
        logger.error("cannot load %s: %s", entry.id, exc)
        result = ProofResult(
            theorem_id=entry.id, method=method, aborted=True, failure_reason=f"{type(exc).__name__}: {exc}"
        )
        writer.write(RunRecord.for_result(result, entry.domain))
        return result

    def on_attempt(attempt, _annotated) -> None:
        writer.write(RunRecord.for_attempt(attempt, entry.domain, method, theorem.id))

    result = prove_theorem(
        theorem, gateway, verifier,
        schedule=settings.schedule, feedback=settings.feedback,
        on_attempt=on_attempt, method=method,
    )
    confirmed: Optional[bool] = None
    if check_again and result.solved:
        verdict = reverify(result, theorem, verifier)
        confirmed = bool(verdict and verdict.passed)
        if not confirmed:
            logger.warning("%s: final proof did not re-verify", theorem.id)
    writer.write(RunRecord.for_result(result, entry.domain, reverified=confirmed))
    return result


def _prepare_log(out: Path, method: str, resume: bool) -> Set[str]:
    """
    Clear this method's records from a shared log before a run. A resumed run
    keeps the records of theorems it completed (and returns their ids) and
    drops the partial attempts of the rest, which are proved again. Records
    of other methods are always kept.
    """
    if not out.exists():
        return set()
    records = read_run_log(out)
    done = completed_theorems(records, method) if resume else set()
    kept = [r for r in records if r.method != method or r.theorem_id in done]
    dropped = len(records) - len(kept)
    if dropped:
        logger.info("%s: dropping %d earlier %s records", out, dropped, method)
    rewrite_run_log(out, kept)
    return done


def run_experiment(
    manifest: Manifest,
    method: str,
    settings: Settings,
    out: Path,
    resume: bool = False,
    parallel: Optional[int] = None,
    gateway: Optional[ModelGateway] = None,
    verifier: Optional[CheckerAdapter] = None,
    check_again: bool = False,
) -> RunSummary:
    """
    Prove every manifest theorem with `method`, appending to `out`. Records
    of other methods in `out` are kept; with resume, theorems that already
    have a result record for this method are skipped.
    Environment failures are recorded per theorem and the run continues.
    """
    configure_method(settings.schedule, method)
    out = Path(out)
    done = _prepare_log(out, method, resume)

    gateway = gateway or build_gateway(settings.gateway, settings.decoding)
    verifier = verifier or build_verifier(settings.verifier)
    summary = RunSummary(log_path=out, method=method)
    todo = []
    for entry in manifest.entries:
        if entry.id in done:
            summary.skipped.append(entry.id)
        else:
            todo.append(entry)
    logger.info("%s: %d theorems to prove, %d already done", method, len(todo), len(summary.skipped))

    workers = parallel or settings.harness.parallel
    with RunLogWriter(out) as writer:
        if workers <= 1:
            results = [
                _prove_entry(e, manifest, method, settings, gateway, verifier, writer, check_again)
                for e in tqdm(todo, desc=f"Proving ({method})")
            ]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                futures = [
                    pool.submit(_prove_entry, e, manifest, method, settings, gateway, verifier, writer, check_again)
                    for e in todo
                ]
                results = [f.result() for f in tqdm(futures, desc=f"Proving ({method})")]

    for result in results:
        summary.attempted.append(result.theorem_id)
        if result.solved:
            summary.solved.append(result.theorem_id)
        elif result.aborted:
            summary.aborted.append(result.theorem_id)
    return summary
