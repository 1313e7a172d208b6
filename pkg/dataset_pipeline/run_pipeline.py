"""
Dataset construction entry point.
Orchestrates: parse TPTP problems, translate, post-process, optimize context,
write one Lean file per theorem plus the manifest and a manual review queue.
"""
import json
import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from tqdm import tqdm

from prover.config import DatasetSettings
from prover.llm_gateway import GatewayError, ModelGateway
from prover.verifier import CheckerAdapter, CheckerEnvironmentError

from .manifest import ManifestEntry, build_manifest, write_manifest
from .postprocess import optimize_context, postprocess
from .problem import LeanProblem, StructureError
from .tptp import ProblemStructureError, TptpSyntaxError, UnsupportedDialectError, load_tptp_problem
from .translate import translate_problem

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
REVIEW_QUEUE_NAME = "review_queue.json"
PROVENANCE_NAME = "provenance.jsonl"


@dataclass
class ConversionOutcome:
    source: str
    problem: Optional[LeanProblem] = None
    review_reason: Optional[str] = None
    environment_error: Optional[str] = None


@dataclass
class ConversionSummary:
    written: List[ManifestEntry] = field(default_factory=list)
    review_queue: List[Dict[str, Any]] = field(default_factory=list)
    environment_errors: List[str] = field(default_factory=list)
    manifest_path: Optional[Path] = None

    def to_text(self) -> str:
        return (
            f"Theorems written: {len(self.written)}\n"
            f"Sent to review: {len(self.review_queue)}\n"
            f"Environment errors: {len(self.environment_errors)}\n"
        )


def collect_problem_files(inputs: Sequence[Path]) -> List[Path]:
    """Expand directories to their `.p` files; keep explicit files as given."""
    files: List[Path] = []
    for item in inputs:
        item = Path(item)
        if item.is_dir():
            files.extend(sorted(item.rglob("*.p")))
        else:
            files.append(item)
    return files


def convert_problem(
    path: Path,
    gateway: ModelGateway,
    verifier: CheckerAdapter,
    settings: DatasetSettings,
    imports: Sequence[str],
    domain: Optional[str] = None,
) -> ConversionOutcome:
    source = str(path)
    try:
        tptp = load_tptp_problem(path, Path(settings.tptp_root), domain)
        draft = translate_problem(gateway, verifier, tptp, settings.max_attempts, imports)
        if not draft.provenance.verified:
            return ConversionOutcome(source, draft, review_reason="no verified translation")
        problem = postprocess(draft, imports, verifier)
        if not settings.skip_optimize:
            problem = optimize_context(gateway, verifier, problem)
        if not problem.provenance.verified:
            return ConversionOutcome(source, problem, review_reason="normalized file does not verify")
        return ConversionOutcome(source, problem)
    except (TptpSyntaxError, UnsupportedDialectError, ProblemStructureError, StructureError) as exc:
        return ConversionOutcome(source, review_reason=f"{type(exc).__name__}: {exc}")
    except (OSError, UnicodeDecodeError) as exc:
        logger.warning("cannot read %s: %s", source, exc)
        return ConversionOutcome(source, review_reason=f"{type(exc).__name__}: {exc}")
    except (GatewayError, CheckerEnvironmentError) as exc:
        logger.error("environment failure on %s: %s", source, exc)
        return ConversionOutcome(source, environment_error=f"{type(exc).__name__}: {exc}")


def _theorem_path(problem: LeanProblem) -> str:
    return f"{problem.theorem.domain}/{problem.theorem.id}.lean"


def run_conversion(
    inputs: Sequence[Path],
    out_dir: Path,
    gateway: ModelGateway,
    verifier: CheckerAdapter,
    settings: DatasetSettings,
    imports: Sequence[str] = ("import Mathlib",),
    domain: Optional[str] = None,
    workers: Optional[int] = None,
) -> ConversionSummary:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = collect_problem_files(inputs)
    logger.info("converting %d TPTP problems into %s", len(files), out_dir)

    outcomes: List[ConversionOutcome] = []
    with ThreadPoolExecutor(max_workers=workers or settings.workers) as pool:
        futures = [pool.submit(convert_problem, f, gateway, verifier, settings, imports, domain) for f in files]
        for future in tqdm(as_completed(futures), total=len(futures), desc="Converting"):
            outcomes.append(future.result())
    outcomes.sort(key=lambda o: o.source)

    summary = ConversionSummary()
    with (out_dir / PROVENANCE_NAME).open("w", encoding="utf-8") as provenance:
        for outcome in outcomes:
            if outcome.environment_error:
                summary.environment_errors.append(f"{outcome.source}: {outcome.environment_error}")
                continue
            if outcome.review_reason:
                item: Dict[str, Any] = {"source": outcome.source, "reason": outcome.review_reason}
                if outcome.problem is not None:
                    item["provenance"] = outcome.problem.provenance.to_dict()
                    item["draft"] = outcome.problem.theorem.conjecture_source
                summary.review_queue.append(item)
                continue
            problem = outcome.problem
            rel = _theorem_path(problem)
            target = out_dir / rel
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_text(problem.file_text(), encoding="utf-8")
            summary.written.append(
                ManifestEntry(path=rel, id=problem.theorem.id, domain=problem.theorem.domain, origin=problem.theorem.origin)
            )
            provenance.write(json.dumps({"id": problem.theorem.id, **problem.provenance.to_dict()}) + "\n")

    manifest = build_manifest(summary.written, root=out_dir)
    summary.manifest_path = out_dir / MANIFEST_NAME
    write_manifest(manifest, summary.manifest_path)
    (out_dir / REVIEW_QUEUE_NAME).write_text(json.dumps(summary.review_queue, indent=2) + "\n", encoding="utf-8")
    logger.info(
        "wrote %d theorems, %d to review, %d environment errors",
        len(summary.written), len(summary.review_queue), len(summary.environment_errors),
    )
    return summary
