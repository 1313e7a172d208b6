"""Shared builders for the test suite: a small theorem, stub gateways, mock checkers."""
import json
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional

from dataset_pipeline.manifest import Manifest, ManifestEntry, build_manifest, write_manifest
from prover.config import VerifierSettings
from prover.llm_gateway import ModelGateway, ScriptedBackend
from prover.theorem import Theorem, TheoremOrigin, render_theorem_file
from prover.verifier import MockCheckerAdapter

CONTEXT = "\n".join(
    [
        "axiom U : Type",
        "axiom P : U → Prop",
        "axiom Q : U → Prop",
        "axiom pq : ∀ x : U, P x → Q x",
    ]
)
CONJECTURE = "theorem goal (a : U) (h : P a) : Q a := by\n  sorry"
GOOD_PROOF = "exact pq a h"
BAD_PROOF = "exact bogus"
BAD_ALIGNED = "exact bogus\n-- [DREAM] ERROR(line 1, col 0): mock checker rejected the proof"

THREE_AXIOMS = "1. ax_pq: P implies Q\n2. ax_qr: Q implies R\n3. ax_rs: R implies S"

LEAN_TRANSLATION = "\n".join(
    [
        "import Mathlib",
        "",
        CONTEXT,
        "",
        CONJECTURE,
    ]
)


def fenced(code: str, label: str = "lean") -> str:
    return f"```{label}\n{code}\n```"


def sample_theorem(theorem_id: str = "goal_thm", domain: str = "GEO6", **changes) -> Theorem:
    fields = dict(
        id=theorem_id,
        domain=domain,
        context_source=CONTEXT,
        conjecture_source=CONJECTURE,
        origin=TheoremOrigin.TPTP_REVISED,
    )
    fields.update(changes)
    return Theorem(**fields)


def stub_gateway(script: Mapping[str, str]) -> ModelGateway:
    return ModelGateway(ScriptedBackend(script))


def dream_script(**overrides: str) -> Dict[str, str]:
    """A script for the full loop where no proof passes unless overridden."""
    script = {
        "ProposeAxioms:*": THREE_AXIOMS,
        "SynthesizeAxiom:*": "P implies S through Q and R",
        "ProposeStrategy:*": "1. Instantiate pq at a. 2. Apply it to h.",
        "GenerateProof:*": fenced(BAD_PROOF),
        "AnnotateSubpropositions:*": fenced("-- [DREAM] Sub-proposition: Q a from P a\n" + BAD_ALIGNED),
        "AnalyzeFailures:*": "The proof names an unknown lemma; instantiate pq instead.",
    }
    script.update(overrides)
    return script


def mock_checker(rules: Optional[Mapping[str, object]] = None, **settings) -> MockCheckerAdapter:
    return MockCheckerAdapter.from_mapping(VerifierSettings(**settings), rules or {})


def accepting(*proofs: str, target: str = "proof") -> Dict[str, object]:
    return {"*": {"accept": [{"exact": p, "target": target} for p in proofs]}}


def accept_all(target: str = "proof") -> Dict[str, object]:
    return {"*": {"accept": [{"regex": ".*", "target": target}]}}


def write_dataset(root: Path, theorems: Iterable[Theorem], stats: Optional[Dict[str, int]] = None) -> Path:
    """Write theorem files plus manifest.json under root; return the manifest path."""
    entries: List[ManifestEntry] = []
    for theorem in theorems:
        rel = f"{theorem.domain}/{theorem.id}.lean"
        path = root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(render_theorem_file(theorem), encoding="utf-8")
        entries.append(ManifestEntry(path=rel, id=theorem.id, domain=theorem.domain, origin=theorem.origin))
    manifest: Manifest = build_manifest(entries, root=root)
    if stats is not None:
        manifest.stats = dict(stats)
    write_manifest(manifest, root / "manifest.json")
    return root / "manifest.json"


def write_json(path: Path, data: object) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data), encoding="utf-8")
    return path
