import json
import shutil
from pathlib import Path

import pytest

from dataset_pipeline.manifest import load_manifest, validate_manifest
from dataset_pipeline.postprocess import is_verbatim_subset, optimize_context, postprocess
from dataset_pipeline.problem import LeanProblem, Provenance, StructureError, unchecked_theorem
from dataset_pipeline.run_pipeline import collect_problem_files, run_conversion
from dataset_pipeline.tptp import ProblemStructureError, load_tptp_problem, parse_tptp
from dataset_pipeline.translate import RETRY_HEADER, translate_problem
from prover.config import DatasetSettings
from prover.llm_gateway import PromptRole
from prover.theorem import theorem_from_source
from tests.helpers import CONJECTURE, CONTEXT, LEAN_TRANSLATION, accept_all, fenced, mock_checker, stub_gateway

FIXTURES = Path(__file__).parent / "fixtures" / "tptp"
IMPORTS = ("import Mathlib",)
PROVED = LEAN_TRANSLATION.replace("sorry", "exact pq a h")
TWO_THEOREMS = CONTEXT + "\n\ntheorem one : True := trivial\n\ntheorem two : True := trivial"
EXTRA_CONTEXT = CONTEXT + "\naxiom R : U → Prop"


def _problem(name="SET101+1"):
    return load_tptp_problem(FIXTURES / f"{name}.p")


def _verified(context=EXTRA_CONTEXT):
    theorem = theorem_from_source(f"import Mathlib\n\n{context}\n\n{CONJECTURE}\n", "SET101+1", "SET1")
    return LeanProblem(theorem=theorem, imports=IMPORTS, provenance=Provenance("SET101+1", 1, verified=True))


# --- translation -----------------------------------------------------

def test_translation_retries_with_diagnostics():
    gateway = stub_gateway(
        {
            "TranslateTptp:1": "I would translate it like this, roughly.",
            "TranslateTptp:2": fenced(TWO_THEOREMS),
            "TranslateTptp:3": fenced(LEAN_TRANSLATION),
        }
    )
    result = translate_problem(gateway, mock_checker(accept_all()), _problem(), imports=IMPORTS)

    assert result.provenance.verified
    assert result.provenance.translation_attempts == 3
    assert result.theorem.id == "SET101+1"
    assert result.theorem.domain == "SET1"
    assert result.theorem.context_source == CONTEXT
    assert result.imports == IMPORTS

    prompts = [c.user_text for c in gateway.backend.calls]
    assert RETRY_HEADER not in prompts[0]
    assert "fof(subset_transitive, conjecture," in prompts[0]
    assert "expected exactly one theorem declaration, found 0" in prompts[1]
    assert "expected exactly one theorem declaration, found 2" in prompts[2]


def test_translation_gives_up_after_the_budget():
    gateway = stub_gateway({"TranslateTptp:*": fenced(LEAN_TRANSLATION)})
    result = translate_problem(gateway, mock_checker({}), _problem(), max_attempts=3, imports=IMPORTS)
    assert not result.provenance.verified
    assert result.provenance.translation_attempts == 3
    assert result.provenance.diagnostics == ("line 1, col 0: error: mock checker rejected the proof",)
    assert gateway.backend.count(PromptRole.TRANSLATE_TPTP) == 3


def test_translation_needs_a_single_conjecture():
    problem = parse_tptp("fof(a, axiom, p).", name="SET998+1")
    with pytest.raises(ProblemStructureError):
        translate_problem(stub_gateway({}), mock_checker(accept_all()), problem)


def test_translation_budget_must_be_positive():
    with pytest.raises(ValueError):
        translate_problem(stub_gateway({}), mock_checker(accept_all()), _problem(), max_attempts=0)


# --- post-processing -------------------------------------------------

def test_postprocess_resets_the_proof_and_archives_it():
    draft = LeanProblem(theorem=theorem_from_source(PROVED, "SET101+1", "SET1"), provenance=Provenance("SET101+1"))
    result = postprocess(draft, IMPORTS)
    assert result.theorem.conjecture_source == CONJECTURE
    assert result.theorem.context_source == CONTEXT
    assert result.provenance.archived_body == "by\n  exact pq a h"
    assert result.imports == IMPORTS
    assert result.file_text().startswith("-- id: SET101+1\n")


def test_postprocess_is_idempotent():
    draft = LeanProblem(theorem=theorem_from_source(PROVED, "SET101+1", "SET1"), provenance=Provenance("SET101+1"))
    once = postprocess(draft, IMPORTS)
    assert postprocess(once, IMPORTS) == once


def test_postprocess_rejects_two_theorems():
    draft = LeanProblem(theorem=unchecked_theorem(TWO_THEOREMS, "bad", "SET1"))
    with pytest.raises(StructureError):
        postprocess(draft, IMPORTS)


def test_postprocess_can_reverify():
    draft = LeanProblem(theorem=theorem_from_source(PROVED, "SET101+1", "SET1"), provenance=Provenance("SET101+1"))
    assert postprocess(draft, IMPORTS, verifier=mock_checker(accept_all())).provenance.verified
    assert not postprocess(draft, IMPORTS, verifier=mock_checker({})).provenance.verified


# --- context optimization --------------------------------------------

def test_optimize_keeps_a_verbatim_subset():
    gateway = stub_gateway({"OptimizeContext:1": fenced("import Mathlib\n\n" + CONTEXT)})
    result = optimize_context(gateway, mock_checker(accept_all()), _verified())
    assert result.provenance.optimized
    assert result.theorem.context_source == CONTEXT


@pytest.mark.parametrize(
    "reply,note",
    [
        ("axiom pq : ∀ x : U, P x → Q x\naxiom U : Type", "not a verbatim subset"),
        ("axiom U : Type\naxiom P : U → Prop\naxiom Q : U → Prop\naxiom pq : ∀ y : U, P y → Q y", "not a verbatim subset"),
        (CONTEXT + "\n\ntheorem extra : True := trivial", "contains a theorem"),
    ],
    ids=["reordered", "renamed", "theorem"],
)
def test_optimize_rejects_unfaithful_contexts(reply, note):
    original = _verified()
    result = optimize_context(stub_gateway({"OptimizeContext:1": fenced(reply)}), mock_checker(accept_all()), original)
    assert not result.provenance.optimized
    assert result.theorem == original.theorem
    assert note in result.provenance.notes[-1]


def test_optimize_rejects_a_context_that_no_longer_compiles():
    checker = mock_checker({"*": {"accept": [{"regex": r".*axiom R .*", "target": "file"}]}})
    result = optimize_context(stub_gateway({"OptimizeContext:1": fenced(CONTEXT)}), checker, _verified())
    assert not result.provenance.optimized
    assert "axiom R" in result.theorem.context_source
    assert result.provenance.notes[-1] == "optimize rejected: reduced file does not verify"


def test_optimize_skips_unverified_problems():
    problem = _verified().with_provenance(verified=False)
    gateway = stub_gateway({})
    result = optimize_context(gateway, mock_checker(accept_all()), problem)
    assert result.provenance.notes == ("optimize skipped: problem not verified",)
    assert gateway.backend.calls == []


def test_optimize_survives_gateway_errors():
    result = optimize_context(stub_gateway({}), mock_checker(accept_all()), _verified())
    assert not result.provenance.optimized
    assert result.provenance.notes[-1].startswith("optimize rejected: gateway error")


@pytest.mark.parametrize(
    "reduced,expected",
    [
        ("axiom a : Prop\naxiom c : Prop", True),
        ("", True),
        ("axiom c : Prop\naxiom a : Prop", False),
        ("axiom a : Prop\naxiom a : Prop", False),
        ("axiom a : Prop\naxiom d : Prop", False),
    ],
)
def test_verbatim_subset(reduced, expected):
    assert is_verbatim_subset(reduced, "axiom a : Prop\naxiom b : Prop\naxiom c : Prop") is expected


# --- end to end ------------------------------------------------------

@pytest.fixture
def problem_dir(tmp_path):
    source = tmp_path / "problems"
    source.mkdir()
    for name in ("SET101+1.p", "KRS101+1.p"):
        shutil.copy(FIXTURES / name, source / name)
    (source / "SET999-1.p").write_text("cnf(c1, axiom, p | q).\ncnf(c2, negated_conjecture, ~ p).\n")
    return source


def test_collect_problem_files_expands_directories(problem_dir):
    files = collect_problem_files([problem_dir])
    assert [f.name for f in files] == ["KRS101+1.p", "SET101+1.p", "SET999-1.p"]


def test_conversion_writes_theorems_manifest_and_review_queue(tmp_path, problem_dir):
    gateway = stub_gateway({"TranslateTptp:*": fenced(LEAN_TRANSLATION), "OptimizeContext:*": fenced(CONTEXT)})
    out = tmp_path / "dataset"
    summary = run_conversion([problem_dir], out, gateway, mock_checker(accept_all()), DatasetSettings(workers=2))

    assert [e.id for e in summary.written] == ["KRS101+1", "SET101+1"]
    assert (out / "KRS1" / "KRS101+1.lean").exists()
    assert (out / "SET1" / "SET101+1.lean").read_text().count("sorry") == 1

    queue = json.loads((out / "review_queue.json").read_text())
    assert len(queue) == 1
    assert queue[0]["reason"].startswith("UnsupportedDialectError")

    provenance = [json.loads(line) for line in (out / "provenance.jsonl").read_text().splitlines()]
    assert [p["id"] for p in provenance] == ["KRS101+1", "SET101+1"]
    assert all(p["verified"] and p["optimized"] for p in provenance)

    manifest = load_manifest(summary.manifest_path)
    assert manifest.stats == {"KRS1": 1, "SET1": 1}
    assert validate_manifest(manifest).ok


def test_unverified_translations_go_to_review(tmp_path):
    gateway = stub_gateway({"TranslateTptp:*": fenced(LEAN_TRANSLATION)})
    settings = DatasetSettings(max_attempts=2, workers=1)
    summary = run_conversion([FIXTURES / "SET102+1.p"], tmp_path, gateway, mock_checker({}), settings)
    assert summary.written == []
    (item,) = summary.review_queue
    assert item["reason"] == "no verified translation"
    assert item["provenance"]["translation_attempts"] == 2
    assert "theorem goal" in item["draft"]


def test_backend_failures_are_environment_errors(tmp_path):
    summary = run_conversion([FIXTURES / "SET102+1.p"], tmp_path, stub_gateway({}), mock_checker(accept_all()),
                             DatasetSettings(workers=1))
    assert summary.written == [] and summary.review_queue == []
    assert len(summary.environment_errors) == 1
    assert "ScriptExhaustedError" in summary.environment_errors[0]


def test_translation_that_only_verifies_before_normalizing_goes_to_review(tmp_path):
    gateway = stub_gateway({"TranslateTptp:*": fenced(PROVED), "OptimizeContext:*": fenced(CONTEXT)})
    proved_only = {"*": {"accept": [{"regex": ".*exact pq a h.*", "target": "file"}]}}
    out = tmp_path / "dataset"
    summary = run_conversion([FIXTURES / "SET102+1.p"], out, gateway, mock_checker(proved_only), DatasetSettings(workers=1))
    assert summary.written == []
    (item,) = summary.review_queue
    assert item["reason"] == "normalized file does not verify"
    assert item["provenance"]["verified"] is False
    assert not list(out.glob("*/*.lean"))


def test_unreadable_problem_files_go_to_review_and_the_rest_convert(tmp_path):
    source = tmp_path / "problems"
    source.mkdir()
    shutil.copy(FIXTURES / "SET101+1.p", source / "SET101+1.p")
    (source / "SET100+1.p").write_bytes(b"fof(a, axiom, p).\n% \xff\xfe\n")
    gateway = stub_gateway({"TranslateTptp:*": fenced(LEAN_TRANSLATION), "OptimizeContext:*": fenced(CONTEXT)})
    summary = run_conversion([source], tmp_path / "dataset", gateway, mock_checker(accept_all()), DatasetSettings(workers=1))
    assert [e.id for e in summary.written] == ["SET101+1"]
    (item,) = summary.review_queue
    assert item["reason"].startswith("UnicodeDecodeError")
