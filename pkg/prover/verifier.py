from __future__ import annotations

"""
Proof verification against the Lean 4 checker (or a rule-based mock).

Diagnostics keep the checker's coordinates: 1-based lines of the assembled
file and 0-based columns. `Verdict.line_offset` records how many lines of the
assembled file precede the proof, and `rebase_diagnostics` maps diagnostics
back onto proof lines for error alignment.
"""

import json
import logging
import os
import re
import shlex
import shutil
import subprocess
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

from .config import VerifierSettings
from .lean_source import declaration_head, find_assign, find_tokens, split_declarations, THEOREM_KINDS
from .theorem import Theorem

logger = logging.getLogger(__name__)


class CheckerEnvironmentError(RuntimeError):
    """Raised when the checker cannot be run at all (binary missing, bad project root)."""


class VerdictStatus(str, Enum):
    PASS = "Pass"
    FAIL = "Fail"


class Severity(str, Enum):
    ERROR = "Error"
    WARNING = "Warning"


@dataclass(frozen=True)
class Diagnostic:
    line: int
    column: int
    severity: Severity
    message: str
    column_base: int = 0  # Lean reports 0-based columns
    kind: str = "checker"  # checker | placeholder | timeout | statement | exit | mock

    def __post_init__(self) -> None:
        if self.line < 1:
            raise ValueError(f"diagnostic line must be >= 1, got {self.line}")
        if not self.message:
            raise ValueError("diagnostic message must be non-empty")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "line": self.line,
            "column": self.column,
            "severity": self.severity.value,
            "message": self.message,
            "column_base": self.column_base,
            "kind": self.kind,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Diagnostic":
        return cls(
            line=int(data["line"]),
            column=int(data["column"]),
            severity=Severity(data["severity"]),
            message=data["message"],
            column_base=int(data.get("column_base", 0)),
            kind=data.get("kind", "checker"),
        )


@dataclass(frozen=True)
class Verdict:
    status: VerdictStatus
    diagnostics: Tuple[Diagnostic, ...] = ()
    raw_output: str = ""
    duration: float = 0.0
    residual: Tuple[str, ...] = ()
    warnings: Tuple[Diagnostic, ...] = ()
    line_offset: int = 0
    timed_out: bool = False
    truncated: bool = False
    output_cap: int = 0

    @property
    def passed(self) -> bool:
        return self.status is VerdictStatus.PASS

    @property
    def errors(self) -> List[Diagnostic]:
        return [d for d in self.diagnostics if d.severity is Severity.ERROR]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "status": self.status.value,
            "diagnostics": [d.to_dict() for d in self.diagnostics],
            "raw_output": self.raw_output,
            "duration": round(self.duration, 3),
            "residual": list(self.residual),
            "warnings": [d.to_dict() for d in self.warnings],
            "line_offset": self.line_offset,
            "timed_out": self.timed_out,
            "truncated": self.truncated,
            "output_cap": self.output_cap,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Verdict":
        return cls(
            status=VerdictStatus(data["status"]),
            diagnostics=tuple(Diagnostic.from_dict(d) for d in data.get("diagnostics", ())),
            raw_output=data.get("raw_output", ""),
            duration=float(data.get("duration", 0.0)),
            residual=tuple(data.get("residual", ())),
            warnings=tuple(Diagnostic.from_dict(d) for d in data.get("warnings", ())),
            line_offset=int(data.get("line_offset", 0)),
            timed_out=bool(data.get("timed_out", False)),
            truncated=bool(data.get("truncated", False)),
            output_cap=int(data.get("output_cap", 0)),
        )


# -------------------------------------------------------------------
# Diagnostic parsing
# -------------------------------------------------------------------

HEADER = re.compile(
    r"^(?P<file>[^\s:][^:]*?):(?P<line>\d+):(?P<col>\d+):\s*"
    r"(?P<severity>error|warning|info|information)(?:\([^)]*\))?:\s?(?P<message>.*)$"
)

_SEVERITIES = {"error": Severity.ERROR, "warning": Severity.WARNING}


def parse_diagnostics_with_residual(raw_output: str) -> Tuple[List[Diagnostic], List[str]]:
    """
    Parse `file:line:col: severity: message` records. Non-header lines that
    follow a header (up to the next blank line) continue its message; info
    records and every other line go to the residual list.
    """
    records: List[Dict[str, Any]] = []
    residual: List[str] = []
    current: Optional[Dict[str, Any]] = None
    for line in raw_output.splitlines():
        m = HEADER.match(line)
        if m:
            severity = _SEVERITIES.get(m.group("severity"))
            if severity is None:
                residual.append(line)
                current = None
                continue
            current = {
                "line": max(1, int(m.group("line"))),
                "column": int(m.group("col")),
                "severity": severity,
                "lines": [m.group("message")],
            }
            records.append(current)
        elif current is not None and line.strip():
            current["lines"].append(line)
        else:
            if line.strip():
                residual.append(line)
            current = None

    diagnostics = []
    for rec in records:
        message = "\n".join(rec["lines"]).strip("\n")
        if not message.strip():
            message = "(no message)"
        diagnostics.append(Diagnostic(rec["line"], rec["column"], rec["severity"], message))
    diagnostics.sort(key=lambda d: (d.line, d.column))
    return diagnostics, residual


def parse_diagnostics(raw_output: str) -> List[Diagnostic]:
    return parse_diagnostics_with_residual(raw_output)[0]


def find_placeholders(source: str, keywords: Sequence[str], line_offset: int = 0) -> List[Diagnostic]:
    """Synthetic errors for placeholder tokens in code (comments and strings ignored)."""
    return [
        Diagnostic(
            line=line + line_offset,
            column=column,
            severity=Severity.ERROR,
            message=f"placeholder '{word}' is not accepted as a proof",
            kind="placeholder",
        )
        for line, column, word in find_tokens(source, tuple(keywords))
    ]


def _gate_error(line: int, message: str) -> Diagnostic:
    return Diagnostic(line=line, column=0, severity=Severity.ERROR, message=message, kind="statement")


def _statement_diagnostics(proof_source: str, theorem: Theorem) -> List[Diagnostic]:
    """
    A proof written as full declarations must declare the conjecture under its
    own name with the same statement, and may not add axioms. Helper lemmas
    are allowed.
    """
    target_theorems = [d for d in split_declarations(theorem.conjecture_source) if d.kind in THEOREM_KINDS]
    if not target_theorems:
        return []
    expected = declaration_head(target_theorems[0].text)
    name = target_theorems[0].name

    problems: List[Diagnostic] = []
    declared = False
    has_theorem = False
    offset = 0
    for decl in split_declarations(proof_source):
        line = offset + 1
        offset += decl.text.count("\n") + 1
        if decl.kind in ("axiom", "axioms"):
            problems.append(_gate_error(line, f"proof may not introduce axiom '{decl.name}'"))
        if decl.kind not in THEOREM_KINDS:
            continue
        has_theorem = True
        if decl.name != name:
            continue
        if declared:
            problems.append(_gate_error(line, f"'{name}' is declared more than once"))
        elif declaration_head(decl.text) != expected:
            problems.append(_gate_error(line, f"statement of '{name}' differs from the conjecture"))
        declared = True
    if has_theorem and not declared:
        problems.append(_gate_error(1, f"proof does not declare the conjecture '{name}'"))
    return problems


def _has_theorem(source: str) -> bool:
    return any(d.kind in THEOREM_KINDS for d in split_declarations(source))


def assemble_source(
    proof_source: str, theorem: Theorem, imports: Sequence[str] = ()
) -> Tuple[str, int]:
    """
    Build a self-contained Lean file: imports, theorem context, then the proof.
    A proof without a theorem declaration is treated as the tactic body of the
    conjecture. Returns (file_text, line_offset of the first proof line).
    """
    header: List[str] = []
    for line in list(imports) + list(theorem.imports):
        if line not in header:
            header.append(line)
    parts: List[str] = []
    if header:
        parts.append("\n".join(header))
        parts.append("")
    if theorem.context_source.strip():
        parts.append(theorem.context_source.strip("\n"))
        parts.append("")
    if _has_theorem(proof_source):
        prefix = "\n".join(parts)
        body = proof_source
    else:
        conj = theorem.conjecture_source.strip("\n")
        idx = find_assign(conj)
        head = (conj if idx is None else conj[:idx]).rstrip()
        parts.append(f"{head} := by")
        prefix = "\n".join(parts)
        body = "\n".join("  " + line if line.strip() else line for line in proof_source.split("\n"))
    text = f"{prefix}\n{body}" if prefix else body
    line_offset = prefix.count("\n") + 1 if prefix else 0
    return text.rstrip("\n") + "\n", line_offset


def rebase_diagnostics(verdict: Verdict) -> List[Diagnostic]:
    """Map diagnostics to proof-relative lines; lines before the proof clamp to 1."""
    if verdict.line_offset == 0:
        return list(verdict.diagnostics)
    return [replace(d, line=max(1, d.line - verdict.line_offset)) for d in verdict.diagnostics]


def _truncate(text: str, cap: int) -> Tuple[str, bool]:
    data = text.encode("utf-8")
    if cap <= 0 or len(data) <= cap:
        return text, False
    return data[:cap].decode("utf-8", errors="ignore"), True


def _finish(
    diagnostics: List[Diagnostic],
    exit_ok: bool,
    raw_output: str,
    residual: List[str],
    duration: float,
    line_offset: int,
    cap: int,
    timed_out: bool = False,
) -> Verdict:
    errors = [d for d in diagnostics if d.severity is Severity.ERROR]
    warnings = [d for d in diagnostics if d.severity is Severity.WARNING]
    passed = exit_ok and not errors
    raw, truncated = _truncate(raw_output, cap)
    if passed:
        kept: List[Diagnostic] = []
    else:
        kept = sorted(diagnostics, key=lambda d: (d.line, d.column))
        warnings = []
    return Verdict(
        status=VerdictStatus.PASS if passed else VerdictStatus.FAIL,
        diagnostics=tuple(kept),
        raw_output=raw,
        duration=duration,
        residual=tuple(residual),
        warnings=tuple(sorted(warnings, key=lambda d: (d.line, d.column))),
        line_offset=line_offset,
        timed_out=timed_out,
        truncated=truncated,
        output_cap=cap,
    )


# -------------------------------------------------------------------
# Adapters
# -------------------------------------------------------------------

class CheckerAdapter:
    """Common compile() path: assemble, gate placeholders, delegate."""

    def __init__(self, settings: VerifierSettings):
        self.settings = settings

    def compile(self, proof_source: str, theorem: Theorem, allow_placeholders: bool = False) -> Verdict:
        source, offset = assemble_source(proof_source, theorem, self.settings.imports)
        extra = _statement_diagnostics(proof_source, theorem)
        if not allow_placeholders:
            extra += find_placeholders(proof_source, self.settings.placeholder_keywords)
        extra = [replace(d, line=d.line + offset) for d in extra]
        return self._run(source, theorem.id, offset, extra)

    def compile_source(self, source: str, source_id: str, allow_placeholders: bool = True) -> Verdict:
        """Compile an already assembled file (dataset construction)."""
        extra = [] if allow_placeholders else find_placeholders(source, self.settings.placeholder_keywords)
        return self._run(source, source_id, 0, extra)

    def _run(self, source: str, source_id: str, line_offset: int, extra: List[Diagnostic]) -> Verdict:
        raise NotImplementedError


_SAFE_ID = re.compile(r"[^A-Za-z0-9_.-]+")


class LeanCheckerAdapter(CheckerAdapter):
    """Runs the configured command (default `lake env lean {file}`) in a scratch directory."""

    def _command(self, file_path: Path) -> List[str]:
        slots = {"file": str(file_path), "project_root": str(Path(self.settings.project_root).resolve())}
        return [token.format(**slots) for token in shlex.split(self.settings.command)]

    def _run(self, source: str, source_id: str, line_offset: int, extra: List[Diagnostic]) -> Verdict:
        scratch_root = self.settings.scratch_dir
        if scratch_root:
            Path(scratch_root).mkdir(parents=True, exist_ok=True)
        workdir = Path(tempfile.mkdtemp(prefix=f"dream-{_SAFE_ID.sub('_', source_id)[:40]}-", dir=scratch_root))
        file_path = workdir / "Main.lean"
        file_path.write_text(source, encoding="utf-8")
        cmd = self._command(file_path)
        start = time.monotonic()
        try:
            proc = subprocess.run(
                cmd,
                cwd=self.settings.project_root,
                capture_output=True,
                text=True,
                timeout=self.settings.timeout_seconds,
            )
        except FileNotFoundError as exc:
            raise CheckerEnvironmentError(f"checker command not found: {cmd[0]!r} ({exc})") from exc
        except NotADirectoryError as exc:
            raise CheckerEnvironmentError(f"bad checker project root {self.settings.project_root!r}") from exc
        except subprocess.TimeoutExpired as exc:
            duration = time.monotonic() - start
            partial = exc.stdout or ""
            if isinstance(partial, bytes):
                partial = partial.decode("utf-8", errors="replace")
            logger.warning("checker timed out after %.1fs on %s", duration, source_id)
            timeout = Diagnostic(
                line=max(1, line_offset + 1),
                column=0,
                severity=Severity.ERROR,
                message=f"timeout: checker exceeded {self.settings.timeout_seconds}s",
                kind="timeout",
            )
            return _finish(
                extra + [timeout], False, partial, [], duration, line_offset,
                self.settings.output_cap_bytes, timed_out=True,
            )
        finally:
            if not self.settings.keep_artifacts:
                shutil.rmtree(workdir, ignore_errors=True)
        duration = time.monotonic() - start

        output = (proc.stdout or "") + (proc.stderr or "")
        diagnostics, residual = parse_diagnostics_with_residual(output)
        diagnostics += extra
        if proc.returncode != 0 and not any(d.severity is Severity.ERROR for d in diagnostics):
            diagnostics.append(
                Diagnostic(
                    line=max(1, line_offset + 1),
                    column=0,
                    severity=Severity.ERROR,
                    message=f"checker exited with status {proc.returncode}",
                    kind="exit",
                )
            )
        logger.debug("checked %s in %.2fs (exit %d)", source_id, duration, proc.returncode)
        return _finish(
            diagnostics, proc.returncode == 0, output, residual, duration, line_offset,
            self.settings.output_cap_bytes,
        )


@dataclass(frozen=True)
class MockRule:
    pattern: str
    regex: bool = False
    target: str = "proof"  # "proof" | "file"

    def matches(self, proof_source: str, file_source: str) -> bool:
        subject = proof_source if self.target == "proof" else file_source
        if self.regex:
            return re.fullmatch(self.pattern, subject.strip(), re.DOTALL) is not None
        return subject.strip() == self.pattern.strip()


@dataclass(frozen=True)
class MockEntry:
    accept: Tuple[MockRule, ...] = ()
    fail_output: str = ""


DEFAULT_FAIL_OUTPUT = "Main.lean:1:0: error: mock checker rejected the proof"


class MockCheckerAdapter(CheckerAdapter):
    """
    Rule table keyed by theorem id (or "*"): accepted proofs pass, anything
    else fails with the entry's canned output. Diagnostic lines in the canned
    output are proof-relative, so mock verdicts use line_offset 0.
    """

    def __init__(self, settings: VerifierSettings, rules: Mapping[str, MockEntry]):
        super().__init__(settings)
        self.rules = dict(rules)

    @classmethod
    def from_mapping(cls, settings: VerifierSettings, data: Mapping[str, Any]) -> "MockCheckerAdapter":
        rules: Dict[str, MockEntry] = {}
        for key, entry in data.items():
            accept = []
            for rule in entry.get("accept", ()):
                if "exact" in rule:
                    accept.append(MockRule(rule["exact"], False, rule.get("target", "proof")))
                elif "regex" in rule:
                    accept.append(MockRule(rule["regex"], True, rule.get("target", "proof")))
                else:
                    raise ValueError(f"mock rule for {key!r} needs 'exact' or 'regex'")
            rules[str(key)] = MockEntry(tuple(accept), entry.get("fail_output", ""))
        return cls(settings, rules)

    @classmethod
    def from_file(cls, settings: VerifierSettings, path: Path) -> "MockCheckerAdapter":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise CheckerEnvironmentError(f"mock rule table not found: {path}") from exc
        return cls.from_mapping(settings, data)

    def _entry(self, source_id: str) -> MockEntry:
        return self.rules.get(source_id) or self.rules.get("*") or MockEntry()

    def compile(self, proof_source: str, theorem: Theorem, allow_placeholders: bool = False) -> Verdict:
        source, _ = assemble_source(proof_source, theorem, self.settings.imports)
        extra = _statement_diagnostics(proof_source, theorem)
        if not allow_placeholders:
            extra += find_placeholders(proof_source, self.settings.placeholder_keywords)
        return self._judge(proof_source, source, theorem.id, extra)

    def _run(self, source: str, source_id: str, line_offset: int, extra: List[Diagnostic]) -> Verdict:
        return self._judge(source, source, source_id, extra)

    def _judge(self, proof_source: str, file_source: str, source_id: str, extra: List[Diagnostic]) -> Verdict:
        start = time.monotonic()
        entry = self._entry(source_id)
        accepted = any(rule.matches(proof_source, file_source) for rule in entry.accept)
        if accepted:
            return _finish(extra, True, "", [], time.monotonic() - start, 0, self.settings.output_cap_bytes)
        output = entry.fail_output or DEFAULT_FAIL_OUTPUT
        diagnostics, residual = parse_diagnostics_with_residual(output)
        if not any(d.severity is Severity.ERROR for d in diagnostics):
            diagnostics.append(Diagnostic(1, 0, Severity.ERROR, "mock checker rejected the proof", kind="mock"))
        return _finish(
            diagnostics + extra, False, output, residual, time.monotonic() - start, 0,
            self.settings.output_cap_bytes,
        )


def compile_proof(proof_source: str, theorem: Theorem, adapter: CheckerAdapter) -> Verdict:
    """Strict-mode compile of one proof against one theorem."""
    return adapter.compile(proof_source, theorem, allow_placeholders=False)


def compile_many(
    adapter: CheckerAdapter,
    jobs: Sequence[Tuple[str, Theorem]],
    workers: Optional[int] = None,
) -> List[Verdict]:
    """Compile (proof, theorem) jobs in parallel; results keep job order."""
    workers = workers or adapter.settings.workers or os.cpu_count() or 1
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: adapter.compile(job[0], job[1]), jobs))


def build_verifier(settings: VerifierSettings) -> CheckerAdapter:
    if settings.kind == "lean":
        return LeanCheckerAdapter(settings)
    if settings.kind == "mock":
        if settings.rules_path:
            return MockCheckerAdapter.from_file(settings, Path(settings.rules_path))
        return MockCheckerAdapter(settings, {})
    raise CheckerEnvironmentError(f"unknown verifier kind {settings.kind!r}")
