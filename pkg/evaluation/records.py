"""
Run log: one JSON object per line.

An `attempt` record is written after every revision, a `result` record once a
theorem is finished. A theorem with a result record counts as completed when
a run is resumed.
"""
import json
import logging
import threading
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Set

from prover.feedback import ProofAttempt
from prover.orchestrator import ProofResult

logger = logging.getLogger(__name__)

RUN_LOG_SCHEMA_VERSION = 1
TIMESTAMP_FIELDS = ("timestamp",)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass(frozen=True)
class RunRecord:
    kind: str  # "attempt" | "result"
    theorem_id: str
    domain: str
    method: str
    revision: Optional[int] = None
    verdict_status: Optional[str] = None
    mode: Optional[str] = None
    error_count: int = 0
    solved: Optional[bool] = None
    aborted: bool = False
    failure_reason: Optional[str] = None
    reverified: Optional[bool] = None
    timestamp: str = ""
    schema_version: int = RUN_LOG_SCHEMA_VERSION

    @classmethod
    def for_attempt(cls, attempt: ProofAttempt, domain: str, method: str, theorem_id: str) -> "RunRecord":
        return cls(
            kind="attempt",
            theorem_id=theorem_id,
            domain=domain,
            method=method,
            revision=attempt.revision,
            verdict_status=attempt.verdict.status.value,
            mode=attempt.mode.value,
            error_count=len(attempt.verdict.errors),
            timestamp=_now(),
        )

    @classmethod
    def for_result(
        cls, result: ProofResult, domain: str, reverified: Optional[bool] = None
    ) -> "RunRecord":
        return cls(
            kind="result",
            theorem_id=result.theorem_id,
            domain=domain,
            method=result.method,
            revision=result.solved_at_revision if result.solved else len(result.attempts),
            verdict_status="Pass" if result.solved else "Fail",
            solved=result.solved,
            aborted=result.aborted,
            failure_reason=result.failure_reason,
            reverified=reverified,
            timestamp=_now(),
        )

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunRecord":
        if not isinstance(data, dict):
            raise ValueError(f"run record must be a JSON object, got {type(data).__name__}")
        version = data.get("schema_version", RUN_LOG_SCHEMA_VERSION)
        if version != RUN_LOG_SCHEMA_VERSION:
            raise ValueError(f"unsupported run log schema_version {version}")
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        return cls(**known)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


class RunLogWriter:
    """Single writer appending records under a lock; each line is flushed."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._handle = self.path.open("a", encoding="utf-8")

    def write(self, record: RunRecord) -> None:
        line = json.dumps(record.to_dict(), ensure_ascii=False)
        with self._lock:
            self._handle.write(line + "\n")
            self._handle.flush()

    def close(self) -> None:
        with self._lock:
            self._handle.close()

    def __enter__(self) -> "RunLogWriter":
        return self

    def __exit__(self, *exc: Any) -> None:
        self.close()


def read_run_log(path: Path) -> List[RunRecord]:
    """
    Read every record. Lines that do not hold a valid record (a torn last line
    from an interrupted run, another schema version, missing fields) are
    skipped with a warning.
    """
    records: List[RunRecord] = []
    path = Path(path)
    if not path.exists():
        return records
    with path.open("r", encoding="utf-8") as f:
        for number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                records.append(RunRecord.from_dict(json.loads(line)))
            except (ValueError, TypeError) as exc:
                logger.warning("skipping unreadable line %d of %s: %s", number, path, exc)
    return records


def rewrite_run_log(path: Path, records: Iterable[RunRecord]) -> None:
    """Replace the log with `records`; the old file stays intact until the new one is complete."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")
    tmp.replace(path)


def completed_theorems(records: Iterable[RunRecord], method: Optional[str] = None) -> Set[str]:
    return {
        r.theorem_id
        for r in records
        if r.kind == "result" and (method is None or r.method == method)
    }


def strip_timestamps(line: str) -> Dict[str, Any]:
    data = json.loads(line)
    for key in TIMESTAMP_FIELDS:
        data.pop(key, None)
    return data
