from __future__ import annotations

"""
Dataset manifest: one Lean file per theorem plus a JSON index.

{
  "schema_version": 1,
  "entries": [{"path": "GEO6/GEO600+1.lean", "id": "GEO600+1", "domain": "GEO6", "origin": "TptpRevised"}],
  "stats": {"GEO6": 1}
}

Entry paths are relative to the manifest file's directory.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional

import pandas as pd

from prover.theorem import Theorem, TheoremOrigin, TheoremStructureError, load_theorem

MANIFEST_SCHEMA_VERSION = 1

# Per-domain counts of the TPTP-revised set and the origin totals it was
# published with (324 revised + 123 manual = 447).
REFERENCE_DOMAIN_COUNTS: Dict[str, int] = {
    "FLD1": 77,
    "FLD2": 32,
    "GEO6": 44,
    "GEO8": 41,
    "GEO9": 8,
    "GRP5": 10,
    "KRS1": 67,
    "NUM9": 36,
    "SET1": 9,
}
REFERENCE_ORIGIN_TOTALS: Dict[str, int] = {
    TheoremOrigin.TPTP_REVISED.value: 324,
    TheoremOrigin.MANUAL.value: 123,
}


class ManifestError(ValueError):
    """Raised when a manifest file cannot be read."""


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    id: str
    domain: str
    origin: TheoremOrigin = TheoremOrigin.TPTP_REVISED

    def to_dict(self) -> Dict[str, Any]:
        return {"path": self.path, "id": self.id, "domain": self.domain, "origin": self.origin.value}


@dataclass
class Manifest:
    entries: List[ManifestEntry] = field(default_factory=list)
    stats: Dict[str, int] = field(default_factory=dict)
    root: Path = field(default_factory=Path)

    def recompute_stats(self) -> Dict[str, int]:
        counts: Dict[str, int] = {}
        for entry in self.entries:
            counts[entry.domain] = counts.get(entry.domain, 0) + 1
        return dict(sorted(counts.items()))

    def resolve(self, entry: ManifestEntry) -> Path:
        return self.root / entry.path

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema_version": MANIFEST_SCHEMA_VERSION,
            "entries": [e.to_dict() for e in self.entries],
            "stats": dict(sorted(self.stats.items())),
        }


def load_manifest(path: Path) -> Manifest:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ManifestError(f"manifest not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest {path} is not valid JSON: {exc}") from exc
    try:
        entries = [
            ManifestEntry(
                path=e["path"],
                id=e["id"],
                domain=e.get("domain", "unknown"),
                origin=TheoremOrigin(e.get("origin", TheoremOrigin.TPTP_REVISED.value)),
            )
            for e in data.get("entries", [])
        ]
    except (KeyError, ValueError, TypeError) as exc:
        raise ManifestError(f"manifest {path} has a malformed entry: {exc}") from exc
    return Manifest(entries=entries, stats=dict(data.get("stats", {})), root=path.parent)


def write_manifest(manifest: Manifest, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest.to_dict(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def load_theorems(manifest: Manifest) -> List[Theorem]:
    return [
        load_theorem(manifest.resolve(e), theorem_id=e.id, domain=e.domain, origin=e.origin)
        for e in manifest.entries
    ]


@dataclass
class ValidationReport:
    total: int = 0
    domain_counts: Dict[str, int] = field(default_factory=dict)
    origin_counts: Dict[str, int] = field(default_factory=dict)
    mismatches: List[str] = field(default_factory=list)
    duplicate_ids: List[str] = field(default_factory=list)
    unreadable: List[str] = field(default_factory=list)
    invalid: List[str] = field(default_factory=list)
    reference_mismatches: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (
            self.mismatches or self.duplicate_ids or self.unreadable or self.invalid or self.reference_mismatches
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "ok": self.ok,
            "total": self.total,
            "domain_counts": self.domain_counts,
            "origin_counts": self.origin_counts,
            "mismatches": self.mismatches,
            "duplicate_ids": self.duplicate_ids,
            "unreadable": self.unreadable,
            "invalid": self.invalid,
            "reference_mismatches": self.reference_mismatches,
        }

    def to_text(self) -> str:
        lines = [f"Manifest validation: {'OK' if self.ok else 'FAILED'}", f"Theorems: {self.total}", ""]
        if self.domain_counts:
            lines.append("Per-domain counts:")
            lines.extend(f"- {d}: {n}" for d, n in self.domain_counts.items())
            lines.append("")
        for title, items in (
            ("Stats mismatches", self.mismatches),
            ("Duplicate ids", self.duplicate_ids),
            ("Unreadable files", self.unreadable),
            ("Invalid theorem files", self.invalid),
            ("Reference mismatches", self.reference_mismatches),
        ):
            if items:
                lines.append(f"{title}:")
                lines.extend(f"- {item}" for item in items)
                lines.append("")
        return "\n".join(lines).rstrip() + "\n"


def _dup_report(df: pd.DataFrame, col: str) -> List[str]:
    vc = df[col].astype(str).value_counts(dropna=False)
    dups = vc[vc > 1]
    return [f"{idx} (x{int(cnt)})" for idx, cnt in dups.items()]


def validate_manifest(manifest: Manifest, check_reference: bool = False) -> ValidationReport:
    """
    Recompute per-domain counts over readable files, check id uniqueness and
    that every file parses into a theorem. With check_reference, also compare
    against the published dataset sizes.
    """
    report = ValidationReport(total=len(manifest.entries))
    if not manifest.entries:
        for domain, stated in sorted(manifest.stats.items()):
            if stated:
                report.mismatches.append(f"{domain}: stats say {stated}, 0 files present")
        if check_reference:
            _compare_reference(report, pd.DataFrame(columns=["id", "domain", "origin", "readable"]))
        return report

    rows = []
    for entry in manifest.entries:
        readable = True
        try:
            theorem = load_theorem(manifest.resolve(entry), theorem_id=entry.id, domain=entry.domain, origin=entry.origin)
            theorem.check_structure()
        except (FileNotFoundError, PermissionError, UnicodeDecodeError, IsADirectoryError) as exc:
            readable = False
            report.unreadable.append(f"{entry.path}: {exc}")
        except TheoremStructureError as exc:
            report.invalid.append(f"{entry.path}: {exc}")
        rows.append({"id": entry.id, "domain": entry.domain, "origin": entry.origin.value, "readable": readable})
    df = pd.DataFrame(rows)

    present = df[df["readable"]]
    report.domain_counts = {str(k): int(v) for k, v in present["domain"].value_counts().sort_index().items()}
    report.origin_counts = {str(k): int(v) for k, v in present["origin"].value_counts().sort_index().items()}
    for domain in sorted(set(manifest.stats) | set(report.domain_counts)):
        stated = int(manifest.stats.get(domain, 0))
        found = report.domain_counts.get(domain, 0)
        if stated != found:
            report.mismatches.append(f"{domain}: stats say {stated}, {found} files present")
    report.duplicate_ids = _dup_report(df, "id")
    if check_reference:
        _compare_reference(report, present)
    return report


def _compare_reference(report: ValidationReport, present: pd.DataFrame) -> None:
    revised = present[present["origin"] == TheoremOrigin.TPTP_REVISED.value] if len(present) else present
    counts = revised["domain"].value_counts().to_dict() if len(revised) else {}
    for domain, expected in REFERENCE_DOMAIN_COUNTS.items():
        found = int(counts.get(domain, 0))
        if found != expected:
            report.reference_mismatches.append(f"{domain}: expected {expected} TPTP-revised theorems, found {found}")
    for origin, expected in REFERENCE_ORIGIN_TOTALS.items():
        found = int(report.origin_counts.get(origin, 0))
        if found != expected:
            report.reference_mismatches.append(f"{origin}: expected {expected} theorems, found {found}")
    expected_total = sum(REFERENCE_ORIGIN_TOTALS.values())
    found_total = sum(report.origin_counts.values())
    if found_total != expected_total:
        report.reference_mismatches.append(f"total: expected {expected_total} theorems, found {found_total}")


def write_report(report: ValidationReport, out_dir: Path, stem: str = "validation_report") -> Dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    text_path = out_dir / f"{stem}.txt"
    json_path = out_dir / f"{stem}.json"
    text_path.write_text(report.to_text(), encoding="utf-8")
    json_path.write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    return {"text": text_path, "json": json_path}


def build_manifest(entries: List[ManifestEntry], root: Optional[Path] = None) -> Manifest:
    manifest = Manifest(entries=list(entries), root=Path(root) if root else Path())
    manifest.stats = manifest.recompute_stats()
    return manifest


def stats_from_mapping(data: Mapping[str, int]) -> Dict[str, int]:
    return {str(k): int(v) for k, v in sorted(data.items())}
