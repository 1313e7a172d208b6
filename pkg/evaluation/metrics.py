"""
Cumulative pass rate and per-domain tables.

A theorem counts as solved by cutoff r when some attempt at revision <= r
passed. Rates are exact fractions; only display rounds.
"""
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Set

from .records import RunRecord


class UndefinedMetricError(ValueError):
    """Raised when a rate is asked for over zero theorems."""


def _attempted(records: Sequence[RunRecord]) -> Set[str]:
    return {r.theorem_id for r in records}


def _aborted_unsolved(records: Sequence[RunRecord]) -> Set[str]:
    return {r.theorem_id for r in records if r.kind == "result" and r.aborted and not r.solved}


def solved_by(records: Iterable[RunRecord], upto: int) -> Set[str]:
    return {
        r.theorem_id
        for r in records
        if r.kind == "attempt" and r.verdict_status == "Pass" and r.revision is not None and r.revision <= upto
    }


def _denominator(records: Sequence[RunRecord], count_aborted: bool) -> Set[str]:
    attempted = _attempted(records)
    if not count_aborted:
        attempted -= _aborted_unsolved(records)
    return attempted


def cumulative_pass_rate(records: Sequence[RunRecord], upto: int, count_aborted: bool = True) -> Fraction:
    """
    |theorems with a Pass at revision <= upto| / |theorems attempted|.
    Theorems aborted by an environment error stay in the denominator unless
    count_aborted is False.
    """
    records = list(records)
    theorems = _denominator(records, count_aborted)
    if not theorems:
        raise UndefinedMetricError("no theorems in the run log")
    return Fraction(len(solved_by(records, upto) & theorems), len(theorems))


def pass_rate_curve(records: Sequence[RunRecord], max_revision: int, count_aborted: bool = True) -> List[Fraction]:
    return [cumulative_pass_rate(records, r, count_aborted) for r in range(1, max_revision + 1)]


def max_revision(records: Iterable[RunRecord]) -> int:
    return max((r.revision or 0 for r in records if r.kind == "attempt"), default=0)


def format_percent(rate: Fraction) -> str:
    """One decimal, rounding half up: 3/44 -> '6.8%'."""
    tenths = math.floor(Fraction(rate) * 1000 + Fraction(1, 2))
    return f"{tenths // 10}.{tenths % 10}%"


@dataclass(frozen=True)
class DomainRow:
    domain: str
    theorems: int
    solved: int

    @property
    def rate(self) -> Fraction:
        return Fraction(self.solved, self.theorems)


@dataclass
class ReportTable:
    method: str
    revision_cutoff: int
    rows: List[DomainRow] = field(default_factory=list)
    average: Fraction = Fraction(0)
    macro_average: Fraction = Fraction(0)

    def recompute_average(self) -> Fraction:
        total = sum(row.theorems for row in self.rows)
        return Fraction(sum(row.solved for row in self.rows), total) if total else Fraction(0)


def aggregate_by_domain(
    records: Sequence[RunRecord],
    cutoff: Optional[int] = None,
    method: Optional[str] = None,
    count_aborted: bool = True,
) -> ReportTable:
    """
    One row per domain sorted by domain code. `average` pools all theorems
    (micro); `macro_average` is the mean of the domain rates.
    """
    records = [r for r in records if method is None or r.method == method]
    if not records:
        raise UndefinedMetricError("no records to aggregate")
    cutoff = cutoff if cutoff is not None else max_revision(records)
    methods = sorted({r.method for r in records})
    theorems = _denominator(records, count_aborted)
    solved = solved_by(records, cutoff) & theorems

    domain_of: Dict[str, str] = {}
    for r in records:
        domain_of.setdefault(r.theorem_id, r.domain)
    per_domain: Dict[str, List[str]] = {}
    for theorem_id in theorems:
        per_domain.setdefault(domain_of[theorem_id], []).append(theorem_id)

    rows = [
        DomainRow(domain=d, theorems=len(ids), solved=sum(1 for t in ids if t in solved))
        for d, ids in sorted(per_domain.items())
    ]
    table = ReportTable(method=method or ",".join(methods), revision_cutoff=cutoff, rows=rows)
    if not rows:
        raise UndefinedMetricError("every theorem was excluded from the denominator")
    table.average = table.recompute_average()
    table.macro_average = sum((row.rate for row in rows), Fraction(0)) / len(rows)
    return table
