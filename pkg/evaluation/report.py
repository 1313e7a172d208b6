"""
Render report tables (aligned text, CSV) and pass-rate curves.
"""
from pathlib import Path
from typing import Dict, List, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import pandas as pd

from .metrics import ReportTable, format_percent, max_revision, pass_rate_curve
from .records import RunRecord


def table_frame(table: ReportTable) -> pd.DataFrame:
    rows = [
        {"Domain": row.domain, "Theorems": row.theorems, "Solved": row.solved, "Pass rate": format_percent(row.rate)}
        for row in table.rows
    ]
    total = sum(row.theorems for row in table.rows)
    solved = sum(row.solved for row in table.rows)
    rows.append({"Domain": "Avg.", "Theorems": total, "Solved": solved, "Pass rate": format_percent(table.average)})
    rows.append({"Domain": "Macro avg.", "Theorems": "", "Solved": "", "Pass rate": format_percent(table.macro_average)})
    return pd.DataFrame(rows, columns=["Domain", "Theorems", "Solved", "Pass rate"])


def render_text(table: ReportTable) -> str:
    header = f"Method: {table.method}   Revision cutoff: {table.revision_cutoff}"
    return header + "\n" + table_frame(table).to_string(index=False) + "\n"


def csv_frame(table: ReportTable) -> pd.DataFrame:
    """Raw counts and exact fractions alongside the float rate."""
    rows = [
        {
            "method": table.method,
            "cutoff": table.revision_cutoff,
            "domain": row.domain,
            "theorems": row.theorems,
            "solved": row.solved,
            "fraction": f"{row.solved}/{row.theorems}",
            "rate": float(row.rate),
        }
        for row in table.rows
    ]
    total = sum(row.theorems for row in table.rows)
    solved = sum(row.solved for row in table.rows)
    rows.append({
        "method": table.method, "cutoff": table.revision_cutoff, "domain": "Avg.",
        "theorems": total, "solved": solved, "fraction": f"{solved}/{total}", "rate": float(table.average),
    })
    rows.append({
        "method": table.method, "cutoff": table.revision_cutoff, "domain": "Macro avg.",
        "theorems": "", "solved": "", "fraction": str(table.macro_average), "rate": float(table.macro_average),
    })
    return pd.DataFrame(rows)


def render_csv(table: ReportTable) -> str:
    return csv_frame(table).to_csv(index=False)


def plot_pass_rate_curves(records_by_method: Dict[str, Sequence[RunRecord]], output_file: Path) -> Path:
    """Line chart: cumulative pass rate against revision, one line per method."""
    output_file = Path(output_file)
    output_file.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(8, 5))
    for method, records in sorted(records_by_method.items()):
        top = max_revision(records)
        if top == 0:
            continue
        curve: List[float] = [float(rate) * 100 for rate in pass_rate_curve(records, top)]
        ax.plot(range(1, top + 1), curve, marker="o", label=method)
    ax.set_xlabel("Revision")
    ax.set_ylabel("Cumulative pass rate (%)")
    ax.set_title("Pass rate across revisions")
    ax.grid(alpha=0.3)
    ax.legend()
    plt.tight_layout()
    plt.savefig(output_file, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return output_file
