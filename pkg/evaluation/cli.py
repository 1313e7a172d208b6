from __future__ import annotations

"""
Command-line surface.

    python -m evaluation.cli convert  TPTP_FILES_OR_DIRS --out DIR [--tptp-root DIR] [--max-attempts N] [--skip-optimize]
    python -m evaluation.cli prove    --theorem ID|FILE [--manifest M] [--backend stub|remote|ollama]
                                      [--verifier mock|lean] [--method dream] [--reverify] [--dump-annotated DIR]
    python -m evaluation.cli run      --manifest M --method dream|repeated --out LOG [--resume] [--parallel N]
    python -m evaluation.cli report   --log LOG [--cutoff R] [--format table|csv] [--plot PNG]
    python -m evaluation.cli validate MANIFEST [--reference]

Exit codes: 0 success, 1 usage, 2 environment, 3 validation failure.
"""

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from dataset_pipeline.manifest import ManifestError, load_manifest, validate_manifest, write_report
from dataset_pipeline.run_pipeline import MANIFEST_NAME, run_conversion
from prover.config import ConfigurationError, Settings, load_settings
from prover.feedback import FeedbackPool, dump_annotated
from prover.llm_gateway import GatewayError, build_gateway
from prover.orchestrator import METHODS, ScheduleError, prove_theorem, reverify
from prover.theorem import Theorem, TheoremStructureError, load_theorem
from prover.verifier import CheckerEnvironmentError, build_verifier

from .metrics import UndefinedMetricError, aggregate_by_domain
from .records import RunLogWriter, RunRecord, read_run_log
from .report import plot_pass_rate_curves, render_csv, render_text
from .runner import run_experiment

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_ENVIRONMENT = 2
EXIT_VALIDATION = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse exits with 2 otherwise
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _settings(args: argparse.Namespace) -> Settings:
    return load_settings(args.config)


def cmd_convert(args: argparse.Namespace) -> int:
    settings = _settings(args)
    dataset = settings.dataset
    gateway = build_gateway(settings.gateway, settings.decoding)
    verifier = build_verifier(settings.verifier)
    if args.skip_optimize or args.max_attempts or args.tptp_root:
        dataset = replace(
            dataset,
            skip_optimize=args.skip_optimize or dataset.skip_optimize,
            max_attempts=args.max_attempts or dataset.max_attempts,
            tptp_root=args.tptp_root or dataset.tptp_root,
        )
    summary = run_conversion(
        [Path(p) for p in args.inputs],
        Path(args.out or dataset.output_dir),
        gateway,
        verifier,
        dataset,
        imports=settings.verifier.imports,
        domain=args.domain,
        workers=args.workers,
    )
    print(summary.to_text(), end="")
    if summary.environment_errors and not summary.written and not summary.review_queue:
        return EXIT_ENVIRONMENT
    return EXIT_OK


def _looks_like_path(target: str) -> bool:
    return target.endswith(".lean") or "/" in target or "\\" in target


def _resolve_theorem(args: argparse.Namespace, settings: Settings) -> Theorem:
    """A theorem file path, or an id looked up in the manifest."""
    target = args.theorem or args.theorem_file
    if not target:
        raise UsageError("prove needs a theorem: --theorem <id|file>")
    path = Path(target)
    if path.is_file() or _looks_like_path(target):
        try:
            return load_theorem(path)
        except FileNotFoundError as exc:
            raise UsageError(f"theorem file not found: {target}") from exc

    manifest_path = Path(args.manifest or Path(settings.dataset.output_dir) / MANIFEST_NAME)
    try:
        manifest = load_manifest(manifest_path)
    except ManifestError as exc:
        raise UsageError(f"cannot resolve theorem id {target!r}: {exc}") from exc
    for entry in manifest.entries:
        if entry.id == target:
            return load_theorem(manifest.resolve(entry), theorem_id=entry.id, domain=entry.domain, origin=entry.origin)
    raise UsageError(f"theorem id {target!r} is not in {manifest_path}")


def _with_overrides(settings: Settings, args: argparse.Namespace) -> Settings:
    if args.backend:
        settings = replace(settings, gateway=replace(settings.gateway, kind=args.backend))
    if args.verifier:
        settings = replace(settings, verifier=replace(settings.verifier, kind=args.verifier))
    return settings


def cmd_prove(args: argparse.Namespace) -> int:
    settings = _with_overrides(_settings(args), args)
    try:
        theorem = _resolve_theorem(args, settings)
        theorem.check_structure()
    except TheoremStructureError as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    gateway = build_gateway(settings.gateway, settings.decoding)
    verifier = build_verifier(settings.verifier)
    writer: Optional[RunLogWriter] = RunLogWriter(Path(args.log)) if args.log else None

    def on_attempt(attempt, _annotated) -> None:
        if writer is not None:
            writer.write(RunRecord.for_attempt(attempt, theorem.domain, args.method, theorem.id))

    try:
        result = prove_theorem(
            theorem, gateway, verifier,
            schedule=settings.schedule, feedback=settings.feedback,
            on_attempt=on_attempt, method=args.method,
        )
        confirmed: Optional[bool] = None
        if args.reverify and result.solved:
            verdict = reverify(result, theorem, verifier)
            confirmed = bool(verdict and verdict.passed)
        if writer is not None:
            writer.write(RunRecord.for_result(result, theorem.domain, reverified=confirmed))
    finally:
        if writer is not None:
            writer.close()

    if args.dump_annotated:
        pool = FeedbackPool(theorem_id=theorem.id, annotated=list(result.annotated))
        written = dump_annotated(pool, Path(args.dump_annotated))
        print(f"Annotated proofs written: {len(written)}")
    if args.json:
        Path(args.json).write_text(json.dumps(result.to_dict(), indent=2) + "\n", encoding="utf-8")

    if result.solved:
        print(f"{theorem.id}: solved at revision {result.solved_at_revision}")
        if confirmed is False:
            print("WARNING: final proof did not re-verify")
        print(result.final_proof)
    else:
        print(f"{theorem.id}: not solved ({result.failure_reason})")
    return EXIT_ENVIRONMENT if result.aborted else EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    settings = _settings(args)
    manifest = load_manifest(Path(args.manifest))
    summary = run_experiment(
        manifest,
        args.method,
        settings,
        Path(args.out),
        resume=args.resume,
        parallel=args.parallel,
        check_again=args.reverify,
    )
    print(summary.to_text(), end="")
    if summary.attempted and len(summary.aborted) == len(summary.attempted):
        return EXIT_ENVIRONMENT
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    settings = _settings(args)
    records = []
    for log in args.log:
        if not Path(log).exists():
            raise UsageError(f"run log not found: {log}")
        records.extend(read_run_log(Path(log)))
    methods = sorted({r.method for r in records})
    if args.method:
        methods = [m for m in methods if m == args.method]

    count_aborted = settings.harness.count_aborted and not args.lenient
    chunks: List[str] = []
    by_method: Dict[str, list] = {}
    for method in methods:
        subset = [r for r in records if r.method == method]
        by_method[method] = subset
        table = aggregate_by_domain(subset, cutoff=args.cutoff, method=method, count_aborted=count_aborted)
        chunks.append(render_csv(table) if args.format == "csv" else render_text(table))
    if not chunks:
        raise UndefinedMetricError("no records to report")
    output = "\n".join(chunks)
    if args.out:
        Path(args.out).write_text(output, encoding="utf-8")
    else:
        print(output, end="")
    if args.plot:
        path = plot_pass_rate_curves(by_method, Path(args.plot))
        print(f"Plot written: {path}")
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    manifest = load_manifest(Path(args.manifest))
    report = validate_manifest(manifest, check_reference=args.reference)
    print(report.to_text(), end="")
    if args.out:
        write_report(report, Path(args.out))
    return EXIT_OK if report.ok else EXIT_VALIDATION


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="JSON config file (default: $DREAM_CONFIG or built-ins)")
    common.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    ap = _Parser(prog="dream", description="DREAM prover toolkit")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("convert", parents=[common], help="Build Lean theorem files from TPTP problems")
    p.add_argument("inputs", nargs="+", help="TPTP .p files or directories")
    p.add_argument("--out", default=None, help="Output directory (default: dataset.output_dir)")
    p.add_argument("--tptp-root", default=None, help="TPTP library root for include() (default: dataset.tptp_root)")
    p.add_argument("--domain", default=None, help="Override the domain code")
    p.add_argument("--max-attempts", type=int, default=None)
    p.add_argument("--skip-optimize", action="store_true")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("prove", parents=[common], help="Prove a single theorem")
    p.add_argument("theorem_file", nargs="?", default=None, metavar="THEOREM", help="Lean theorem file or id")
    p.add_argument("--theorem", default=None, metavar="ID|FILE", help="Theorem id (looked up in the manifest) or file")
    p.add_argument("--manifest", default=None, help="Manifest for id lookup (default: dataset.output_dir/manifest.json)")
    p.add_argument("--backend", choices=["stub", "remote", "ollama"], default=None, help="Override gateway.kind")
    p.add_argument("--verifier", choices=["mock", "lean"], default=None, help="Override verifier.kind")
    p.add_argument("--method", choices=METHODS, default="dream")
    p.add_argument("--log", default=None, help="Append run records to this JSONL file")
    p.add_argument("--json", default=None, help="Write the full result as JSON")
    p.add_argument("--reverify", action="store_true", help="Recompile the final passing proof")
    p.add_argument("--dump-annotated", default=None, metavar="DIR")
    p.set_defaults(func=cmd_prove)

    p = sub.add_parser("run", parents=[common], help="Run a method over a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--method", choices=METHODS, default="dream")
    p.add_argument("--out", required=True, help="Run log (JSONL)")
    p.add_argument("--resume", action="store_true")
    p.add_argument("--parallel", type=int, default=None)
    p.add_argument("--reverify", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", parents=[common], help="Per-domain pass rates from run logs")
    p.add_argument("--log", required=True, action="append", help="Run log; repeat for several")
    p.add_argument("--cutoff", type=int, default=None, help="Revision cutoff (default: highest logged)")
    p.add_argument("--format", choices=["table", "csv"], default="table")
    p.add_argument("--method", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--plot", default=None, metavar="PNG")
    p.add_argument("--lenient", action="store_true", help="Leave aborted theorems out of the denominator")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("validate", parents=[common], help="Validate a dataset manifest")
    p.add_argument("manifest")
    p.add_argument("--reference", action="store_true", help="Compare against the published dataset sizes")
    p.add_argument("--out", default=None, help="Also write validation_report.txt/json here")
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (UsageError, ConfigurationError, ScheduleError) as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GatewayError, CheckerEnvironmentError) as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return EXIT_ENVIRONMENT
    except (ManifestError, UndefinedMetricError) as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    raise SystemExit(main())
