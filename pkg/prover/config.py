from __future__ import annotations

"""
Central configuration for the DREAM prover toolkit.

Settings come from a JSON config file (path given on the command line or via
DREAM_CONFIG) layered over the defaults below. Environment variables are only
read for credentials and for the config file location; a `.env` file at the
project root is loaded first so credentials can live there.

Defaults are chosen so that the whole pipeline runs hermetically with the
scripted stub backend and the mock verifier.
"""

import json
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, FrozenSet, Mapping, Optional, Tuple

from dotenv import load_dotenv

PROJECT_ROOT = Path(__file__).resolve().parent.parent

# Load .env from project root so API keys referenced by api_key_env are set
load_dotenv(PROJECT_ROOT / ".env")


class ConfigurationError(ValueError):
    """Raised when the config file is malformed or has unknown keys."""


@dataclass(frozen=True)
class GatewaySettings:
    kind: str = "stub"  # "stub" | "remote" | "ollama"
    endpoint: str = "http://localhost:11434/api/chat"
    model: str = "deepseek-v3"
    api_key_env: Optional[str] = None
    response_text_path: str = "choices.0.message.content"
    usage_path: str = "usage"
    request_timeout: int = 300  # seconds
    max_retries: int = 3
    backoff_seconds: float = 1.0
    max_in_flight: int = 4
    cache_dir: Optional[str] = None
    script_path: Optional[str] = None


@dataclass(frozen=True)
class DecodingSettings:
    max_tokens: int = 4096
    seed: Optional[int] = None
    # Role name -> temperature. Diversity roles sample, faithfulness roles are greedy.
    temperatures: Mapping[str, float] = field(
        default_factory=lambda: {
            "ProposeAxioms": 0.7,
            "SynthesizeAxiom": 0.7,
            "ProposeStrategy": 0.7,
            "GenerateProof": 0.7,
            "AnnotateSubpropositions": 0.0,
            "AnalyzeFailures": 0.0,
            "TranslateTptp": 0.0,
            "OptimizeContext": 0.0,
        }
    )


@dataclass(frozen=True)
class VerifierSettings:
    kind: str = "mock"  # "mock" | "lean"
    command: str = "lake env lean {file}"
    project_root: str = "."
    timeout_seconds: int = 120
    keep_artifacts: bool = False
    scratch_dir: Optional[str] = None
    output_cap_bytes: int = 64_000
    rules_path: Optional[str] = None
    imports: Tuple[str, ...] = ("import Mathlib",)
    placeholder_keywords: Tuple[str, ...] = ("sorry", "admit")
    workers: Optional[int] = None  # None = CPU count


@dataclass(frozen=True)
class FeedbackSettings:
    comment_prefix: str = "-- [DREAM]"
    history_char_budget: int = 24_000
    annotate_retries: int = 1


@dataclass(frozen=True)
class ScheduleConfig:
    max_revisions: int = 10
    diversify_at: FrozenSet[int] = frozenset({4, 7})
    k: int = 2
    m_range: Tuple[int, int] = (3, 5)
    selection: str = "lexicographic"  # "lexicographic" | "random"
    seed: Optional[int] = None
    wall_clock_budget: float = 30 * 60.0  # seconds per theorem
    enable_diversification: bool = True
    enable_error_feedback: bool = True
    strip_background_axioms: bool = False

    def __post_init__(self) -> None:
        if self.max_revisions < 1:
            raise ConfigurationError("schedule.max_revisions must be >= 1")
        bad = sorted(r for r in self.diversify_at if r < 2 or r > self.max_revisions)
        if bad:
            raise ConfigurationError(
                f"schedule.diversify_at entries must lie in [2, {self.max_revisions}], got {bad}"
            )
        low, high = self.m_range
        if not 1 <= low <= high:
            raise ConfigurationError(f"schedule.m_range must satisfy 1 <= low <= high, got {self.m_range}")
        if self.k < 1:
            raise ConfigurationError("schedule.k must be >= 1")
        if self.selection not in ("lexicographic", "random"):
            raise ConfigurationError(f"schedule.selection must be lexicographic or random, got {self.selection!r}")


@dataclass(frozen=True)
class DatasetSettings:
    tptp_root: str = "TPTP"
    output_dir: str = "dataset_output"
    max_attempts: int = 60
    skip_optimize: bool = False
    workers: int = 4


@dataclass(frozen=True)
class HarnessSettings:
    parallel: int = 1
    count_aborted: bool = True


@dataclass(frozen=True)
class Settings:
    gateway: GatewaySettings = field(default_factory=GatewaySettings)
    decoding: DecodingSettings = field(default_factory=DecodingSettings)
    verifier: VerifierSettings = field(default_factory=VerifierSettings)
    feedback: FeedbackSettings = field(default_factory=FeedbackSettings)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    dataset: DatasetSettings = field(default_factory=DatasetSettings)
    harness: HarnessSettings = field(default_factory=HarnessSettings)


def _env(name: str, default: Optional[str] = None) -> Optional[str]:
    value = os.getenv(name)
    return value if value is not None else default


def _coerce(current: Any, value: Any, key: str) -> Any:
    """Convert JSON values to the field's existing shape (tuples, frozensets)."""
    if isinstance(current, frozenset):
        return frozenset(int(v) for v in value)
    if isinstance(current, tuple):
        return tuple(value)
    if key == "temperatures":
        merged = dict(current)
        merged.update({str(k): float(v) for k, v in value.items()})
        return merged
    return value


def _overlay(section: Any, values: Mapping[str, Any], section_name: str) -> Any:
    known = {f.name: getattr(section, f.name) for f in fields(section)}
    unknown = sorted(set(values) - set(known))
    if unknown:
        raise ConfigurationError(f"unknown key(s) in [{section_name}]: {unknown}")
    updates = {k: _coerce(known[k], v, k) for k, v in values.items()}
    return replace(section, **updates)


def settings_from_dict(data: Mapping[str, Any]) -> Settings:
    """Build Settings from a parsed config mapping."""
    base = Settings()
    unknown = sorted(set(data) - {f.name for f in fields(base)})
    if unknown:
        raise ConfigurationError(f"unknown config section(s): {unknown}")
    updates = {}
    for f in fields(base):
        if f.name in data:
            section_values = data[f.name]
            if not isinstance(section_values, Mapping):
                raise ConfigurationError(f"config section [{f.name}] must be an object")
            updates[f.name] = _overlay(getattr(base, f.name), section_values, f.name)
    return replace(base, **updates)


def load_settings(config_path: Optional[str | Path] = None) -> Settings:
    """
    Load settings from a JSON config file, falling back to DREAM_CONFIG and
    then to the built-in defaults.
    """
    path = config_path or _env("DREAM_CONFIG")
    if not path:
        return Settings()
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigurationError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigurationError(f"config file {path} must contain a JSON object")
    return settings_from_dict(data)


def read_credential(env_name: Optional[str]) -> Optional[str]:
    """Credentials are the only values read directly from the environment."""
    if not env_name:
        return None
    return _env(env_name)
