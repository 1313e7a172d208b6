from __future__ import annotations

"""
Model gateway: one interface for every model call in the pipeline.

Backends:
- ChatCompletionBackend: generic JSON-over-HTTP chat completion (system + user
  messages). Vendor differences (endpoint, model name, where the text sits in
  the response) are configuration, not code paths.
- ScriptedBackend: deterministic stub that replays a script keyed by
  "role:ordinal", for hermetic tests and replays.

ModelGateway adds decoding defaults per role and an optional on-disk
response cache keyed by the request hash and, for sampled requests, the
draw number.
"""

import hashlib
import json
import logging
import re
import threading
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import TYPE_CHECKING, Any, Dict, Mapping, Optional, Protocol

import requests

from .config import DecodingSettings, GatewaySettings, read_credential
from .prompts import PromptRole, render_prompt

if TYPE_CHECKING:
    from .axiom_tree import SecondLevelAxiom

logger = logging.getLogger(__name__)


class GatewayError(RuntimeError):
    """Base class for model backend failures."""


class BackendUnavailableError(GatewayError):
    """Raised when the remote backend cannot be reached after all retries."""


class ScriptExhaustedError(GatewayError):
    """Raised when the scripted stub has no entry for a (role, ordinal) key."""


@dataclass(frozen=True)
class Decoding:
    temperature: float = 0.0
    max_tokens: int = 4096
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be > 0")


@dataclass(frozen=True)
class ModelRequest:
    role: PromptRole
    system_text: str
    user_text: str
    decoding: Decoding = field(default_factory=Decoding)
    # Nth identical sampled request (temperature > 0); part of the cache key
    sample: int = 0

    def __post_init__(self) -> None:
        if not self.user_text.strip():
            raise ValueError("ModelRequest.user_text must be non-empty")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "role": self.role.value,
            "system_text": self.system_text,
            "user_text": self.user_text,
            "decoding": asdict(self.decoding),
            "sample": self.sample,
        }

    def digest(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class TokenUsage:
    prompt_tokens: int = 0
    completion_tokens: int = 0


@dataclass(frozen=True)
class ModelResponse:
    text: str
    usage: TokenUsage = field(default_factory=TokenUsage)
    backend_id: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return {"text": self.text, "usage": asdict(self.usage), "backend_id": self.backend_id}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ModelResponse":
        return cls(
            text=data["text"],
            usage=TokenUsage(**data.get("usage", {})),
            backend_id=data.get("backend_id", ""),
        )


@dataclass(frozen=True)
class Strategy:
    """A free-text proof plan derived from one second-level axiom."""

    description: str
    focus_axioms: Optional["SecondLevelAxiom"] = None

    def __post_init__(self) -> None:
        if not self.description.strip():
            raise ValueError("Strategy.description must be non-empty")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "description": self.description,
            "focus_axioms": self.focus_axioms.to_dict() if self.focus_axioms else None,
        }


@dataclass(frozen=True)
class ExtractedCode:
    text: str
    unfenced: bool


class Backend(Protocol):
    backend_id: str

    def invoke(self, request: ModelRequest) -> ModelResponse:
        ...


def _dig(data: Any, dotted: str) -> Any:
    """Follow a dotted path like 'choices.0.message.content' through JSON."""
    node = data
    for part in dotted.split("."):
        if isinstance(node, list):
            node = node[int(part)] if part.isdigit() and int(part) < len(node) else None
        elif isinstance(node, dict):
            node = node.get(part)
        else:
            return None
        if node is None:
            return None
    return node


class ChatCompletionBackend:
    """Remote chat-completion backend with retries and an in-flight cap."""

    def __init__(self, settings: GatewaySettings):
        self.settings = settings
        self.backend_id = f"{settings.kind}:{settings.model}"
        self._slots = threading.BoundedSemaphore(max(1, settings.max_in_flight))

    def _headers(self) -> Dict[str, str]:
        headers = {"Content-Type": "application/json"}
        api_key = read_credential(self.settings.api_key_env)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        return headers

    def _payload(self, request: ModelRequest) -> Dict[str, Any]:
        payload: Dict[str, Any] = {
            "model": self.settings.model,
            "messages": [
                {"role": "system", "content": request.system_text},
                {"role": "user", "content": request.user_text},
            ],
            "stream": False,
        }
        if self.settings.kind == "ollama":
            options: Dict[str, Any] = {
                "temperature": request.decoding.temperature,
                "num_predict": request.decoding.max_tokens,
            }
            if request.decoding.seed is not None:
                options["seed"] = request.decoding.seed
            payload["options"] = options
        else:
            payload["temperature"] = request.decoding.temperature
            payload["max_tokens"] = request.decoding.max_tokens
            if request.decoding.seed is not None:
                payload["seed"] = request.decoding.seed
        return payload

    def invoke(self, request: ModelRequest) -> ModelResponse:
        url = self.settings.endpoint
        payload = self._payload(request)
        attempts = self.settings.max_retries + 1
        last_error = ""
        with self._slots:
            for attempt in range(attempts):
                try:
                    resp = requests.post(
                        url, json=payload, headers=self._headers(), timeout=self.settings.request_timeout
                    )
                except requests.RequestException as exc:
                    last_error = f"failed to reach {url}: {exc}"
                else:
                    if resp.status_code == 200:
                        try:
                            data = resp.json()
                        except ValueError as exc:
                            raise GatewayError(f"backend returned a non-JSON body: {exc}") from exc
                        return self._parse(data)
                    last_error = f"backend error {resp.status_code}: {resp.text[:500]}"
                    if resp.status_code < 500 and resp.status_code != 429:
                        # Client errors will not improve on retry
                        raise GatewayError(last_error)
                if attempt + 1 < attempts:
                    delay = self.settings.backoff_seconds * (2 ** attempt)
                    logger.warning("%s (attempt %d/%d), retrying in %.1fs", last_error, attempt + 1, attempts, delay)
                    time.sleep(delay)
        raise BackendUnavailableError(f"{last_error} (after {attempts} attempts)")

    def _parse(self, data: Dict[str, Any]) -> ModelResponse:
        if not isinstance(data, dict):
            raise GatewayError(f"backend response is a JSON {type(data).__name__}, expected an object")
        text = _dig(data, self.settings.response_text_path)
        if not isinstance(text, str):
            raise GatewayError(
                f"backend response has no text at '{self.settings.response_text_path}'"
            )
        usage_raw = _dig(data, self.settings.usage_path)
        if not isinstance(usage_raw, dict):
            usage_raw = {}
        usage = TokenUsage(
            prompt_tokens=int(usage_raw.get("prompt_tokens", data.get("prompt_eval_count", 0)) or 0),
            completion_tokens=int(usage_raw.get("completion_tokens", data.get("eval_count", 0)) or 0),
        )
        return ModelResponse(text=text, usage=usage, backend_id=self.backend_id)


class ScriptedBackend:
    """
    Deterministic stub. The script maps "Role:ordinal" (1-based, counted per
    role) to completion text; "Role:*" is the fallback for any ordinal.
    """

    backend_id = "stub"

    def __init__(self, script: Mapping[str, str]):
        self.script = dict(script)
        self._counters: Dict[str, int] = {}
        self._lock = threading.Lock()
        self.calls: list[ModelRequest] = []

    @classmethod
    def from_file(cls, path: Path) -> "ScriptedBackend":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(data, dict):
            raise GatewayError(f"stub script {path} must be a JSON object")
        return cls({str(k): str(v) for k, v in data.items()})

    def invoke(self, request: ModelRequest) -> ModelResponse:
        role = request.role.value
        with self._lock:
            ordinal = self._counters.get(role, 0) + 1
            self._counters[role] = ordinal
            self.calls.append(request)
        key = f"{role}:{ordinal}"
        if key in self.script:
            text = self.script[key]
        elif f"{role}:*" in self.script:
            text = self.script[f"{role}:*"]
        else:
            raise ScriptExhaustedError(f"stub script has no entry for {key}")
        return ModelResponse(text=text, backend_id=self.backend_id)

    def count(self, role: PromptRole) -> int:
        with self._lock:
            return self._counters.get(role.value, 0)


class ResponseCache:
    """On-disk cache: one JSON file per request digest."""

    def __init__(self, directory: Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, request: ModelRequest) -> Path:
        return self.directory / f"{request.digest()}.json"

    def get(self, request: ModelRequest) -> Optional[ModelResponse]:
        path = self._path(request)
        if not path.exists():
            return None
        try:
            return ModelResponse.from_dict(json.loads(path.read_text(encoding="utf-8")))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            logger.warning("ignoring unreadable cache entry %s: %s", path, exc)
            return None

    def put(self, request: ModelRequest, response: ModelResponse) -> None:
        path = self._path(request)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(response.to_dict(), ensure_ascii=False), encoding="utf-8")
        tmp.replace(path)


def invoke(backend: Backend, request: ModelRequest) -> ModelResponse:
    """Send one request to a backend."""
    return backend.invoke(request)


class ModelGateway:
    """
    Backend + per-role decoding defaults + optional response cache.

    Sampled requests (temperature > 0) that repeat an earlier prompt are
    numbered, so the cache keeps one entry per draw: a rerun over the same
    cache replays the same sequence instead of one answer for every draw.
    """

    def __init__(
        self,
        backend: Backend,
        decoding: Optional[DecodingSettings] = None,
        cache: Optional[ResponseCache] = None,
    ):
        self.backend = backend
        self.decoding = decoding or DecodingSettings()
        self.cache = cache
        self._draws: Dict[str, int] = {}
        self._lock = threading.Lock()

    def decoding_for(self, role: PromptRole) -> Decoding:
        return Decoding(
            temperature=float(self.decoding.temperatures.get(role.value, 0.0)),
            max_tokens=self.decoding.max_tokens,
            seed=self.decoding.seed,
        )

    def invoke(self, request: ModelRequest) -> ModelResponse:
        if self.cache is not None:
            cached = self.cache.get(request)
            if cached is not None:
                return cached
        response = invoke(self.backend, request)
        if self.cache is not None:
            self.cache.put(request, response)
        return response

    def _numbered(self, request: ModelRequest) -> ModelRequest:
        if request.decoding.temperature <= 0:
            return request
        key = request.digest()
        with self._lock:
            ordinal = self._draws.get(key, 0)
            self._draws[key] = ordinal + 1
        return replace(request, sample=ordinal) if ordinal else request

    def complete(self, role: PromptRole, context: Mapping[str, Any], *, user_suffix: str = "") -> ModelResponse:
        system_text, user_text = render_prompt(role, context)
        request = ModelRequest(
            role=role,
            system_text=system_text,
            user_text=user_text + user_suffix,
            decoding=self.decoding_for(role),
        )
        request = self._numbered(request)
        logger.debug("model call role=%s chars=%d", role.value, len(request.user_text))
        return self.invoke(request)


def build_backend(settings: GatewaySettings) -> Backend:
    if settings.kind == "stub":
        if not settings.script_path:
            raise GatewayError("stub backend needs gateway.script_path")
        return ScriptedBackend.from_file(Path(settings.script_path))
    if settings.kind in ("remote", "ollama"):
        return ChatCompletionBackend(settings)
    raise GatewayError(f"unknown gateway kind {settings.kind!r}")


def build_gateway(gateway: GatewaySettings, decoding: DecodingSettings) -> ModelGateway:
    cache = ResponseCache(Path(gateway.cache_dir)) if gateway.cache_dir else None
    return ModelGateway(build_backend(gateway), decoding, cache)


FENCE = re.compile(r"```(?P<label>[A-Za-z0-9_+-]*)[ \t]*\n(?P<body>.*?)```", re.DOTALL)
PROOF_LABELS = ("lean", "lean4")


def extract_code_block(completion: str) -> ExtractedCode:
    """
    Return the first fenced block labelled for Lean (falling back to the first
    unlabelled block). Without fences the whole completion comes back with
    unfenced=True.
    """
    unlabelled: Optional[str] = None
    for m in FENCE.finditer(completion):
        label = m.group("label").lower()
        body = m.group("body")
        if body.endswith("\n"):
            body = body[:-1]
        if label in PROOF_LABELS:
            return ExtractedCode(text=body, unfenced=False)
        if not label and unlabelled is None:
            unlabelled = body
    if unlabelled is not None:
        return ExtractedCode(text=unlabelled, unfenced=False)
    return ExtractedCode(text=completion, unfenced=True)
