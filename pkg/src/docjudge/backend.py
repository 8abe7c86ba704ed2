"""Judge model access: scripted and live backends, retries, response cache."""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Protocol, Sequence

import httpx

log = logging.getLogger(__name__)


class JudgeKind(str, enum.Enum):
    INSTRUCTION_FOLLOWING = "instruction_following"
    CHECKPOINT = "checkpoint"
    ACCURACY = "accuracy"
    FLUENCY = "fluency"
    APPROPRIATENESS = "appropriateness"
    DEDUP = "dedup"
    SINGLE = "single_judge"


class BackendError(RuntimeError):
    def __init__(self, message: str, request_key: str | None = None, cause: BaseException | None = None):
        super().__init__(message)
        self.request_key = request_key
        self.cause = cause


class FixtureMissError(BackendError):
    pass


class CacheIntegrityError(RuntimeError):
    pass


def make_request_key(kind: str, prompt: str, model_id: str, prompt_version: str = "", attempt: int = 1) -> str:
    h = hashlib.sha256()
    for part in (str(kind), prompt_version, model_id, prompt):
        h.update(part.encode("utf-8"))
        h.update(b"\x00")
    key = h.hexdigest()[:32]
    # Re-asks after a parse failure must not be served the cached bad answer.
    return key if attempt == 1 else f"{key}-r{attempt}"


@dataclass(frozen=True)
class JudgeRequest:
    judge_kind: JudgeKind
    rendered_prompt: str
    model_id: str
    temperature: float = 0.0
    prompt_version: str = ""
    attempt: int = 1
    # Provenance only; never part of the key.
    cell: tuple[str, str] | None = field(default=None, compare=False)

    @property
    def request_key(self) -> str:
        return make_request_key(self.judge_kind.value, self.rendered_prompt, self.model_id,
                                self.prompt_version, self.attempt)

    def retry(self) -> JudgeRequest:
        return JudgeRequest(self.judge_kind, self.rendered_prompt, self.model_id, self.temperature,
                            self.prompt_version, self.attempt + 1, self.cell)


@dataclass(frozen=True)
class JudgeResponse:
    request_key: str
    raw_text: str
    attempt: int = 1
    timestamp: str = ""


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class Backend(Protocol):
    def complete(self, req: JudgeRequest) -> str: ...


class ScriptedBackend:
    """Serves ``<request_key>.txt`` files from a fixture directory."""

    def __init__(self, fixture_dir: str | Path):
        self.fixture_dir = Path(fixture_dir)
        self.calls = 0

    def complete(self, req: JudgeRequest) -> str:
        self.calls += 1
        path = self.fixture_dir / f"{req.request_key}.txt"
        if not path.is_file():
            raise FixtureMissError(
                f"no fixture for {req.judge_kind.value} request {req.request_key} in {self.fixture_dir}",
                req.request_key,
            )
        return path.read_text(encoding="utf-8")


class LiveBackend:
    """Chat-completion client: POST ``{model, messages, temperature}``."""

    def __init__(self, endpoint: str, api_key: str | None = None, *, timeout: float = 300.0,
                 client: httpx.Client | None = None):
        self.endpoint = endpoint
        self.api_key = api_key
        self._client = client or httpx.Client(timeout=timeout)
        self.calls = 0

    def complete(self, req: JudgeRequest) -> str:
        self.calls += 1
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        payload = {
            "model": req.model_id,
            "messages": [{"role": "user", "content": req.rendered_prompt}],
            "temperature": req.temperature,
        }
        resp = self._client.post(self.endpoint, json=payload, headers=headers)
        resp.raise_for_status()
        body = resp.json()
        try:
            return body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"unexpected response shape: {str(body)[:200]}", req.request_key, exc) from exc


class ResponseCache:
    """Append-only JSONL store of judge responses; each key is written once."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path else None
        self._lock = threading.Lock()
        self._entries: dict[str, JudgeResponse] = {}
        if self.path and self.path.exists():
            with self.path.open(encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        rec = JudgeResponse(**json.loads(line))
                        self._check(rec)
                        self._entries[rec.request_key] = rec

    def _check(self, rec: JudgeResponse) -> bool:
        old = self._entries.get(rec.request_key)
        if old is None:
            return False
        if old.raw_text != rec.raw_text:
            raise CacheIntegrityError(f"conflicting responses cached for key {rec.request_key}")
        return True

    def get(self, key: str) -> JudgeResponse | None:
        with self._lock:
            return self._entries.get(key)

    def put(self, rec: JudgeResponse) -> None:
        with self._lock:
            if self._check(rec):
                return
            self._entries[rec.request_key] = rec
            if self.path:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(asdict(rec), ensure_ascii=False) + "\n")

    def __contains__(self, key: str) -> bool:
        return self.get(key) is not None

    def __len__(self) -> int:
        return len(self._entries)


_RETRYABLE_STATUS = {408, 409, 425, 429, 500, 502, 503, 504}


class JudgeClient:
    """Cache-first access to a backend with transport retries.

    ``max_inflight`` bounds concurrent backend calls across all threads using
    this client.
    """

    def __init__(self, backend: Backend, cache: ResponseCache | None = None, *,
                 retries: int = 3, backoff: float = 1.0, max_inflight: int = 4, sleep=time.sleep):
        self.backend = backend
        self.cache = cache if cache is not None else ResponseCache()
        self.retries = retries
        self.backoff = backoff
        self.max_inflight = max_inflight
        self._slots = threading.BoundedSemaphore(max_inflight)
        self._sleep = sleep
        self._stats_lock = threading.Lock()
        self.network_calls = 0
        self.cache_hits = 0

    def call_judge(self, req: JudgeRequest) -> JudgeResponse:
        key = req.request_key
        cached = self.cache.get(key)
        if cached is not None:
            with self._stats_lock:
                self.cache_hits += 1
            return cached
        last: BaseException | None = None
        for attempt in range(self.retries + 1):
            if attempt:
                self._sleep(self.backoff * 2 ** (attempt - 1))
            try:
                with self._slots:
                    with self._stats_lock:
                        self.network_calls += 1
                    text = self.backend.complete(req)
            except FixtureMissError:
                raise
            except httpx.HTTPStatusError as exc:
                last = exc
                if exc.response.status_code not in _RETRYABLE_STATUS:
                    break
                log.warning("judge call %s failed (%s), attempt %d", key, exc, attempt + 1)
            except (httpx.TransportError, BackendError) as exc:
                last = exc
                log.warning("judge call %s failed (%s), attempt %d", key, exc, attempt + 1)
            else:
                rec = JudgeResponse(key, text, req.attempt, _now())
                self.cache.put(rec)
                return self.cache.get(key) or rec
        raise BackendError(f"judge call {key} failed: {last}", key, last)

    def batch_call(self, reqs: Sequence[JudgeRequest], max_inflight: int | None = None
                   ) -> list[JudgeResponse | BackendError]:
        """Run requests concurrently; results come back in request order.

        A failed request yields its ``BackendError`` in that slot.
        """
        return batch_call(self, reqs, max_inflight or self.max_inflight)


def batch_call(client: JudgeClient, reqs: Sequence[JudgeRequest], max_inflight: int
               ) -> list[JudgeResponse | BackendError]:
    if max_inflight < 1:
        raise ValueError("max_inflight must be >= 1")
    if not reqs:
        return []

    def one(req):
        try:
            return client.call_judge(req)
        except BackendError as exc:
            return exc

    with ThreadPoolExecutor(max_workers=min(max_inflight, len(reqs))) as pool:
        return list(pool.map(one, reqs))
