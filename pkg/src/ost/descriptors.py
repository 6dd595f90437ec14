"""Descriptor generation through a chat-completion endpoint, with caching.

Two prompt kinds exist per action category: "spatio" asks for static visual
elements (objects, settings), "temporal" asks for a step-by-step
decomposition of the action.  Temporal descriptors are additionally
conditioned on the category name with a hard prefix, which keeps their
embeddings clustered near the action.

Responses are cached one JSON file per request key so a warm rerun builds
byte-identical banks with zero network calls.  A deterministic mock client
serves offline tests and ``--mock`` runs.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

from .core import ClassEntry, DescriptorBank, condition_on_category
from .errors import GenerationError, ParseError, TransportError, ValidationError

SPATIO = "spatio"
TEMPORAL = "temporal"

DEFAULT_TEMPERATURE = 0.7
MAX_ATTEMPTS = 3
_BACKOFF_SECONDS = (1.0, 2.0, 4.0)

ENV_BASE_URL = "OST_LLM_BASE_URL"
ENV_MODEL = "OST_LLM_MODEL"
ENV_API_KEY = "OST_LLM_API_KEY"

# body-v1 is the minimal wording; supp-v1 steers the model harder (object
# level cues for spatio, a verb-rich step decomposition for temporal) and
# both must stay byte-stable since banks record which one produced them.
_TEMPLATES = {
    "body-v1": {
        SPATIO: (
            "Please give me a long list of descriptors for action: "
            "{category}, {n} descriptors in total."
        ),
        TEMPORAL: (
            "Please give me a long list of decompositions of steps for action: "
            "{category}, {n} steps in total."
        ),
    },
    "supp-v1": {
        SPATIO: (
            "Please give me a long list of descriptors for action: {category}, "
            "{n} descriptors in total. Prioritize object-level cues: name the "
            "distinct objects, settings, and static visual elements that can be "
            "discerned from a single frame. Answer as a numbered list with "
            "exactly {n} short items and no extra commentary."
        ),
        TEMPORAL: (
            "Please give me a long list of decompositions of steps for action: "
            "{category}, {n} steps in total. Describe how the action progresses "
            "over time using a comprehensive range of verbs, one step per item. "
            "Answer as a numbered list with exactly {n} items and no extra "
            "commentary."
        ),
    },
}

TEMPLATE_VERSIONS = tuple(_TEMPLATES)


@dataclass(frozen=True)
class PromptSpec:
    category: str
    kind: str
    n: int
    template_version: str = "body-v1"

    def __post_init__(self):
        if self.kind not in (SPATIO, TEMPORAL):
            raise ValidationError(f"kind must be 'spatio' or 'temporal', got {self.kind!r}")
        if self.n < 1:
            raise ValidationError(f"n must be >= 1, got {self.n}")
        if not self.category:
            raise ValidationError("category must be non-empty")
        if self.template_version not in _TEMPLATES:
            raise ValidationError(f"unknown template_version {self.template_version!r}")


@dataclass(frozen=True)
class LlmRequest:
    prompt: str
    temperature: float = DEFAULT_TEMPERATURE
    model_id: str = "gpt-3.5-turbo"

    def __post_init__(self):
        if not (0.0 <= self.temperature <= 2.0):
            raise ValidationError(f"temperature must be in [0, 2], got {self.temperature}")


@dataclass(frozen=True, order=True)
class DescriptorCacheKey:
    """Totally ordered key; its hash names the on-disk cache entry."""

    model_id: str
    template_version: str
    kind: str
    category: str
    n: int
    temperature: float

    def as_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "template_version": self.template_version,
            "kind": self.kind,
            "category": self.category,
            "n": self.n,
            "temperature": self.temperature,
        }

    def filename(self) -> str:
        canon = json.dumps(self.as_dict(), sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:32] + ".json"


def build_spatio_prompt(spec: PromptSpec) -> str:
    if spec.kind != SPATIO:
        raise ValidationError(f"spatio prompt requested for kind {spec.kind!r}")
    return _TEMPLATES[spec.template_version][SPATIO].format(category=spec.category, n=spec.n)


def build_temporal_prompt(spec: PromptSpec) -> str:
    if spec.kind != TEMPORAL:
        raise ValidationError(f"temporal prompt requested for kind {spec.kind!r}")
    return _TEMPLATES[spec.template_version][TEMPORAL].format(category=spec.category, n=spec.n)


def build_prompt(spec: PromptSpec) -> str:
    return build_spatio_prompt(spec) if spec.kind == SPATIO else build_temporal_prompt(spec)


_ITEM_LINE = re.compile(r"^\s*(?:\d+[.)]\s*|[-*•]\s+)(.*\S)\s*$")
_PUNCT_ONLY = re.compile(r"^[\s\W_]*$")


def parse_llm_list(response: str, n: int) -> list[str]:
    """Extract exactly ``n`` items from numbered or bulleted lines."""
    items = []
    for line in response.splitlines():
        m = _ITEM_LINE.match(line)
        if m is None:
            continue
        text = m.group(1).strip()
        if _PUNCT_ONLY.match(text):
            continue
        items.append(text)
    if len(items) < n:
        raise ParseError(
            f"found only {len(items)} list items, need {n}", raw_response=response
        )
    return items[:n]


class LlmClient(Protocol):
    def complete(self, request: LlmRequest) -> str: ...


class HttpLlmClient:
    """Minimal chat-completion client; settings come from the environment."""

    def __init__(
        self,
        base_url: str | None = None,
        model_id: str | None = None,
        api_key: str | None = None,
        timeout: float = 60.0,
        sleep=time.sleep,
    ):
        self.base_url = (base_url or os.environ.get(ENV_BASE_URL, "")).rstrip("/")
        self.model_id = model_id or os.environ.get(ENV_MODEL, "gpt-3.5-turbo")
        self.api_key = api_key or os.environ.get(ENV_API_KEY, "")
        self.timeout = timeout
        self._sleep = sleep
        if not self.base_url:
            raise ValidationError(f"no LLM endpoint configured; set {ENV_BASE_URL}")

    def complete(self, request: LlmRequest) -> str:
        import requests

        payload = {
            "model": request.model_id,
            "temperature": request.temperature,
            "messages": [{"role": "user", "content": request.prompt}],
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_exc = None
        for attempt in range(MAX_ATTEMPTS):
            try:
                resp = requests.post(
                    f"{self.base_url}/chat/completions",
                    json=payload,
                    headers=headers,
                    timeout=self.timeout,
                )
                resp.raise_for_status()
                body = resp.json()
                return body["choices"][0]["message"]["content"]
            except (requests.RequestException, KeyError, IndexError, ValueError) as exc:
                last_exc = exc
                if attempt + 1 < MAX_ATTEMPTS:
                    self._sleep(_BACKOFF_SECONDS[attempt])
        raise TransportError(f"LLM endpoint unreachable after {MAX_ATTEMPTS} attempts: {last_exc}")


class MockLlmClient:
    """Deterministic offline stand-in for the chat endpoint.

    Responses are synthesized from a stable hash of the prompt, so the same
    prompt always yields the same bytes across runs and platforms.  Scripted
    responses (exact prompt -> canned text) take precedence, which lets tests
    replay real transcripts or inject garbage.
    """

    def __init__(self, scripted: dict[str, str] | None = None, model_id: str = "mock-llm"):
        self.scripted = dict(scripted or {})
        self.model_id = model_id
        self.calls = 0
        self._lock = threading.Lock()

    def _synth_items(self, prompt: str) -> str:
        spec = _prompt_fingerprint(prompt)
        lines = []
        for i in range(spec["n"]):
            tag = hashlib.sha256(f"{prompt}|{i}".encode("utf-8")).hexdigest()[:8]
            if spec["kind"] == TEMPORAL:
                lines.append(f"{i + 1}. Step {i + 1} of {spec['category']} ({tag})")
            else:
                lines.append(f"{i + 1}. {spec['category']} cue {i + 1} ({tag})")
        return "\n".join(lines)

    def complete(self, request: LlmRequest) -> str:
        with self._lock:
            self.calls += 1
        if request.prompt in self.scripted:
            return self.scripted[request.prompt]
        return self._synth_items(request.prompt)


_FINGERPRINT = re.compile(
    r"action: (?P<category>.+?), (?P<n>\d+) (?P<noun>descriptors|steps) in total"
)


def _prompt_fingerprint(prompt: str) -> dict:
    m = _FINGERPRINT.search(prompt)
    if m is None:
        return {"category": "unknown", "n": 4, "kind": SPATIO}
    kind = TEMPORAL if m.group("noun") == "steps" else SPATIO
    return {"category": m.group("category"), "n": int(m.group("n")), "kind": kind}


class DescriptorCache:
    """One JSON file per key under a directory; write-once, replayable."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, key: DescriptorCacheKey) -> Path:
        return self.directory / key.filename()

    def get(self, key: DescriptorCacheKey) -> dict | None:
        path = self._path(key)
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def put(self, key: DescriptorCacheKey, entry: dict) -> None:
        path = self._path(key)
        path.write_text(
            json.dumps(entry, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
        )


def generate_descriptors(
    category: str,
    kind: str,
    n: int,
    client,
    cache: DescriptorCache | None = None,
    template_version: str = "body-v1",
    temperature: float = DEFAULT_TEMPERATURE,
) -> list[str]:
    """Return ``n`` descriptor texts, from cache when possible.

    A cache miss sends the prompt, parses the response, and retries up to
    three attempts on parse failures before giving up.
    """
    spec = PromptSpec(category=category, kind=kind, n=n, template_version=template_version)
    model_id = getattr(client, "model_id", "unknown")
    key = DescriptorCacheKey(
        model_id=model_id,
        template_version=template_version,
        kind=kind,
        category=category,
        n=n,
        temperature=temperature,
    )
    if cache is not None:
        hit = cache.get(key)
        if hit is not None:
            return list(hit["items"])

    prompt = build_prompt(spec)
    request = LlmRequest(prompt=prompt, temperature=temperature, model_id=model_id)
    raw = ""
    items = None
    last_parse_error = None
    for _ in range(MAX_ATTEMPTS):
        raw = client.complete(request)
        try:
            items = parse_llm_list(raw, n)
            break
        except ParseError as exc:
            last_parse_error = exc
    if items is None:
        raise GenerationError(
            f"category {category!r} ({kind}): no parseable response after "
            f"{MAX_ATTEMPTS} attempts; last error: {last_parse_error}; "
            f"last response: {raw!r}"
        )

    if cache is not None:
        entry = {
            "key": key.as_dict(),
            "raw_response": raw,
            "items": items,
            "created_unix": int(time.time()),
        }
        if kind == TEMPORAL:
            entry["items_conditioned"] = [condition_on_category(category, t) for t in items]
        cache.put(key, entry)
    return items


def build_bank(
    categories: list[str],
    n_spatio: int,
    n_temporal: int,
    client,
    cache: DescriptorCache | None = None,
    template_version: str = "body-v1",
    temperature: float = DEFAULT_TEMPERATURE,
    jobs: int = 4,
) -> DescriptorBank:
    """Generate both descriptor kinds for every category and assemble a bank.

    Per-category failures are collected and reported together; nothing is
    returned unless every category succeeded.
    """
    if not categories:
        raise ValidationError("no categories given")
    if len(set(categories)) != len(categories):
        dup = next(c for c in categories if categories.count(c) > 1)
        raise ValidationError(f"duplicate category {dup!r}")

    def one(category: str) -> ClassEntry:
        spatio = generate_descriptors(
            category, SPATIO, n_spatio, client, cache, template_version, temperature
        )
        temporal = generate_descriptors(
            category, TEMPORAL, n_temporal, client, cache, template_version, temperature
        )
        return ClassEntry(
            name=category,
            spatio_texts=tuple(spatio),
            temporal_texts_raw=tuple(temporal),
            temporal_texts_conditioned=tuple(
                condition_on_category(category, t) for t in temporal
            ),
        )

    failures = []
    entries: list[ClassEntry | None] = [None] * len(categories)
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        futures = {pool.submit(one, cat): i for i, cat in enumerate(categories)}
        for fut, i in futures.items():
            try:
                entries[i] = fut.result()
            except Exception as exc:
                failures.append(f"{categories[i]!r}: {exc}")
    if failures:
        raise GenerationError("bank build failed for " + "; ".join(sorted(failures)))
    return DescriptorBank(
        classes=tuple(entries),  # type: ignore[arg-type]
        n_spatio=n_spatio,
        n_temporal=n_temporal,
        template_version=template_version,
    )
