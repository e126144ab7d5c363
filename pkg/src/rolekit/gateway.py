"""Uniform chat-completion and embedding access over an OpenAI-compatible API.

One gateway object fronts a chat provider and an embedding provider, adding
retries with exponential backoff and full jitter, a bounded in-flight
request limit, and a persistent content-addressed response cache. The
deterministic mock providers make every pipeline run byte-reproducible
under a fixed seed, which the golden-file and end-to-end tests require.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import random
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Protocol, Sequence

import requests

from .errors import ConfigError, ContentError, IntegrityError, TransportError, ValidationError

_ROLES = ("user", "assistant")


@dataclass(frozen=True)
class ChatRequest:
    system: str
    messages: tuple[tuple[str, str], ...]
    temperature: float = 0.7
    top_p: float = 0.95
    max_tokens: int = 1024

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValidationError("messages must be non-empty")
        for i, (role, _text) in enumerate(self.messages):
            expected = _ROLES[i % 2]
            if role != expected:
                raise ValidationError(
                    f"message {i} has role {role!r}; roles must alternate starting with 'user'"
                )
        if not (0.0 <= self.temperature <= 2.0):
            raise ValidationError("temperature must lie in [0, 2]")
        if not (0.0 < self.top_p <= 1.0):
            raise ValidationError("top_p must lie in (0, 1]")
        if self.max_tokens <= 0:
            raise ValidationError("max_tokens must be positive")

    def canonical(self) -> dict:
        return {
            "system": self.system,
            "messages": [list(m) for m in self.messages],
            "temperature": self.temperature,
            "top_p": self.top_p,
            "max_tokens": self.max_tokens,
        }


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]
    dim: int
    provider_id: str

    def __post_init__(self) -> None:
        if len(self.values) != self.dim:
            raise ValidationError("embedding length must equal dim")
        if any(not math.isfinite(v) for v in self.values):
            raise ValidationError("embedding values must all be finite")


@dataclass(frozen=True)
class GatewayConfig:
    base_url: str = "https://api.openai.com/v1"
    api_key_env: str = "OPENAI_API_KEY"
    max_retries: int = 3
    max_in_flight: int = 4
    cache_dir: Optional[Path] = None
    timeout: float = 60.0

    def __post_init__(self) -> None:
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")
        if self.max_in_flight < 1:
            raise ConfigError("max_in_flight must be >= 1")


@dataclass(frozen=True)
class ChatResult:
    text: str
    usage: dict
    cached: bool = False


class ChatProvider(Protocol):
    model_id: str

    def complete(self, request: ChatRequest, sample_key: str = "") -> tuple[str, dict]:
        """Return (completion text, usage metadata) for the first choice."""


class EmbeddingProvider(Protocol):
    provider_id: str
    batch_size: int

    def embed_batch(self, texts: Sequence[str]) -> list[list[float]]:
        """Return one vector per input text, order preserved."""


def _sha256(payload: str) -> str:
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class ResponseCache:
    """Content-addressed JSON file cache.

    Concurrent readers are safe; writes go through a temp file plus atomic
    rename, serialized by a lock within the process.
    """

    def __init__(self, cache_dir: Path | str):
        self.root = Path(cache_dir)
        self._write_lock = threading.Lock()

    def _path(self, namespace: str, key: str) -> Path:
        return self.root / namespace / key[:2] / f"{key}.json"

    def get(self, namespace: str, key: str) -> Optional[dict]:
        path = self._path(namespace, key)
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError):
            return None

    def put(self, namespace: str, key: str, obj: dict) -> None:
        path = self._path(namespace, key)
        with self._write_lock:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".tmp")
            tmp.write_text(json.dumps(obj, ensure_ascii=False, sort_keys=True), encoding="utf-8")
            os.replace(tmp, path)


def _backoff_delays(max_retries: int, rng: random.Random, base: float = 0.5, cap: float = 30.0):
    # Full jitter: uniform in [0, min(cap, base * 2^attempt)].
    for attempt in range(max_retries):
        yield rng.uniform(0.0, min(cap, base * (2.0 ** attempt)))


class OpenAIChatProvider:
    """Chat completions over POST {base_url}/chat/completions.

    Transport failures, HTTP 429 and 5xx are retried with backoff; other
    non-2xx statuses are upstream refusals and surface immediately as
    ContentError (they are data, not faults).
    """

    def __init__(self, config: GatewayConfig, model_id: str, sleep=time.sleep):
        self.config = config
        self.model_id = model_id
        self.calls = 0
        self._sleep = sleep
        self._session = requests.Session()

    def _headers(self) -> dict:
        key = os.environ.get(self.config.api_key_env, "")
        headers = {"Content-Type": "application/json"}
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _post(self, endpoint: str, body: dict) -> dict:
        url = self.config.base_url.rstrip("/") + endpoint
        delays = _backoff_delays(self.config.max_retries, random.Random())
        last_error: Exception | None = None
        for attempt in range(self.config.max_retries + 1):
            if attempt > 0:
                self._sleep(next(delays))
            self.calls += 1
            try:
                resp = self._session.post(url, json=body, headers=self._headers(), timeout=self.config.timeout)
            except requests.RequestException as exc:
                last_error = exc
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last_error = TransportError(f"HTTP {resp.status_code} from {url}")
                continue
            if resp.status_code >= 400:
                raise ContentError(f"HTTP {resp.status_code} from {url}: {resp.text[:500]}")
            try:
                return resp.json()
            except ValueError as exc:
                raise ContentError(f"non-JSON response from {url}") from exc
        raise TransportError(f"request to {url} failed after {self.config.max_retries + 1} attempts: {last_error}")

    def complete(self, request: ChatRequest, sample_key: str = "") -> tuple[str, dict]:
        messages = [{"role": "system", "content": request.system}]
        messages += [{"role": role, "content": text} for role, text in request.messages]
        payload = self._post(
            "/chat/completions",
            {
                "model": self.model_id,
                "messages": messages,
                "temperature": request.temperature,
                "top_p": request.top_p,
                "max_tokens": request.max_tokens,
            },
        )
        try:
            text = payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ContentError(f"malformed chat response: {payload!r}") from exc
        if text is None:
            raise ContentError("upstream returned an empty completion")
        return text, payload.get("usage", {})


class OpenAIEmbeddingProvider:
    """Embeddings over POST {base_url}/embeddings."""

    def __init__(self, config: GatewayConfig, model_id: str, batch_size: int = 100, sleep=time.sleep):
        self.config = config
        self.model_id = model_id
        self.provider_id = model_id
        self.batch_size = batch_size
        self.calls = 0
        self._chat = OpenAIChatProvider(config, model_id, sleep=sleep)

    def embed_batch(self, texts: Sequence[str]) -> list[list[float]]:
        self.calls += 1
        payload = self._chat._post("/embeddings", {"model": self.model_id, "input": list(texts)})
        try:
            rows = sorted(payload["data"], key=lambda item: item["index"])
            return [list(map(float, row["embedding"])) for row in rows]
        except (KeyError, TypeError) as exc:
            raise ContentError(f"malformed embeddings response: {payload!r}") from exc


class Gateway:
    """Caching, concurrency-bounded front to one chat and one embed provider."""

    def __init__(
        self,
        chat_provider: Optional[ChatProvider] = None,
        embedding_provider: Optional[EmbeddingProvider] = None,
        config: Optional[GatewayConfig] = None,
    ):
        self.config = config or GatewayConfig()
        self.chat_provider = chat_provider
        self.embedding_provider = embedding_provider
        self.cache = ResponseCache(self.config.cache_dir) if self.config.cache_dir else None
        self._semaphore = threading.Semaphore(self.config.max_in_flight)

    # -- chat ---------------------------------------------------------------

    def chat_key(self, request: ChatRequest, sample_key: str = "") -> str:
        body = request.canonical()
        body["model"] = self.chat_provider.model_id if self.chat_provider else ""
        body["sample_key"] = sample_key
        return _sha256(json.dumps(body, ensure_ascii=False, sort_keys=True))

    def chat(self, request: ChatRequest, sample_key: str = "") -> ChatResult:
        """Complete a chat request.

        sample_key deliberately splits the cache entry (and the mock's
        deterministic stream), so callers can take independent samples of an
        otherwise identical request, e.g. one per annotator.
        """
        if self.chat_provider is None:
            raise ConfigError("no chat provider configured")
        key = self.chat_key(request, sample_key)
        if self.cache is not None:
            hit = self.cache.get("chat", key)
            if hit is not None:
                return ChatResult(text=hit["text"], usage=hit.get("usage", {}), cached=True)
        with self._semaphore:
            text, usage = self.chat_provider.complete(request, sample_key)
        if self.cache is not None:
            self.cache.put("chat", key, {"text": text, "usage": usage})
        return ChatResult(text=text, usage=usage, cached=False)

    # -- embeddings ----------------------------------------------------------

    def _embed_key(self, text: str) -> str:
        return _sha256(f"{self.embedding_provider.provider_id}\x00{text}")

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        if self.embedding_provider is None:
            raise ConfigError("no embedding provider configured")
        if not texts:
            raise ValidationError("embed() requires at least one text")
        for i, text in enumerate(texts):
            if not text.strip():
                raise ValidationError(f"text {i} is empty after trimming")

        provider_id = self.embedding_provider.provider_id
        results: list[Optional[list[float]]] = [None] * len(texts)
        misses: list[int] = []
        for i, text in enumerate(texts):
            hit = self.cache.get("embed", self._embed_key(text)) if self.cache is not None else None
            if hit is not None:
                results[i] = hit["values"]
            else:
                misses.append(i)

        batch = max(1, self.embedding_provider.batch_size)
        for start in range(0, len(misses), batch):
            chunk = misses[start : start + batch]
            with self._semaphore:
                vectors = self.embedding_provider.embed_batch([texts[i] for i in chunk])
            if len(vectors) != len(chunk):
                raise IntegrityError(
                    f"provider returned {len(vectors)} vectors for {len(chunk)} texts"
                )
            for i, values in zip(chunk, vectors):
                results[i] = values
                if self.cache is not None:
                    self.cache.put("embed", self._embed_key(texts[i]), {"values": values})

        dims = {len(v) for v in results}
        if len(dims) != 1:
            raise IntegrityError(f"embedding dimension mismatch across batch: {sorted(dims)}")
        dim = dims.pop()
        return [EmbeddingVector(values=tuple(v), dim=dim, provider_id=provider_id) for v in results]


# ---------------------------------------------------------------------------
# Deterministic mock providers
# ---------------------------------------------------------------------------

_EMOTION_KEYWORDS = (
    ("Happiness", ("开心", "高兴", "快乐", "太好了", "喜欢", "happy")),
    ("Sadness", ("难过", "伤心", "哭", "可惜", "sad")),
    ("Anger", ("生气", "气死", "愤怒", "讨厌你", "angry")),
    ("Fear", ("害怕", "恐惧", "吓", "担心", "afraid")),
    ("Disgust", ("恶心", "讨厌", "受不了", "disgust")),
    ("Surprise", ("惊讶", "没想到", "竟然", "突然", "surprise")),
    ("Frustration", ("沮丧", "失望", "唉", "烦死", "frustrat")),
    ("Excitement", ("兴奋", "激动", "太棒", "超级", "excit")),
)

_MOCK_LABELS = (
    "Anger", "Disgust", "Fear", "Happiness", "Sadness",
    "Surprise", "Neutral", "Frustration", "Excitement", "Other",
)

_MOCK_TRAIT_POOL = ("调皮", "聪明", "热情", "谨慎", "幽默", "坚强", "温柔", "好奇")

_MOCK_QUESTIONS = (
    "{role}，你最近在忙什么呢？",
    "你对朋友们怎么看？",
    "说说你对家人的感觉吧。",
    "{role}，你的梦想是什么？",
    "遇到困难的时候你会怎么做？",
    "你平时最喜欢做什么事情？",
    "{role}，大家都说你很特别，你自己觉得呢？",
    "如果放一天假，你打算干什么？",
)

_MOCK_FRAGMENTS = (
    "哈哈，这个问题有意思",
    "嗯，让我想想",
    "说真的，我觉得挺好",
    "你可算问到点子上了",
    "这事儿说来话长",
    "老实讲，我也没想过",
)


class MockChatProvider:
    """Deterministic, network-free chat provider for tests and --mock runs.

    Replies are pure functions of (seed, request, sample_key). The provider
    recognizes the shipped prompt templates by their fixed markers and
    produces stage-appropriate, parseable output: an emotion label for
    sentiment prompts, numbered Q/A pairs for question-generation prompts,
    a JSON ranking for judge prompts, a description plus trailing traits
    line for profile prompts, and a short persona-flavored reply otherwise.
    """

    model_id = "mock-chat"

    def __init__(self, seed: int = 0, latency: float = 0.0, rules: Sequence[tuple[str, str]] = ()):
        self.seed = seed
        self.latency = latency
        self.rules = tuple(rules)  # (substring, fixed reply), checked in order
        self.calls = 0
        self.max_active = 0
        self._active = 0
        self._lock = threading.Lock()

    def _digest(self, *parts: str) -> str:
        return _sha256("\x1f".join((str(self.seed),) + parts))

    def _pick(self, options: Sequence[str], *parts: str) -> str:
        return options[int(self._digest(*parts), 16) % len(options)]

    def complete(self, request: ChatRequest, sample_key: str = "") -> tuple[str, dict]:
        with self._lock:
            self.calls += 1
            self._active += 1
            self.max_active = max(self.max_active, self._active)
        try:
            if self.latency:
                time.sleep(self.latency)
            text = self._reply(request, sample_key)
            usage = {
                "prompt_tokens": sum(len(t) for _, t in request.messages) + len(request.system),
                "completion_tokens": len(text),
            }
            return text, usage
        finally:
            with self._lock:
                self._active -= 1

    def _reply(self, request: ChatRequest, sample_key: str) -> str:
        joined = request.system + "\n" + "\n".join(t for _, t in request.messages)
        for needle, reply in self.rules:
            if needle in joined:
                return reply
        if "sentiment analysis" in request.system:
            return self._sentiment(request.messages[-1][1], sample_key)
        if "questions to ask the character" in request.system:
            return self._context_instruct(joined, sample_key)
        if "evaluate and rank the AI models" in joined:
            return self._judge(joined, sample_key)
        if "character profile" in request.system:
            return self._profile(joined, sample_key)
        digest = self._digest("reply", json.dumps(request.canonical(), sort_keys=True), sample_key)
        fragment = _MOCK_FRAGMENTS[int(digest, 16) % len(_MOCK_FRAGMENTS)]
        return f"{fragment}。（mock#{digest[:10]}）"

    def _sentiment(self, text: str, sample_key: str) -> str:
        label = None
        for candidate, needles in _EMOTION_KEYWORDS:
            if any(n in text for n in needles):
                label = candidate
                break
        if label is None:
            label = self._pick(_MOCK_LABELS, "sentiment-base", text)
        # A slice of per-annotator votes deviates from the base label so that
        # majority merging sees realistic disagreement.
        if int(self._digest("sentiment-flip", text, sample_key), 16) % 5 == 0:
            others = [l for l in _MOCK_LABELS if l != label]
            label = self._pick(others, "sentiment-alt", text, sample_key)
        return f"{label}. The tone of the text points to this emotion."

    def _context_instruct(self, prompt: str, sample_key: str) -> str:
        n_match = re.search(r"design (\d+) questions", prompt)
        role_match = re.search(r"The script character is (.+?), described as", prompt)
        n = int(n_match.group(1)) if n_match else 3
        role = role_match.group(1).strip() if role_match else "角色"
        base = int(self._digest("qa-base", prompt, sample_key), 16)
        lines = []
        for i in range(1, n + 1):
            question = _MOCK_QUESTIONS[(base + i) % len(_MOCK_QUESTIONS)].replace("{role}", role)
            fragment = self._pick(_MOCK_FRAGMENTS, "qa-answer", prompt, sample_key, str(i))
            digest = self._digest("qa-detail", prompt, sample_key, str(i))[:8]
            lines.append(f"Q{i}: {question}")
            lines.append(f"A{i}: {fragment}，我就是这样的人（{digest}）。")
        return "\n".join(lines)

    def _judge(self, prompt: str, sample_key: str) -> str:
        question = ""
        q_match = re.search(r"\[Questions for Models\]\n(.*?)\n\[Model Responses\]", prompt, re.S)
        if q_match:
            question = q_match.group(1).strip()
        answers: list[dict] = []
        a_match = re.search(r"\[Model Responses\]\n(\[.*\])", prompt, re.S)
        if a_match:
            try:
                answers = json.loads(a_match.group(1))
            except json.JSONDecodeError:
                answers = []
        if not answers:
            return "[]"
        ranked = sorted(
            answers,
            key=lambda entry: self._digest("judge", question, str(entry.get("answer", ""))),
            reverse=True,
        )
        verdict = []
        for rank, entry in enumerate(ranked, start=1):
            verdict.append(
                {
                    "model": entry.get("model", ""),
                    "reason": f"style match #{rank}",
                    "score": max(1, 6 - rank),
                    "rank": rank,
                }
            )
        return json.dumps(verdict, ensure_ascii=False)

    def _profile(self, prompt: str, sample_key: str) -> str:
        role_match = re.search(r"Role name: (.+)", prompt)
        role = role_match.group(1).strip() if role_match else "角色"
        digest = self._digest("profile", prompt, sample_key)
        idx = int(digest, 16)
        n_traits = 2 + idx % 3
        traits = []
        for k in range(n_traits):
            trait = _MOCK_TRAIT_POOL[(idx + k * 3) % len(_MOCK_TRAIT_POOL)]
            if trait not in traits:
                traits.append(trait)
        description = (
            f"{role}是一个性格鲜明的人物，说话带着自己的节奏，"
            f"对身边的人和事有独特的看法（mock#{digest[:10]}）。"
            f"情绪起伏自然，言谈间常常流露出{traits[0]}的一面。"
        )
        return f"{description}\ntraits: {', '.join(traits)}"


class MockEmbeddingProvider:
    """Unit-norm deterministic embeddings derived from SHA-256 of the text."""

    def __init__(self, dim: int = 64, batch_size: int = 100, provider_id: str = "mock-embed-64"):
        self.dim = dim
        self.batch_size = batch_size
        self.provider_id = provider_id
        self.calls = 0

    def _vector(self, text: str) -> list[float]:
        values: list[float] = []
        block = 0
        while len(values) < self.dim:
            digest = hashlib.sha256(f"{self.provider_id}\x1f{block}\x1f{text}".encode("utf-8")).digest()
            for off in range(0, len(digest), 4):
                if len(values) >= self.dim:
                    break
                word = int.from_bytes(digest[off : off + 4], "little")
                values.append(word / 2**31 - 1.0)
            block += 1
        norm = math.sqrt(sum(v * v for v in values))
        return [v / norm for v in values]

    def embed_batch(self, texts: Sequence[str]) -> list[list[float]]:
        self.calls += 1
        return [self._vector(t) for t in texts]


def mock_gateway(seed: int = 0, cache_dir: Optional[Path] = None, **kwargs) -> Gateway:
    """Convenience constructor used by --mock CLI runs and tests."""
    config = GatewayConfig(cache_dir=cache_dir, **kwargs)
    return Gateway(
        chat_provider=MockChatProvider(seed=seed),
        embedding_provider=MockEmbeddingProvider(),
        config=config,
    )
