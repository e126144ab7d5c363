"""Conversation engine: sessions, persona system prompts, retrieval-augmented
turns, and scripted multi-turn runs.

Sessions live in memory, keyed by unguessable ids. A turn either fully
succeeds (reply appended to history) or leaves the session untouched; there
is no half-written state for a retry to trip over.
"""

from __future__ import annotations

import json
import secrets
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .corpus import CharacterProfile
from .errors import SessionNotFoundError, ValidationError
from .gateway import ChatRequest, Gateway
from .pipeline import PromptTemplate, load_template
from .retrieval import QueryResult, RetrievalIndex

# Conversation sampling (deliberately not the corpus-construction values).
CHAT_TEMPERATURE = 0.95
CHAT_TOP_P = 0.7

DEFAULT_RETRIEVAL_K = 3
DEFAULT_MAX_HISTORY_TURNS = 10

_MEMORY_HEADER = "Relevant memories:"


@dataclass(frozen=True)
class EngineConfig:
    retrieval_k: int = DEFAULT_RETRIEVAL_K
    max_history_turns: int = DEFAULT_MAX_HISTORY_TURNS
    temperature: float = CHAT_TEMPERATURE
    top_p: float = CHAT_TOP_P
    max_tokens: int = 1024

    def __post_init__(self) -> None:
        if self.retrieval_k < 0:
            raise ValidationError("retrieval_k must be >= 0")
        if self.max_history_turns < 0:
            raise ValidationError("max_history_turns must be >= 0")


@dataclass
class Session:
    session_id: str
    role_name: str
    created_at: float
    max_history_turns: int
    history: list[tuple[str, str]] = field(default_factory=list)  # (user, assistant)


@dataclass(frozen=True)
class TurnTrace:
    retrieved: tuple[QueryResult, ...]
    prompt_rendered: str
    temperature: float
    top_p: float


@dataclass(frozen=True)
class TranscriptResult:
    transcript: str
    exchanges: tuple[tuple[str, str], ...]
    error_index: Optional[int] = None
    error: Optional[str] = None


def assemble_system_prompt(
    template: PromptTemplate,
    profile: CharacterProfile,
    retrieved: Sequence[QueryResult] = (),
) -> str:
    """Persona prompt plus an optional retrieved-memories block. With no
    retrieved chunks the block is absent entirely, not rendered empty."""
    system, _ = template.render_parts(
        role_name=profile.role_name, role_description=profile.role_description
    )
    if not retrieved:
        return system
    lines = [f"- {r.text}" for r in retrieved]
    return f"{system}\n\n{_MEMORY_HEADER}\n" + "\n".join(lines)


class RoleplayEngine:
    """Serves chat turns for a set of character profiles.

    Retrieval indices are optional per role; a role without one simply gets
    no memory block. All public methods are thread-safe; turns in the same
    session are serialized, turns in different sessions run concurrently.
    """

    def __init__(
        self,
        gateway: Gateway,
        profiles: dict[str, CharacterProfile],
        indices: Optional[dict[str, RetrievalIndex]] = None,
        template: Optional[PromptTemplate] = None,
        config: EngineConfig = EngineConfig(),
    ):
        if not profiles:
            raise ValidationError("engine needs at least one profile")
        self.gateway = gateway
        self.profiles = dict(profiles)
        self.indices = dict(indices or {})
        self.template = template or load_template("GeneralResponse")
        self.config = config
        self._sessions: dict[str, Session] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()

    # -- session management ---------------------------------------------------

    def create_session(self, role_name: str, max_history_turns: Optional[int] = None) -> Session:
        if role_name not in self.profiles:
            raise SessionNotFoundError(f"unknown role: {role_name!r}")
        session = Session(
            session_id=secrets.token_hex(16),
            role_name=role_name,
            created_at=time.time(),
            max_history_turns=(
                self.config.max_history_turns if max_history_turns is None else max_history_turns
            ),
        )
        with self._registry_lock:
            self._sessions[session.session_id] = session
            self._locks[session.session_id] = threading.Lock()
        return session

    def get_session(self, session_id: str) -> Session:
        with self._registry_lock:
            session = self._sessions.get(session_id)
        if session is None:
            raise SessionNotFoundError(f"no such session: {session_id!r}")
        return session

    def delete_session(self, session_id: str) -> None:
        with self._registry_lock:
            if session_id not in self._sessions:
                raise SessionNotFoundError(f"no such session: {session_id!r}")
            del self._sessions[session_id]
            del self._locks[session_id]

    def list_roles(self) -> list[CharacterProfile]:
        return [self.profiles[name] for name in sorted(self.profiles)]

    # -- turns -----------------------------------------------------------------

    def take_turn(self, session_id: str, user_text: str) -> tuple[str, TurnTrace]:
        """One retrieval-augmented exchange.

        History is appended only after the completion arrives, so a failed
        call leaves the session exactly as it was.
        """
        if not user_text.strip():
            raise ValidationError("user text must be non-empty")
        session = self.get_session(session_id)
        with self._registry_lock:
            lock = self._locks.get(session_id)
        if lock is None:
            raise SessionNotFoundError(f"no such session: {session_id!r}")
        with lock:
            profile = self.profiles[session.role_name]
            index = self.indices.get(session.role_name)
            retrieved: tuple[QueryResult, ...] = ()
            if index is not None and len(index) and self.config.retrieval_k > 0:
                retrieved = tuple(index.query(user_text, self.config.retrieval_k, self.gateway))
            system = assemble_system_prompt(self.template, profile, retrieved)
            messages: tuple[tuple[str, str], ...] = ()
            for user, assistant in session.history:
                messages += (("user", user), ("assistant", assistant))
            messages += (("user", user_text),)
            request = ChatRequest(
                system=system,
                messages=messages,
                temperature=self.config.temperature,
                top_p=self.config.top_p,
                max_tokens=self.config.max_tokens,
            )
            reply = self.gateway.chat(request).text

            session.history.append((user_text, reply))
            while len(session.history) > session.max_history_turns:
                session.history.pop(0)
            trace = TurnTrace(
                retrieved=retrieved,
                prompt_rendered=system,
                temperature=self.config.temperature,
                top_p=self.config.top_p,
            )
            return reply, trace

    def run_script(self, session_id: str, turns: Sequence[str]) -> TranscriptResult:
        """Feeds scripted user turns in order; a failure aborts the run and
        reports the failing turn index with the partial transcript."""
        session = self.get_session(session_id)
        exchanges: list[tuple[str, str]] = []
        error_index: Optional[int] = None
        error: Optional[str] = None
        for i, text in enumerate(turns):
            try:
                reply, _ = self.take_turn(session_id, text)
            except Exception as exc:  # noqa: BLE001 - reported, not swallowed
                error_index = i
                error = str(exc)
                break
            exchanges.append((text, reply))
        lines = []
        for i, (question, answer) in enumerate(exchanges, start=1):
            lines.append(f"Q{i}: {question}")
            lines.append(f"{session.role_name}: {answer}")
        return TranscriptResult(
            transcript="\n".join(lines),
            exchanges=tuple(exchanges),
            error_index=error_index,
            error=error,
        )

    # -- snapshots ---------------------------------------------------------------

    def save_sessions(self, path: Path | str) -> None:
        with self._registry_lock:
            sessions = list(self._sessions.values())
        rows = [
            {
                "session_id": s.session_id,
                "role_name": s.role_name,
                "created_at": s.created_at,
                "max_history_turns": s.max_history_turns,
                "history": [list(pair) for pair in s.history],
            }
            for s in sorted(sessions, key=lambda s: s.created_at)
        ]
        Path(path).write_text(
            "".join(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n" for r in rows),
            encoding="utf-8",
        )

    def load_sessions(self, path: Path | str) -> int:
        count = 0
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            obj = json.loads(line)
            if obj["role_name"] not in self.profiles:
                continue
            session = Session(
                session_id=obj["session_id"],
                role_name=obj["role_name"],
                created_at=obj["created_at"],
                max_history_turns=obj["max_history_turns"],
                history=[tuple(pair) for pair in obj["history"]],
            )
            with self._registry_lock:
                self._sessions[session.session_id] = session
                self._locks[session.session_id] = threading.Lock()
            count += 1
        return count
