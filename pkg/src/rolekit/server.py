"""HTTP front for the conversation engine.

Thin by design: request/response models, error mapping, and nothing else.
Every error body has the same shape, {"code": slug, "message": text}, so
clients never branch on two error formats.
"""

from __future__ import annotations

from typing import Optional

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .engine import RoleplayEngine
from .errors import (
    ContentError,
    RolekitError,
    SessionNotFoundError,
    TransportError,
    ValidationError,
)


class CreateSessionRequest(BaseModel):
    role_name: str
    max_history_turns: Optional[int] = Field(default=None, ge=0)


class SessionSummary(BaseModel):
    session_id: str
    role_name: str


class TurnRequest(BaseModel):
    text: str


class RetrievedChunk(BaseModel):
    chunk_id: str
    score: float
    text: str


class TurnTraceBody(BaseModel):
    retrieved: list[RetrievedChunk]
    prompt_rendered: str
    temperature: float
    top_p: float


class TurnResponse(BaseModel):
    reply: str
    trace: TurnTraceBody


class RoleBody(BaseModel):
    role_name: str
    role_description: str
    traits: list[str]
    emotional_signature: dict[str, float]


class Exchange(BaseModel):
    user: str
    assistant: str


class TranscriptBody(BaseModel):
    session_id: str
    role_name: str
    turns: list[Exchange]


class DeleteBody(BaseModel):
    deleted: bool


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"code": code, "message": message})


def create_app(engine: RoleplayEngine, cors: bool = False) -> FastAPI:
    app = FastAPI(title="rolekit", docs_url=None, redoc_url=None)
    if cors:
        app.add_middleware(
            CORSMiddleware,
            allow_origins=["*"],
            allow_methods=["*"],
            allow_headers=["*"],
        )

    @app.exception_handler(SessionNotFoundError)
    async def _not_found(_req: Request, exc: SessionNotFoundError):
        return _error(404, "not_found", str(exc))

    @app.exception_handler(ValidationError)
    async def _invalid(_req: Request, exc: ValidationError):
        return _error(422, "invalid_request", str(exc))

    @app.exception_handler(RequestValidationError)
    async def _bad_body(_req: Request, exc: RequestValidationError):
        return _error(422, "invalid_request", str(exc))

    @app.exception_handler(TransportError)
    async def _upstream_down(_req: Request, exc: TransportError):
        return _error(502, "upstream_unavailable", str(exc))

    @app.exception_handler(ContentError)
    async def _upstream_bad(_req: Request, exc: ContentError):
        return _error(502, "upstream_error", str(exc))

    @app.exception_handler(RolekitError)
    async def _internal(_req: Request, exc: RolekitError):
        return _error(500, "internal_error", str(exc))

    @app.get("/roles", response_model=list[RoleBody])
    def list_roles():
        return [
            RoleBody(
                role_name=p.role_name,
                role_description=p.role_description,
                traits=list(p.traits),
                emotional_signature=dict(p.emotional_signature),
            )
            for p in engine.list_roles()
        ]

    @app.post("/sessions", response_model=SessionSummary, status_code=201)
    def create_session(body: CreateSessionRequest):
        session = engine.create_session(body.role_name, body.max_history_turns)
        return SessionSummary(session_id=session.session_id, role_name=session.role_name)

    @app.get("/sessions/{session_id}", response_model=TranscriptBody)
    def get_session(session_id: str):
        session = engine.get_session(session_id)
        return TranscriptBody(
            session_id=session.session_id,
            role_name=session.role_name,
            turns=[Exchange(user=u, assistant=a) for u, a in session.history],
        )

    @app.delete("/sessions/{session_id}", response_model=DeleteBody)
    def delete_session(session_id: str):
        engine.delete_session(session_id)
        return DeleteBody(deleted=True)

    @app.post("/sessions/{session_id}/turns", response_model=TurnResponse)
    def take_turn(session_id: str, body: TurnRequest):
        reply, trace = engine.take_turn(session_id, body.text)
        return TurnResponse(
            reply=reply,
            trace=TurnTraceBody(
                retrieved=[
                    RetrievedChunk(chunk_id=r.chunk_id, score=r.score, text=r.text)
                    for r in trace.retrieved
                ],
                prompt_rendered=trace.prompt_rendered,
                temperature=trace.temperature,
                top_p=trace.top_p,
            ),
        )

    return app
