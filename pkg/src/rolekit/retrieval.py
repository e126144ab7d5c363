"""Per-role semantic retrieval: chunking, flat cosine index, persistence.

Chunking is by Unicode code points (script-neutral) with a configurable
window and overlap. Search is exhaustive cosine over all chunks; per-role
indices stay small enough that exactness beats an ANN structure.

On-disk layout: chunks.jsonl(metadata + text per line) next to vectors.bin
(16-byte header: magic "RFIX", uint32 version, uint32 dim, uint32 count,
all little-endian, then count*dim float32 values, row-major).
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .corpus import CharacterProfile, Dialogue, canonical_json
from .errors import ConfigError, IntegrityError, ValidationError
from .gateway import EmbeddingVector, Gateway

VECTORS_MAGIC = b"RFIX"
VECTORS_VERSION = 1

DEFAULT_CHUNK_SIZE = 400
DEFAULT_OVERLAP = 50

SOURCE_PROFILE = "Profile"
SOURCE_SCRIPT = "DialogueScript"

# Score assigned when a zero-norm vector makes cosine undefined.
ZERO_NORM_SCORE = -1.0
_NORM_EPS = 1e-12


def cosine_similarity(a: Sequence[float], b: Sequence[float]) -> float:
    """Plain cosine similarity; raises on zero-norm input."""
    dot = sum(x * y for x, y in zip(a, b))
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(y * y for y in b))
    if na < _NORM_EPS or nb < _NORM_EPS:
        raise ValidationError("cosine similarity is undefined for a zero-norm vector")
    return dot / (na * nb)


def chunk_spans(length: int, chunk_size: int, overlap: int) -> list[tuple[int, int]]:
    """Window spans covering [0, length); consecutive spans share `overlap`."""
    if overlap < 0 or chunk_size <= overlap:
        raise ConfigError("require chunk_size > overlap >= 0")
    step = chunk_size - overlap
    spans: list[tuple[int, int]] = []
    start = 0
    while True:
        end = min(start + chunk_size, length)
        spans.append((start, end))
        if end >= length:
            return spans
        start += step


def chunk_text(text: str, chunk_size: int, overlap: int) -> list[str]:
    if not text:
        return []
    return [text[a:b] for a, b in chunk_spans(len(text), chunk_size, overlap)]


def linearize_dialogue(dialogue: Dialogue) -> str:
    return "\n".join(f"{u.speaker}: {u.text}" for u in dialogue.utterances)


@dataclass(frozen=True)
class RetrievalChunk:
    chunk_id: str
    role_name: str
    text: str
    source: str  # Profile | DialogueScript
    vector: EmbeddingVector

    def __post_init__(self) -> None:
        if self.source not in (SOURCE_PROFILE, SOURCE_SCRIPT):
            raise ValidationError(f"unknown chunk source: {self.source!r}")


@dataclass(frozen=True)
class QueryResult:
    chunk_id: str
    score: float
    text: str
    flagged: bool = False  # True when a zero-norm vector forced the score


class RetrievalIndex:
    """Immutable flat index over a role's profile and dialogue chunks.

    Scores are computed with plain sequential float arithmetic (no BLAS),
    so a brute-force reimplementation of cosine over the same vectors gets
    bit-identical numbers.
    """

    def __init__(self, chunks: Sequence[RetrievalChunk]):
        self.chunks: tuple[RetrievalChunk, ...] = tuple(chunks)
        if self.chunks:
            dims = {c.vector.dim for c in self.chunks}
            providers = {c.vector.provider_id for c in self.chunks}
            if len(dims) != 1 or len(providers) != 1:
                raise IntegrityError(
                    f"index requires one dim/provider, got dims={sorted(dims)} providers={sorted(providers)}"
                )
            self.dim = dims.pop()
            self.provider_id = providers.pop()
        else:
            self.dim = 0
            self.provider_id = ""
        self._norms = [math.sqrt(sum(v * v for v in c.vector.values)) for c in self.chunks]

    def __len__(self) -> int:
        return len(self.chunks)

    @classmethod
    def build(
        cls,
        profile: Optional[CharacterProfile],
        dialogues: Sequence[Dialogue],
        gateway: Gateway,
        chunk_size: int = DEFAULT_CHUNK_SIZE,
        overlap: int = DEFAULT_OVERLAP,
    ) -> "RetrievalIndex":
        role_name = profile.role_name if profile else ""
        pending: list[tuple[str, str, str]] = []  # (chunk_id, source, text)
        if profile and profile.role_description:
            for seq, piece in enumerate(chunk_text(profile.role_description, chunk_size, overlap)):
                pending.append((f"profile:{profile.role_name}:{seq:04d}", SOURCE_PROFILE, piece))
        for dlg in dialogues:
            for seq, piece in enumerate(chunk_text(linearize_dialogue(dlg), chunk_size, overlap)):
                pending.append((f"script:{dlg.dialogue_id}:{seq:04d}", SOURCE_SCRIPT, piece))
        if not pending:
            return cls(())
        vectors = gateway.embed([text for _, _, text in pending])
        chunks = [
            RetrievalChunk(chunk_id=cid, role_name=role_name, text=text, source=source, vector=vec)
            for (cid, source, text), vec in zip(pending, vectors)
        ]
        return cls(chunks)

    def query(self, text: str, k: int, gateway: Gateway) -> list[QueryResult]:
        """Top-k chunks by cosine similarity, ties broken by chunk_id."""
        if k < 1:
            raise ValidationError("k must be >= 1")
        if not text.strip():
            raise ValidationError("query text must be non-empty")
        if not self.chunks:
            return []
        qvec = gateway.embed([text])[0]
        if qvec.provider_id != self.provider_id:
            raise IntegrityError(
                f"query embedded with {qvec.provider_id!r} but index holds {self.provider_id!r}"
            )
        if qvec.dim != self.dim:
            raise IntegrityError(f"query dim {qvec.dim} != index dim {self.dim}")
        q = qvec.values
        qnorm = math.sqrt(sum(v * v for v in q))
        results: list[QueryResult] = []
        for chunk, norm in zip(self.chunks, self._norms):
            if qnorm < _NORM_EPS or norm < _NORM_EPS:
                results.append(QueryResult(chunk.chunk_id, ZERO_NORM_SCORE, chunk.text, flagged=True))
            else:
                dot = sum(a * b for a, b in zip(q, chunk.vector.values))
                results.append(QueryResult(chunk.chunk_id, dot / (qnorm * norm), chunk.text))
        results.sort(key=lambda r: (-r.score, r.chunk_id))
        return results[:k]

    # -- persistence ----------------------------------------------------------

    def save(self, out_dir: Path | str) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        lines = []
        for chunk in self.chunks:
            lines.append(
                canonical_json(
                    {
                        "chunk_id": chunk.chunk_id,
                        "role_name": chunk.role_name,
                        "source": chunk.source,
                        "text": chunk.text,
                        "provider_id": chunk.vector.provider_id,
                    }
                )
            )
        (out / "chunks.jsonl").write_text("".join(l + "\n" for l in lines), encoding="utf-8")
        header = struct.pack("<4sIII", VECTORS_MAGIC, VECTORS_VERSION, self.dim, len(self.chunks))
        matrix32 = np.array([c.vector.values for c in self.chunks], dtype="<f4")
        (out / "vectors.bin").write_bytes(header + matrix32.tobytes(order="C"))

    @classmethod
    def load(cls, in_dir: Path | str) -> "RetrievalIndex":
        src = Path(in_dir)
        raw = (src / "vectors.bin").read_bytes()
        if len(raw) < 16:
            raise IntegrityError("vectors.bin too short for header")
        magic, version, dim, count = struct.unpack("<4sIII", raw[:16])
        if magic != VECTORS_MAGIC:
            raise IntegrityError(f"bad vectors.bin magic: {magic!r}")
        if version != VECTORS_VERSION:
            raise IntegrityError(f"unsupported vectors.bin version: {version}")
        body = np.frombuffer(raw[16:], dtype="<f4")
        if body.size != dim * count:
            raise IntegrityError(f"vectors.bin payload holds {body.size} floats, expected {dim * count}")
        matrix = body.reshape((count, dim)) if count else np.zeros((0, 0), dtype="<f4")

        chunks: list[RetrievalChunk] = []
        text = (src / "chunks.jsonl").read_text(encoding="utf-8")
        for i, line in enumerate(text.splitlines()):
            if not line.strip():
                continue
            obj = json.loads(line)
            if i >= count:
                raise IntegrityError("chunks.jsonl lists more chunks than vectors.bin")
            chunks.append(
                RetrievalChunk(
                    chunk_id=obj["chunk_id"],
                    role_name=obj["role_name"],
                    source=obj["source"],
                    text=obj["text"],
                    vector=EmbeddingVector(
                        values=tuple(float(v) for v in matrix[i]),
                        dim=dim,
                        provider_id=obj["provider_id"],
                    ),
                )
            )
        if len(chunks) != count:
            raise IntegrityError(f"chunks.jsonl holds {len(chunks)} chunks, vectors.bin header says {count}")
        return cls(chunks)
