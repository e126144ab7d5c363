"""Canonical corpus data types, JSONL serialization, and corpus statistics.

All text "lengths" reported by this module are Unicode code point counts of
the trimmed string. This is deliberate: it behaves identically for Chinese
and English text, whereas word-splitting rules are script-dependent.

A dialogue "round" is one utterance. All per-dialogue averages follow that
definition.

Serialization is canonical JSONL: one JSON object per line, UTF-8, sorted
keys, compact separators, "\\n" line endings. Parsing a canonical file and
re-serializing it is byte-identical, which the golden-file tests rely on.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .errors import ValidationError

# Closed 10-label emotion taxonomy. Parsing is case-sensitive; anything
# outside this set is rejected.
EMOTION_LABELS: tuple[str, ...] = (
    "Anger",
    "Disgust",
    "Fear",
    "Happiness",
    "Sadness",
    "Surprise",
    "Neutral",
    "Frustration",
    "Excitement",
    "Other",
)
_EMOTION_SET = frozenset(EMOTION_LABELS)

KIND_GENERAL = "General"
KIND_SPECIFIC = "CharacterSpecific"
KINDS = (KIND_GENERAL, KIND_SPECIFIC)

CATEGORY_RAW = "RAW"
CATEGORY_CUS = "CUS"
CATEGORY_SPE = "SPE"
CATEGORIES = (CATEGORY_RAW, CATEGORY_CUS, CATEGORY_SPE)

SIGNATURE_TOLERANCE = 1e-9


def text_length(text: str) -> int:
    """Length of a text in Unicode code points after trimming."""
    return len(text.strip())


def is_emotion_label(value: str) -> bool:
    return value in _EMOTION_SET


@dataclass(frozen=True)
class Utterance:
    speaker: str
    text: str
    turn_index: int
    emotion: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.speaker or self.speaker != self.speaker.strip() or not self.speaker.strip():
            raise ValidationError("speaker must be a non-empty trimmed string")
        if not self.text or self.text != self.text.strip():
            raise ValidationError("text must be a non-empty trimmed string")
        if not isinstance(self.turn_index, int) or isinstance(self.turn_index, bool) or self.turn_index < 0:
            raise ValidationError("turn_index must be a non-negative integer")
        if self.emotion is not None and self.emotion not in _EMOTION_SET:
            raise ValidationError(f"unknown emotion label: {self.emotion!r}")


@dataclass(frozen=True)
class Dialogue:
    dialogue_id: str
    source: str
    utterances: tuple[Utterance, ...]

    def __post_init__(self) -> None:
        if not self.dialogue_id.strip():
            raise ValidationError("dialogue_id must be non-empty")
        if len(self.utterances) < 1:
            raise ValidationError("dialogue must contain at least one utterance")
        prev_index = -1
        for i, utt in enumerate(self.utterances):
            if i == 0 and utt.turn_index != 0:
                raise ValidationError("turn_index must start at 0")
            if utt.turn_index <= prev_index:
                raise ValidationError("turn_index values must be strictly increasing")
            prev_index = utt.turn_index
        for a, b in zip(self.utterances, self.utterances[1:]):
            if a.speaker == b.speaker and a.text == b.text:
                raise ValidationError(
                    "consecutive utterances identical in speaker+text (dedup contract)"
                )

    @property
    def speakers(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for utt in self.utterances:
            seen.setdefault(utt.speaker)
        return tuple(seen)


@dataclass(frozen=True)
class CharacterProfile:
    role_name: str
    role_description: str
    traits: tuple[str, ...] = ()
    emotional_signature: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.role_name.strip():
            raise ValidationError("role_name must be non-empty")
        if len(set(self.traits)) != len(self.traits):
            raise ValidationError("traits must not contain duplicates")
        if self.emotional_signature:
            total = 0.0
            for label, freq in self.emotional_signature.items():
                if label not in _EMOTION_SET:
                    raise ValidationError(f"unknown emotion label in signature: {label!r}")
                if not (0.0 <= freq <= 1.0):
                    raise ValidationError("signature frequencies must lie in [0, 1]")
                total += freq
            if abs(total - 1.0) > SIGNATURE_TOLERANCE:
                raise ValidationError(
                    f"emotional_signature must sum to 1 +/- {SIGNATURE_TOLERANCE} (got {total!r})"
                )


@dataclass(frozen=True)
class InstructionRecord:
    instruction: str
    response: str
    kind: str
    category: str
    role_name: Optional[str] = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValidationError(f"unknown kind: {self.kind!r}")
        if self.category not in CATEGORIES:
            raise ValidationError(f"unknown category: {self.category!r}")
        if self.kind == KIND_SPECIFIC and not (self.role_name or "").strip():
            raise ValidationError("CharacterSpecific records require role_name")
        if self.kind == KIND_GENERAL and self.role_name is not None:
            raise ValidationError("General records must not carry role_name")
        # The evaluation split ties RAW to general instructions and CUS/SPE
        # to character-specific ones.
        if (self.category == CATEGORY_RAW) != (self.kind == KIND_GENERAL):
            raise ValidationError("category RAW <=> kind General")


@dataclass(frozen=True)
class CorpusStats:
    total_dialogues: int
    avg_rounds: float
    n_characters: int
    n_traits: int
    avg_profile_length: float
    n_instructions: int
    n_specific: int
    n_general: int
    avg_instruction_length: float
    n_responses: int
    avg_response_length: float
    empty: bool = False

    def __post_init__(self) -> None:
        if self.n_instructions != self.n_specific + self.n_general:
            raise ValidationError("n_instructions must equal n_specific + n_general")


@dataclass(frozen=True)
class Rejection:
    line_no: int
    reason: str


@dataclass(frozen=True)
class ParseReport:
    records: tuple
    rejections: tuple[Rejection, ...]


# ---------------------------------------------------------------------------
# JSON object <-> record conversion
# ---------------------------------------------------------------------------


def _require_keys(obj: dict, allowed: set[str], required: set[str], what: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ValidationError(f"{what}: unexpected fields {sorted(unknown)}")
    missing = required - set(obj)
    if missing:
        raise ValidationError(f"{what}: missing fields {sorted(missing)}")


def utterance_from_obj(obj: dict) -> Utterance:
    if not isinstance(obj, dict):
        raise ValidationError("utterance must be a JSON object")
    _require_keys(obj, {"speaker", "text", "emotion", "turn_index"}, {"speaker", "text", "turn_index"}, "utterance")
    emotion = obj.get("emotion")
    if emotion is not None and emotion not in _EMOTION_SET:
        raise ValidationError(f"unknown emotion label: {emotion!r}")
    return Utterance(
        speaker=str(obj["speaker"]).strip(),
        text=str(obj["text"]).strip(),
        turn_index=obj["turn_index"],
        emotion=emotion,
    )


def utterance_to_obj(utt: Utterance) -> dict:
    obj: dict = {"speaker": utt.speaker, "text": utt.text, "turn_index": utt.turn_index}
    if utt.emotion is not None:
        obj["emotion"] = utt.emotion
    return obj


def dialogue_from_obj(obj: dict) -> Dialogue:
    if not isinstance(obj, dict):
        raise ValidationError("dialogue must be a JSON object")
    _require_keys(obj, {"dialogue_id", "source", "utterances"}, {"dialogue_id", "source", "utterances"}, "dialogue")
    utterances = obj["utterances"]
    if not isinstance(utterances, list):
        raise ValidationError("utterances must be a list")
    return Dialogue(
        dialogue_id=str(obj["dialogue_id"]),
        source=str(obj["source"]),
        utterances=tuple(utterance_from_obj(u) for u in utterances),
    )


def dialogue_to_obj(dlg: Dialogue) -> dict:
    return {
        "dialogue_id": dlg.dialogue_id,
        "source": dlg.source,
        "utterances": [utterance_to_obj(u) for u in dlg.utterances],
    }


def profile_from_obj(obj: dict) -> CharacterProfile:
    if not isinstance(obj, dict):
        raise ValidationError("profile must be a JSON object")
    _require_keys(
        obj,
        {"role_name", "role_description", "traits", "emotional_signature"},
        {"role_name", "role_description"},
        "profile",
    )
    traits = obj.get("traits", [])
    if not isinstance(traits, list):
        raise ValidationError("traits must be a list")
    signature = obj.get("emotional_signature", {})
    if not isinstance(signature, dict):
        raise ValidationError("emotional_signature must be an object")
    return CharacterProfile(
        role_name=str(obj["role_name"]).strip(),
        role_description=str(obj["role_description"]),
        traits=tuple(str(t) for t in traits),
        emotional_signature={str(k): float(v) for k, v in signature.items()},
    )


def profile_to_obj(profile: CharacterProfile) -> dict:
    return {
        "role_name": profile.role_name,
        "role_description": profile.role_description,
        "traits": list(profile.traits),
        "emotional_signature": dict(profile.emotional_signature),
    }


def instruction_from_obj(obj: dict) -> InstructionRecord:
    if not isinstance(obj, dict):
        raise ValidationError("instruction record must be a JSON object")
    _require_keys(
        obj,
        {"instruction", "response", "kind", "role_name", "category"},
        {"instruction", "response", "kind", "category"},
        "instruction record",
    )
    return InstructionRecord(
        instruction=str(obj["instruction"]),
        response=str(obj["response"]),
        kind=obj["kind"],
        category=obj["category"],
        role_name=obj.get("role_name"),
    )


def instruction_to_obj(rec: InstructionRecord) -> dict:
    obj: dict = {
        "instruction": rec.instruction,
        "response": rec.response,
        "kind": rec.kind,
        "category": rec.category,
    }
    if rec.role_name is not None:
        obj["role_name"] = rec.role_name
    return obj


_SCHEMAS = {
    "dialogues": (dialogue_from_obj, dialogue_to_obj),
    "instructions": (instruction_from_obj, instruction_to_obj),
    "profiles": (profile_from_obj, profile_to_obj),
}


def canonical_json(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def record_to_line(record) -> str:
    """Serialize any corpus record to its canonical JSONL line (no newline)."""
    if isinstance(record, Dialogue):
        return canonical_json(dialogue_to_obj(record))
    if isinstance(record, CharacterProfile):
        return canonical_json(profile_to_obj(record))
    if isinstance(record, InstructionRecord):
        return canonical_json(instruction_to_obj(record))
    raise TypeError(f"not a corpus record: {type(record)!r}")


def serialize_corpus(records: Iterable) -> str:
    return "".join(record_to_line(r) + "\n" for r in records)


def write_corpus(path: Path | str, records: Iterable) -> None:
    Path(path).write_text(serialize_corpus(records), encoding="utf-8")


def parse_corpus(path: Path | str, schema: str) -> ParseReport:
    """Parse a JSONL corpus file, collecting per-line rejections.

    Never silently drops a line: every input line either yields a validated
    record or a Rejection carrying the 1-based line number and a reason.
    Blank lines are rejected rather than skipped.
    """
    if schema not in _SCHEMAS:
        raise ValueError(f"unknown schema {schema!r}; expected one of {sorted(_SCHEMAS)}")
    from_obj, _ = _SCHEMAS[schema]
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IOError(f"cannot read corpus file {path}: {exc}") from exc

    records: list = []
    rejections: list[Rejection] = []
    seen_ids: set[str] = set()
    for line_no, line in enumerate(raw.splitlines(), start=1):
        if not line.strip():
            rejections.append(Rejection(line_no, "blank line"))
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            rejections.append(Rejection(line_no, f"invalid JSON: {exc.msg}"))
            continue
        try:
            record = from_obj(obj)
        except ValidationError as exc:
            rejections.append(Rejection(line_no, str(exc)))
            continue
        # Corpus-level uniqueness checks.
        if schema == "dialogues":
            if record.dialogue_id in seen_ids:
                rejections.append(Rejection(line_no, f"duplicate dialogue_id {record.dialogue_id!r}"))
                continue
            seen_ids.add(record.dialogue_id)
        elif schema == "profiles":
            if record.role_name in seen_ids:
                rejections.append(Rejection(line_no, f"duplicate role_name {record.role_name!r}"))
                continue
            seen_ids.add(record.role_name)
        records.append(record)
    return ParseReport(records=tuple(records), rejections=tuple(rejections))


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------


def _mean(values: Sequence[float]) -> float:
    return sum(values) / len(values) if values else 0.0


def _instruction_key(rec: InstructionRecord) -> tuple[str, str, str]:
    # Two records with the same instruction text are the same instruction
    # (multiple responses per instruction arrive as repeated records); the
    # same text asked of two different roles counts as two instructions.
    return (rec.kind, rec.role_name or "", rec.instruction)


def compute_stats(
    dialogues: Sequence[Dialogue],
    profiles: Sequence[CharacterProfile] = (),
    instructions: Sequence[InstructionRecord] = (),
) -> CorpusStats:
    """Aggregate corpus statistics.

    avg_rounds is total utterances / total dialogues (a round is one
    utterance). Distinct instructions are counted by (kind, role, text);
    every record contributes one response. Averages hold full precision;
    rendering rounds to 2 decimals.
    """
    empty = not dialogues and not profiles and not instructions
    total_dialogues = len(dialogues)
    total_utterances = sum(len(d.utterances) for d in dialogues)
    avg_rounds = total_utterances / total_dialogues if total_dialogues else 0.0

    all_traits = {t for p in profiles for t in p.traits}
    avg_profile_length = _mean([text_length(p.role_description) for p in profiles])

    distinct: dict[tuple[str, str, str], InstructionRecord] = {}
    for rec in instructions:
        distinct.setdefault(_instruction_key(rec), rec)
    n_specific = sum(1 for k in distinct if k[0] == KIND_SPECIFIC)
    n_general = sum(1 for k in distinct if k[0] == KIND_GENERAL)
    avg_instruction_length = _mean([text_length(r.instruction) for r in distinct.values()])
    avg_response_length = _mean([text_length(r.response) for r in instructions])

    return CorpusStats(
        total_dialogues=total_dialogues,
        avg_rounds=avg_rounds,
        n_characters=len(profiles),
        n_traits=len(all_traits),
        avg_profile_length=avg_profile_length,
        n_instructions=n_specific + n_general,
        n_specific=n_specific,
        n_general=n_general,
        avg_instruction_length=avg_instruction_length,
        n_responses=len(instructions),
        avg_response_length=avg_response_length,
        empty=empty,
    )


def render_stats(stats: CorpusStats) -> str:
    """Plain-text statistics report; averages shown to 2 decimals."""
    lines = [
        "Category                          Value",
        "---------------------------------------",
        f"# Total Dialogues                 {stats.total_dialogues:,}",
        f"Avg.round of dialogues            {stats.avg_rounds:.2f}",
        f"# Characters                      {stats.n_characters:,}",
        f"Character Personality Traits      {stats.n_traits:,}",
        f"Avg.length of profile             {stats.avg_profile_length:.2f}",
        f"# Instructions                    {stats.n_instructions:,}",
        f"Character-specific instructions   {stats.n_specific:,}",
        f"General instructions              {stats.n_general:,}",
        f"Avg. instruction length           {stats.avg_instruction_length:.2f}",
        f"# Response                        {stats.n_responses:,}",
        f"Avg.response length               {stats.avg_response_length:.2f}",
    ]
    if stats.empty:
        lines.append("(empty corpus)")
    return "\n".join(lines) + "\n"


def emotional_signature(dialogues: Sequence[Dialogue], role_name: str) -> dict[str, float]:
    """Frequency of each emotion label over a role's labeled utterances.

    Unlabeled utterances are excluded. Raises if the role has no labeled
    utterance at all.
    """
    counts: dict[str, int] = {}
    for dlg in dialogues:
        for utt in dlg.utterances:
            if utt.speaker == role_name and utt.emotion is not None:
                counts[utt.emotion] = counts.get(utt.emotion, 0) + 1
    total = sum(counts.values())
    if total == 0:
        raise ValidationError(f"no emotion data for role: {role_name!r}")
    return {label: counts[label] / total for label in sorted(counts)}
