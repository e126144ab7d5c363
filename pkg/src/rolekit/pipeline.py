"""Corpus construction stages: cleaning, emotion annotation with majority
merging, profile generation, grounded Q&A generation, and persona answers
to general instructions.

Every stage is resumable (LLM calls go through the gateway cache) and
returns a report alongside its output; nothing is dropped silently. Report
rows are plain dicts with a "kind" of "drop", "warning" or "pending".
"""

from __future__ import annotations

import hashlib
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from importlib.resources import files as resource_files
from pathlib import Path
from typing import Optional, Sequence

from .corpus import (
    CATEGORY_CUS,
    CATEGORY_RAW,
    CATEGORY_SPE,
    EMOTION_LABELS,
    KIND_GENERAL,
    KIND_SPECIFIC,
    CharacterProfile,
    Dialogue,
    InstructionRecord,
    Utterance,
    canonical_json,
    emotional_signature,
)
from .errors import StageError, TemplateError, TransportError, ValidationError
from .gateway import ChatRequest, Gateway

# Sampling used for all corpus-construction completions.
GENERATION_TEMPERATURE = 0.7
GENERATION_TOP_P = 0.95

DEFAULT_ANNOTATORS = 3

CONSENSUS_RESOLVED = "Resolved"
CONSENSUS_NEEDS_REANNOTATION = "NeedsReannotation"

_PLACEHOLDER_RE = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")
_PART_SEPARATOR = "\n=== user ===\n"

TEMPLATE_FILES = {
    "SentimentClassification": ("sentiment_classification.txt", frozenset({"sentence"})),
    "GeneralResponse": ("general_response.txt", frozenset({"role_name", "role_description"})),
    "ContextInstruct": (
        "context_instruct.txt",
        frozenset({"question_num", "role_name", "role_description", "script", "example_text"}),
    ),
    "JudgeEval": (
        "judge_eval.txt",
        frozenset({"role_name", "role_description", "question", "list_model_answer_dict"}),
    ),
    "ProfileGeneration": ("profile_generation.txt", frozenset({"role_name", "script"})),
}

TEMPLATE_IDS = tuple(TEMPLATE_FILES)

DEFAULT_QA_EXAMPLE = "Q1: 你最近在忙什么？\nA1: 还能忙什么，老样子，一堆事等着我呢。"


@dataclass(frozen=True)
class PromptTemplate:
    """A prompt file with {placeholder} slots and an optional user section.

    A body may contain a line "=== user ===" splitting the system part from
    the user part; without it the whole body is the system part. Only
    `{identifier}` spans are placeholders, so literal JSON braces in a
    template survive rendering untouched.
    """

    template_id: str
    body: str
    required: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        if not self.template_id:
            raise TemplateError("template_id must be non-empty")
        missing = self.required - self.placeholders()
        if missing:
            raise TemplateError(
                f"template {self.template_id}: body lacks required placeholders {sorted(missing)}"
            )

    def placeholders(self) -> frozenset[str]:
        return frozenset(m.group(1) for m in _PLACEHOLDER_RE.finditer(self.body))

    def render(self, **bindings) -> str:
        def substitute(match: re.Match) -> str:
            name = match.group(1)
            if name not in bindings:
                raise TemplateError(f"template {self.template_id}: unbound placeholder {{{name}}}")
            return str(bindings[name])

        return _PLACEHOLDER_RE.sub(substitute, self.body)

    def render_parts(self, **bindings) -> tuple[str, str]:
        """(system, user) pair; user is "" when the body has no user section."""
        rendered = self.render(**bindings)
        if _PART_SEPARATOR in rendered:
            system, user = rendered.split(_PART_SEPARATOR, 1)
            return system.strip("\n"), user.strip("\n")
        return rendered.strip("\n"), ""


def load_template(template_id: str, prompts_dir: Optional[Path] = None) -> PromptTemplate:
    if template_id not in TEMPLATE_FILES:
        raise TemplateError(f"unknown template id: {template_id!r} (known: {', '.join(TEMPLATE_IDS)})")
    filename, required = TEMPLATE_FILES[template_id]
    if prompts_dir is not None:
        body = (Path(prompts_dir) / filename).read_text(encoding="utf-8")
    else:
        body = (resource_files("rolekit") / "prompts" / filename).read_text(encoding="utf-8")
    return PromptTemplate(template_id=template_id, body=body, required=required)


# -- cleaning ------------------------------------------------------------------


def _content_hash(utterances: Sequence[Utterance]) -> str:
    joined = "\x1f".join(f"{u.speaker}\x00{u.text}" for u in utterances)
    return hashlib.sha256(joined.encode("utf-8")).hexdigest()


def clean_dialogues(dialogues: Sequence[Dialogue]) -> tuple[list[Dialogue], list[dict]]:
    """Drops multi-party dialogues, merges consecutive same-speaker turns
    with a single space, reindexes turns from zero, and drops exact content
    duplicates (first occurrence wins). Idempotent.
    """
    kept: list[Dialogue] = []
    report: list[dict] = []
    seen: dict[str, str] = {}
    for dlg in dialogues:
        speakers = {u.speaker for u in dlg.utterances}
        if len(speakers) > 2:
            report.append(
                {
                    "kind": "drop",
                    "dialogue_id": dlg.dialogue_id,
                    "reason": f"multi-party dialogue with {len(speakers)} speakers",
                }
            )
            continue
        merged: list[Utterance] = []
        merges = 0
        for utt in dlg.utterances:
            if merged and merged[-1].speaker == utt.speaker:
                prev = merged[-1]
                # Labels survive a merge only when they agree.
                emotion = prev.emotion if prev.emotion == utt.emotion else None
                merged[-1] = replace(prev, text=f"{prev.text} {utt.text}", emotion=emotion)
                merges += 1
            else:
                merged.append(utt)
        reindexed = tuple(replace(u, turn_index=i) for i, u in enumerate(merged))
        digest = _content_hash(reindexed)
        if digest in seen:
            report.append(
                {
                    "kind": "drop",
                    "dialogue_id": dlg.dialogue_id,
                    "reason": f"duplicate of dialogue {seen[digest]!r}",
                }
            )
            continue
        seen[digest] = dlg.dialogue_id
        if merges:
            report.append(
                {
                    "kind": "warning",
                    "dialogue_id": dlg.dialogue_id,
                    "reason": f"merged {merges} consecutive same-speaker utterance(s)",
                }
            )
        kept.append(Dialogue(dialogue_id=dlg.dialogue_id, source=dlg.source, utterances=reindexed))
    if not kept:
        report.append({"kind": "warning", "dialogue_id": "", "reason": "empty corpus after cleaning"})
    return kept, report


# -- emotion annotation ----------------------------------------------------------


@dataclass(frozen=True)
class AnnotationVote:
    dialogue_id: str
    turn_index: int
    annotator_id: str
    label: str
    rationale: str = ""

    def __post_init__(self) -> None:
        if self.label not in EMOTION_LABELS:
            raise ValidationError(f"unknown emotion label: {self.label!r}")


@dataclass(frozen=True)
class ConsensusResult:
    dialogue_id: str
    turn_index: int
    status: str
    label: Optional[str] = None

    def __post_init__(self) -> None:
        if self.status not in (CONSENSUS_RESOLVED, CONSENSUS_NEEDS_REANNOTATION):
            raise ValidationError(f"unknown consensus status: {self.status!r}")
        if (self.status == CONSENSUS_RESOLVED) != (self.label is not None):
            raise ValidationError("label must be set exactly when status is Resolved")


_LABEL_PATTERNS = {label: re.compile(rf"\b{label.lower()}\b") for label in EMOTION_LABELS}


def parse_emotion_reply(text: str) -> Optional[str]:
    """The canonical label named by the reply, or None when the reply names
    zero or several labels (case-insensitive whole-word match)."""
    lower = text.lower()
    found = [label for label, pattern in _LABEL_PATTERNS.items() if pattern.search(lower)]
    return found[0] if len(found) == 1 else None


def annotate_emotions(
    dialogues: Sequence[Dialogue],
    gateway: Gateway,
    template: Optional[PromptTemplate] = None,
    n_annotators: int = DEFAULT_ANNOTATORS,
) -> tuple[list[AnnotationVote], list[dict]]:
    """Collects n independent emotion votes per utterance.

    Each annotator is a distinct sample of the same prompt (the annotator id
    doubles as the gateway sample key). An unparseable reply is re-sampled
    once, then recorded as Other. Transport failures leave the utterance
    pending in the report instead of aborting the stage; a rerun picks the
    finished votes up from the cache.
    """
    if n_annotators < 1:
        raise ValidationError("n_annotators must be >= 1")
    tmpl = template or load_template("SentimentClassification")

    jobs = [
        (dlg.dialogue_id, utt.turn_index, utt.text, f"annotator-{a}")
        for dlg in dialogues
        for utt in dlg.utterances
        for a in range(1, n_annotators + 1)
    ]

    def run(job: tuple[str, int, str, str]) -> tuple[Optional[AnnotationVote], Optional[dict]]:
        dialogue_id, turn_index, text, annotator_id = job
        system, user = tmpl.render_parts(sentence=text)
        request = ChatRequest(
            system=system,
            messages=(("user", user),),
            temperature=GENERATION_TEMPERATURE,
            top_p=GENERATION_TOP_P,
        )
        try:
            reply = gateway.chat(request, sample_key=annotator_id).text
            label = parse_emotion_reply(reply)
            if label is None:
                reply = gateway.chat(request, sample_key=f"{annotator_id}/retry").text
                label = parse_emotion_reply(reply)
            if label is None:
                vote = AnnotationVote(dialogue_id, turn_index, annotator_id, "Other", "unparseable reply")
            else:
                vote = AnnotationVote(dialogue_id, turn_index, annotator_id, label, reply)
            return vote, None
        except TransportError as exc:
            row = {
                "kind": "pending",
                "dialogue_id": dialogue_id,
                "turn_index": turn_index,
                "annotator_id": annotator_id,
                "reason": str(exc),
            }
            return None, row

    votes: list[AnnotationVote] = []
    report: list[dict] = []
    with ThreadPoolExecutor(max_workers=max(1, gateway.config.max_in_flight)) as pool:
        for vote, row in pool.map(run, jobs):
            if vote is not None:
                votes.append(vote)
            if row is not None:
                report.append(row)
    return votes, report


def majority_label(labels: Sequence[str]) -> Optional[str]:
    """The label holding a strict majority (> half) of the votes, else None.
    Order-independent: counts alone decide."""
    total = len(labels)
    if total == 0:
        return None
    counts: dict[str, int] = {}
    for label in labels:
        counts[label] = counts.get(label, 0) + 1
    for label in sorted(counts):
        if 2 * counts[label] > total:
            return label
    return None


def merge_consensus(votes: Sequence[AnnotationVote]) -> list[ConsensusResult]:
    """One result per annotated utterance: Resolved with the majority label,
    or NeedsReannotation when no label passes half. Output is sorted by
    (dialogue_id, turn_index) so vote order never matters."""
    grouped: dict[tuple[str, int], list[str]] = {}
    for vote in votes:
        grouped.setdefault((vote.dialogue_id, vote.turn_index), []).append(vote.label)
    results = []
    for (dialogue_id, turn_index), labels in sorted(grouped.items()):
        winner = majority_label(labels)
        if winner is None:
            results.append(
                ConsensusResult(dialogue_id, turn_index, CONSENSUS_NEEDS_REANNOTATION)
            )
        else:
            results.append(ConsensusResult(dialogue_id, turn_index, CONSENSUS_RESOLVED, winner))
    return results


def apply_consensus(
    dialogues: Sequence[Dialogue], results: Sequence[ConsensusResult]
) -> list[Dialogue]:
    """Writes resolved labels onto the dialogues; unresolved turns keep
    whatever label they had (usually none)."""
    resolved = {
        (r.dialogue_id, r.turn_index): r.label
        for r in results
        if r.status == CONSENSUS_RESOLVED
    }
    out = []
    for dlg in dialogues:
        utterances = tuple(
            replace(u, emotion=resolved.get((dlg.dialogue_id, u.turn_index), u.emotion))
            for u in dlg.utterances
        )
        out.append(Dialogue(dialogue_id=dlg.dialogue_id, source=dlg.source, utterances=utterances))
    return out


# -- profile generation ----------------------------------------------------------

_TRAITS_LINE_RE = re.compile(r"^\s*traits\s*[:：]\s*(.+?)\s*$", re.IGNORECASE)


def _script_lines(dialogues: Sequence[Dialogue], role_name: Optional[str] = None) -> str:
    """Dialogue text flattened for prompting, with emotion tags in brackets.
    Restricted to one speaker when role_name is given."""
    lines: list[str] = []
    for dlg in dialogues:
        for utt in dlg.utterances:
            if role_name is not None and utt.speaker != role_name:
                continue
            tag = f" [{utt.emotion}]" if utt.emotion else ""
            lines.append(f"{utt.speaker}: {utt.text}{tag}")
        if lines and role_name is None:
            lines.append("")
    return "\n".join(lines).strip("\n")


def default_profile_template() -> str:
    return (resource_files("rolekit") / "prompts" / "profile_generation.txt").read_text(encoding="utf-8")


def generate_profile(
    role_name: str,
    dialogues: Sequence[Dialogue],
    gateway: Gateway,
    description_template: Optional[str] = None,
) -> tuple[CharacterProfile, list[str]]:
    """Writes a prose description of the role from its tagged utterances.

    The completion must end with a "traits: ..." line, which is split off
    into the trait list; a missing line yields an empty list plus a warning.
    The emotional signature is computed locally from the labels, never asked
    of the model.
    """
    script = _script_lines(dialogues, role_name)
    if not script:
        raise StageError(f"role {role_name!r} has no utterances in the supplied dialogues")
    signature = emotional_signature(dialogues, role_name)

    tmpl = PromptTemplate(
        template_id="ProfileGeneration",
        body=description_template if description_template is not None else default_profile_template(),
        required=frozenset({"role_name", "script"}),
    )
    system, user = tmpl.render_parts(role_name=role_name, script=script)
    messages = (("user", user),) if user else (("user", script),)
    request = ChatRequest(
        system=system,
        messages=messages,
        temperature=GENERATION_TEMPERATURE,
        top_p=GENERATION_TOP_P,
    )
    reply = gateway.chat(request).text

    warnings: list[str] = []
    lines = reply.splitlines()
    traits_idx = None
    for i in range(len(lines) - 1, -1, -1):
        if _TRAITS_LINE_RE.match(lines[i]):
            traits_idx = i
            break
    if traits_idx is None:
        description = reply.strip()
        traits: tuple[str, ...] = ()
        warnings.append("profile reply has no traits line")
    else:
        raw = _TRAITS_LINE_RE.match(lines[traits_idx]).group(1)
        seen: list[str] = []
        for piece in re.split(r"[,，、]", raw):
            trait = piece.strip()
            if trait and trait not in seen:
                seen.append(trait)
        traits = tuple(seen)
        description = "\n".join(lines[:traits_idx] + lines[traits_idx + 1 :]).strip()
        if not traits:
            warnings.append("traits line is empty")

    profile = CharacterProfile(
        role_name=role_name,
        role_description=description,
        traits=traits,
        emotional_signature=signature,
    )
    return profile, warnings


# -- grounded Q&A generation ------------------------------------------------------

_Q_LINE_RE = re.compile(r"^\s*Q(\d+)\s*[:：]\s*(.*\S)\s*$")
_A_LINE_RE = re.compile(r"^\s*A(\d+)\s*[:：]\s*(.*\S)\s*$")


def parse_qa_pairs(text: str) -> list[tuple[str, str]]:
    """Extracts (question, answer) pairs from numbered Qn:/An: lines, matched
    by number and returned in numeric order. Unpaired lines are ignored."""
    questions: dict[int, str] = {}
    answers: dict[int, str] = {}
    for line in text.splitlines():
        q = _Q_LINE_RE.match(line)
        if q:
            questions.setdefault(int(q.group(1)), q.group(2))
            continue
        a = _A_LINE_RE.match(line)
        if a:
            answers.setdefault(int(a.group(1)), a.group(2))
    return [(questions[n], answers[n]) for n in sorted(questions) if n in answers]


def role_lexicon(profile: CharacterProfile, dialogues: Sequence[Dialogue]) -> frozenset[str]:
    """Terms marking a question as script-specific: the role's own name plus
    every speaker name appearing in the role's dialogues."""
    terms = {profile.role_name}
    for dlg in dialogues:
        for utt in dlg.utterances:
            terms.add(utt.speaker)
    return frozenset(terms)


def categorize_question(question: str, role_name: str, lexicon: frozenset[str]) -> str:
    if role_name in question or any(term in question for term in lexicon):
        return CATEGORY_SPE
    return CATEGORY_CUS


def generate_context_instruct(
    profile: CharacterProfile,
    dialogues: Sequence[Dialogue],
    gateway: Gateway,
    question_num: int = 5,
    template: Optional[PromptTemplate] = None,
    example_text: str = DEFAULT_QA_EXAMPLE,
) -> tuple[list[InstructionRecord], list[dict]]:
    """Asks for question_num grounded Q&A pairs about the role and turns the
    parseable ones into character-specific instruction records. Questions
    naming the role or another script speaker are categorized SPE, the rest
    CUS. Zero parseable pairs is a stage failure; fewer than requested is a
    warning."""
    if question_num < 1:
        raise ValidationError("question_num must be >= 1")
    tmpl = template or load_template("ContextInstruct")
    script = _script_lines(dialogues)
    if not script:
        raise StageError(f"no script content for role {profile.role_name!r}")
    system, user = tmpl.render_parts(
        question_num=question_num,
        role_name=profile.role_name,
        role_description=profile.role_description,
        script=script,
        example_text=example_text,
    )
    request = ChatRequest(
        system=system,
        messages=(("user", user),),
        temperature=GENERATION_TEMPERATURE,
        top_p=GENERATION_TOP_P,
    )
    reply = gateway.chat(request).text
    pairs = parse_qa_pairs(reply)
    if not pairs:
        raise StageError(f"no parseable Q&A pairs in reply for role {profile.role_name!r}")
    report: list[dict] = []
    if len(pairs) < question_num:
        report.append(
            {
                "kind": "warning",
                "role_name": profile.role_name,
                "reason": f"asked for {question_num} Q&A pairs, parsed {len(pairs)}",
            }
        )
    lexicon = role_lexicon(profile, dialogues)
    records = [
        InstructionRecord(
            kind=KIND_SPECIFIC,
            category=categorize_question(question, profile.role_name, lexicon),
            role_name=profile.role_name,
            instruction=question,
            response=answer,
        )
        for question, answer in pairs
    ]
    return records, report


# -- general-instruction responses -------------------------------------------------


def generate_general_responses(
    instructions: Sequence[str],
    profile: CharacterProfile,
    gateway: Gateway,
    template: Optional[PromptTemplate] = None,
    examples: Sequence[InstructionRecord] = (),
    k_examples: int = 3,
) -> tuple[list[InstructionRecord], list[dict]]:
    """Answers each general instruction in the role's voice.

    The system prompt pins the persona; up to k_examples of the role's CUS
    records precede the instruction as few-shot user/assistant turns. Output
    records are General/RAW with no role_name, matching how general items
    are pooled across roles downstream.
    """
    if not instructions:
        raise ValidationError("instructions must be non-empty")
    for i, text in enumerate(instructions):
        if not text.strip():
            raise ValidationError(f"instruction {i} is empty")
    tmpl = template or load_template("GeneralResponse")
    system, _ = tmpl.render_parts(
        role_name=profile.role_name, role_description=profile.role_description
    )
    shots = [r for r in examples if r.category == CATEGORY_CUS][:k_examples]
    report: list[dict] = []
    if len(shots) < k_examples:
        report.append(
            {
                "kind": "warning",
                "role_name": profile.role_name,
                "reason": f"only {len(shots)} few-shot example(s) available, wanted {k_examples}",
            }
        )
    prefix: tuple[tuple[str, str], ...] = ()
    for shot in shots:
        prefix += (("user", shot.instruction), ("assistant", shot.response))

    def run(instruction: str) -> tuple[Optional[InstructionRecord], Optional[dict]]:
        request = ChatRequest(
            system=system,
            messages=prefix + (("user", instruction),),
            temperature=GENERATION_TEMPERATURE,
            top_p=GENERATION_TOP_P,
        )
        try:
            reply = gateway.chat(request).text
        except TransportError as exc:
            return None, {
                "kind": "pending",
                "role_name": profile.role_name,
                "instruction": instruction,
                "reason": str(exc),
            }
        record = InstructionRecord(
            kind=KIND_GENERAL,
            category=CATEGORY_RAW,
            role_name=None,
            instruction=instruction,
            response=reply,
        )
        return record, None

    records: list[InstructionRecord] = []
    with ThreadPoolExecutor(max_workers=max(1, gateway.config.max_in_flight)) as pool:
        for record, row in pool.map(run, instructions):
            if record is not None:
                records.append(record)
            if row is not None:
                report.append(row)
    return records, report


def write_stage_report(path: Path | str, rows: Sequence[dict]) -> None:
    text = "".join(canonical_json(row) + "\n" for row in rows)
    Path(path).write_text(text, encoding="utf-8")
