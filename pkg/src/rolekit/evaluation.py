"""Scoring: Rouge-L over mixed-script text, embedding similarity, judge
rankings, and human score aggregation, plus report rendering.

All aggregation here is plain arithmetic over explicit inputs, so every
number in a report can be recomputed by hand from the item files.
"""

from __future__ import annotations

import csv
import json
import math
import random
import re
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .corpus import (
    CATEGORY_CUS,
    CATEGORY_RAW,
    CATEGORY_SPE,
    Rejection,
    canonical_json,
)
from .errors import ContentError, ValidationError
from .gateway import ChatRequest, Gateway
from .pipeline import PromptTemplate
from .retrieval import cosine_similarity
from .sampling import fisher_yates_shuffle

CATEGORIES = (CATEGORY_RAW, CATEGORY_CUS, CATEGORY_SPE)

# Code-point ranges tokenized one character at a time. Everything else is
# split into maximal alphanumeric runs (lowercased) on other delimiters.
_CJK_RANGES = (
    (0x3040, 0x30FF),    # hiragana, katakana
    (0x3400, 0x4DBF),    # ideograph extension A
    (0x4E00, 0x9FFF),    # unified ideographs
    (0xAC00, 0xD7AF),    # hangul syllables
    (0xF900, 0xFAFF),    # compatibility ideographs
    (0x20000, 0x2FA1F),  # ideograph extensions B and beyond
)


def _is_cjk(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _CJK_RANGES)


def tokenize_for_rouge(text: str) -> list[str]:
    """CJK characters become one token each; other letter/digit runs become
    one lowercased token; everything else only separates tokens."""
    tokens: list[str] = []
    run: list[str] = []
    for ch in text:
        if _is_cjk(ch):
            if run:
                tokens.append("".join(run).lower())
                run = []
            tokens.append(ch)
        elif ch.isalnum():
            run.append(ch)
        else:
            if run:
                tokens.append("".join(run).lower())
                run = []
    if run:
        tokens.append("".join(run).lower())
    return tokens


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Longest common subsequence length, iterative two-row DP."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                cur.append(prev[j - 1] + 1)
            else:
                cur.append(max(prev[j], cur[j - 1]))
        prev = cur
    return prev[len(b)]


@dataclass(frozen=True)
class RougeLScore:
    precision: float
    recall: float
    f: float
    both_empty: bool = False


def rouge_l_from_tokens(
    reference: Sequence[str], candidate: Sequence[str], beta: float = 1.0
) -> RougeLScore:
    if beta <= 0:
        raise ValidationError("beta must be positive")
    if not reference and not candidate:
        return RougeLScore(1.0, 1.0, 1.0, both_empty=True)
    if not reference or not candidate:
        return RougeLScore(0.0, 0.0, 0.0)
    lcs = lcs_length(reference, candidate)
    precision = lcs / len(candidate)
    recall = lcs / len(reference)
    if precision + recall == 0.0:
        return RougeLScore(0.0, 0.0, 0.0)
    b2 = beta * beta
    f = (1 + b2) * precision * recall / (recall + b2 * precision)
    return RougeLScore(precision, recall, f)


def rouge_l(reference: str, candidate: str, beta: float = 1.0) -> RougeLScore:
    return rouge_l_from_tokens(tokenize_for_rouge(reference), tokenize_for_rouge(candidate), beta)


@dataclass(frozen=True)
class EvalItem:
    """One scored prompt: a reference answer plus per-model generations.

    `generations` maps model name to its answer; None marks a model that
    produced nothing for this item.
    """

    item_id: str
    category: str
    instruction: str
    reference: str
    generations: Mapping[str, Optional[str]]
    role_name: Optional[str] = None
    role_description: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.item_id:
            raise ValidationError("item_id must be non-empty")
        if self.category not in CATEGORIES:
            raise ValidationError(f"unknown category: {self.category!r}")
        if not self.instruction.strip():
            raise ValidationError(f"item {self.item_id}: instruction must be non-empty")
        if not self.reference.strip():
            raise ValidationError(f"item {self.item_id}: reference must be non-empty")
        for name, text in self.generations.items():
            if not name:
                raise ValidationError(f"item {self.item_id}: empty model name")
            if text is not None and not isinstance(text, str):
                raise ValidationError(f"item {self.item_id}: generation for {name!r} must be str or null")


def eval_item_from_obj(obj: dict) -> EvalItem:
    required = {"item_id", "category", "instruction", "reference", "generations"}
    allowed = required | {"role_name", "role_description"}
    missing = required - obj.keys()
    if missing:
        raise ValidationError(f"missing keys: {sorted(missing)}")
    unknown = obj.keys() - allowed
    if unknown:
        raise ValidationError(f"unknown keys: {sorted(unknown)}")
    if not isinstance(obj["generations"], dict):
        raise ValidationError("generations must be an object")
    return EvalItem(
        item_id=obj["item_id"],
        category=obj["category"],
        instruction=obj["instruction"],
        reference=obj["reference"],
        generations=dict(obj["generations"]),
        role_name=obj.get("role_name"),
        role_description=obj.get("role_description"),
    )


def parse_eval_items(path: Path | str) -> tuple[list[EvalItem], list[Rejection]]:
    items: list[EvalItem] = []
    rejections: list[Rejection] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                rejections.append(Rejection(line_no, "blank line"))
                continue
            try:
                obj = json.loads(stripped)
            except json.JSONDecodeError as exc:
                rejections.append(Rejection(line_no, f"invalid JSON: {exc.msg}"))
                continue
            try:
                item = eval_item_from_obj(obj)
            except ValidationError as exc:
                rejections.append(Rejection(line_no, str(exc)))
                continue
            if item.item_id in seen:
                rejections.append(Rejection(line_no, f"duplicate item_id: {item.item_id!r}"))
                continue
            seen.add(item.item_id)
            items.append(item)
    return items, rejections


def model_roster(items: Sequence[EvalItem]) -> list[str]:
    names: set[str] = set()
    for item in items:
        names.update(item.generations.keys())
    return sorted(names)


# -- Rouge-L report ------------------------------------------------------------


def rouge_report(items: Sequence[EvalItem], beta: float = 1.0) -> dict:
    """Per-model mean Rouge-L F by category plus the unweighted mean of the
    category means. Missing generations score zero and are tallied."""
    if not items:
        raise ValidationError("no evaluation items")
    models = model_roster(items)
    if not models:
        raise ValidationError("items name no models")
    by_cat: dict[str, list[EvalItem]] = {c: [] for c in CATEGORIES}
    for item in items:
        by_cat[item.category].append(item)
    empty_categories = [c for c in CATEGORIES if not by_cat[c]]

    table: dict[str, dict] = {}
    for model in models:
        cells: dict[str, Optional[float]] = {}
        missing = 0
        for cat in CATEGORIES:
            bucket = by_cat[cat]
            if not bucket:
                cells[cat] = None
                continue
            scores = []
            for item in bucket:
                text = item.generations.get(model)
                if text is None or not text.strip():
                    missing += 1
                    scores.append(0.0)
                else:
                    scores.append(rouge_l(item.reference, text, beta).f)
            cells[cat] = sum(scores) / len(scores)
        present = [cells[c] for c in CATEGORIES if cells[c] is not None]
        avg = sum(present) / len(present) if present else None
        table[model] = {**cells, "Avg": avg, "missing": missing}
    return {
        "metric": "rouge-l",
        "beta": beta,
        "n_items": len(items),
        "models": table,
        "empty_categories": empty_categories,
    }


# -- Embedding similarity ------------------------------------------------------


def rpcs(reference: str, candidate: str, gateway: Gateway) -> float:
    """Cosine similarity between the embeddings of reference and candidate."""
    ref_vec, cand_vec = gateway.embed([reference, candidate])
    return cosine_similarity(ref_vec.values, cand_vec.values)


def rpcs_report(items: Sequence[EvalItem], gateway: Gateway) -> dict:
    """Mean embedding cosine per model. Items a model did not answer are
    excluded from its mean and counted as missing."""
    if not items:
        raise ValidationError("no evaluation items")
    models = model_roster(items)

    texts: list[str] = []
    for item in items:
        texts.append(item.reference)
        for model in models:
            text = item.generations.get(model)
            if text is not None and text.strip():
                texts.append(text)
    vectors = dict(zip(texts, gateway.embed(texts)))

    table: dict[str, dict] = {}
    for model in models:
        scores: list[float] = []
        missing = 0
        for item in items:
            text = item.generations.get(model)
            if text is None or not text.strip():
                missing += 1
                continue
            scores.append(cosine_similarity(vectors[item.reference].values, vectors[text].values))
        table[model] = {
            "rpcs": sum(scores) / len(scores) if scores else None,
            "n": len(scores),
            "missing": missing,
        }
    return {"metric": "rpcs", "n_items": len(items), "models": table}


# -- LLM judge -----------------------------------------------------------------

_ALIAS_LETTERS = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"


@dataclass(frozen=True)
class JudgeVerdict:
    item_id: str
    ranks: Mapping[str, int]           # model name -> 1-based rank, a permutation
    scores: Mapping[str, int]          # model name -> 1..5
    reasons: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        n = len(self.ranks)
        if n < 2:
            raise ValidationError(f"verdict {self.item_id}: needs at least two models")
        if sorted(self.ranks.values()) != list(range(1, n + 1)):
            raise ValidationError(f"verdict {self.item_id}: ranks must be a permutation of 1..{n}")
        for model, score in self.scores.items():
            if not isinstance(score, int) or isinstance(score, bool) or not 1 <= score <= 5:
                raise ValidationError(f"verdict {self.item_id}: score for {model!r} outside 1..5")


def _extract_json_array(text: str) -> list:
    start = text.find("[")
    if start < 0:
        raise ContentError("no JSON array in judge reply")
    depth = 0
    in_string = False
    escape = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_string:
            if escape:
                escape = False
            elif ch == "\\":
                escape = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
            if depth == 0:
                return json.loads(text[start : i + 1])
    raise ContentError("unterminated JSON array in judge reply")


def parse_judge_reply(text: str, aliases: Sequence[str]) -> tuple[dict[str, int], dict[str, int], dict[str, str]]:
    """Reads the ranking array out of a judge reply.

    Enforces: every alias present exactly once, ranks form a permutation
    (ties rejected), scores integers in 1..5 when given.
    """
    entries = _extract_json_array(text)
    if not isinstance(entries, list):
        raise ContentError("judge reply is not a JSON array")
    ranks: dict[str, int] = {}
    scores: dict[str, int] = {}
    reasons: dict[str, str] = {}
    for entry in entries:
        if not isinstance(entry, dict):
            raise ContentError("judge entry is not an object")
        alias = entry.get("model")
        rank = entry.get("rank")
        if alias not in aliases:
            raise ContentError(f"unknown model alias: {alias!r}")
        if alias in ranks:
            raise ContentError(f"duplicate entry for alias {alias!r}")
        if not isinstance(rank, int) or isinstance(rank, bool):
            raise ContentError(f"rank for {alias!r} is not an integer")
        ranks[alias] = rank
        if "score" in entry:
            score = entry["score"]
            if not isinstance(score, int) or isinstance(score, bool) or not 1 <= score <= 5:
                raise ContentError(f"score for {alias!r} outside 1..5")
            scores[alias] = score
        if isinstance(entry.get("reason"), str):
            reasons[alias] = entry["reason"]
    if set(ranks) != set(aliases):
        raise ContentError("judge reply does not cover every alias exactly once")
    if sorted(ranks.values()) != list(range(1, len(aliases) + 1)):
        raise ContentError("ranks are tied or not a permutation")
    return ranks, scores, reasons


def judge_items(
    items: Sequence[EvalItem],
    template: PromptTemplate,
    gateway: Gateway,
    seed: int = 0,
) -> tuple[list[JudgeVerdict], list[dict]]:
    """Asks the judge model to rank every model's answer per item.

    Models are presented under shuffled neutral aliases (model-A, model-B,
    ...) so the judge never sees real system names; the alias assignment is
    seeded per item. A reply with tied or incomplete ranks is retried once,
    then the item is skipped with a reason.
    """
    verdicts: list[JudgeVerdict] = []
    skipped: list[dict] = []
    models = model_roster(items)
    if len(models) < 2:
        raise ValidationError("judging needs at least two models")
    if len(models) > len(_ALIAS_LETTERS):
        raise ValidationError("too many models to alias")
    for item in items:
        answers = {}
        for model in models:
            text = item.generations.get(model)
            if text is None or not text.strip():
                break
            answers[model] = text
        if len(answers) != len(models):
            skipped.append({"item_id": item.item_id, "reason": "missing generation"})
            continue

        order = list(models)
        fisher_yates_shuffle(order, random.Random(f"{seed}\x1f{item.item_id}"))
        aliases = [f"model-{_ALIAS_LETTERS[i]}" for i in range(len(order))]
        alias_to_model = dict(zip(aliases, order))
        payload = json.dumps(
            [{"model": alias, "answer": answers[alias_to_model[alias]]} for alias in aliases],
            ensure_ascii=False,
        )
        system, user = template.render_parts(
            role_name=item.role_name or "the character",
            role_description=item.role_description or "(no description provided)",
            question=item.instruction,
            list_model_answer_dict=payload,
        )
        request = ChatRequest(system=system, messages=(("user", user),), temperature=0.0, top_p=1.0)

        parsed = None
        failure = ""
        for attempt, sample_key in enumerate(("", "retry")):
            reply = gateway.chat(request, sample_key=sample_key).text
            try:
                parsed = parse_judge_reply(reply, aliases)
                break
            except ContentError as exc:
                failure = str(exc)
        if parsed is None:
            skipped.append({"item_id": item.item_id, "reason": f"unparseable verdict: {failure}"})
            continue
        alias_ranks, alias_scores, alias_reasons = parsed
        verdicts.append(
            JudgeVerdict(
                item_id=item.item_id,
                ranks={alias_to_model[a]: r for a, r in alias_ranks.items()},
                scores={alias_to_model[a]: s for a, s in alias_scores.items()},
                reasons={alias_to_model[a]: t for a, t in alias_reasons.items()},
            )
        )
    return verdicts, skipped


def average_rankings(verdicts: Sequence[JudgeVerdict]) -> dict[str, float]:
    """Unweighted mean of each model's 1-based ranks across verdicts."""
    if not verdicts:
        raise ValidationError("no verdicts to average")
    totals: dict[str, list[int]] = {}
    for verdict in verdicts:
        for model, rank in verdict.ranks.items():
            totals.setdefault(model, []).append(rank)
    return {model: sum(ranks) / len(ranks) for model, ranks in sorted(totals.items())}


def judge_report(verdicts: Sequence[JudgeVerdict], skipped: Sequence[dict]) -> dict:
    averages = average_rankings(verdicts) if verdicts else {}
    return {
        "metric": "judge-ranking",
        "n_items": len(verdicts),
        "models": {m: {"avg_rank": avg, "n": len(verdicts)} for m, avg in averages.items()},
        "skipped": list(skipped),
        "verdicts": [
            {
                "item_id": v.item_id,
                "ranks": dict(sorted(v.ranks.items())),
                "scores": dict(sorted(v.scores.items())),
            }
            for v in verdicts
        ],
    }


# -- Human scores --------------------------------------------------------------

HUMAN_METRICS = ("CE", "Consistency", "ED")
_HUMAN_COLUMNS = ("annotator_id", "item_id", "model_name", "ce", "consistency", "ed")


@dataclass(frozen=True)
class HumanScoreSheet:
    annotator_id: str
    item_id: str
    model_name: str
    ce: int
    consistency: int
    ed: int

    def __post_init__(self) -> None:
        for name in ("annotator_id", "item_id", "model_name"):
            if not getattr(self, name):
                raise ValidationError(f"{name} must be non-empty")
        for name in ("ce", "consistency", "ed"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or not 1 <= value <= 5:
                raise ValidationError(f"{name} must be an integer in 1..5, got {value!r}")


def parse_human_sheets(path: Path | str) -> tuple[list[HumanScoreSheet], list[Rejection]]:
    sheets: list[HumanScoreSheet] = []
    rejections: list[Rejection] = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != _HUMAN_COLUMNS:
            raise ValidationError(
                f"expected CSV header {','.join(_HUMAN_COLUMNS)}, got {reader.fieldnames}"
            )
        for row_no, row in enumerate(reader, start=2):
            try:
                sheets.append(
                    HumanScoreSheet(
                        annotator_id=(row["annotator_id"] or "").strip(),
                        item_id=(row["item_id"] or "").strip(),
                        model_name=(row["model_name"] or "").strip(),
                        ce=int(row["ce"]),
                        consistency=int(row["consistency"]),
                        ed=int(row["ed"]),
                    )
                )
            except (ValidationError, ValueError, TypeError, KeyError) as exc:
                rejections.append(Rejection(row_no, str(exc)))
    return sheets, rejections


def aggregate_human(sheets: Sequence[HumanScoreSheet]) -> dict:
    """Per-model means for CE / Consistency / ED, their unweighted mean as
    Avg, and population standard deviations per metric."""
    if not sheets:
        raise ValidationError("no human score sheets")
    by_model: dict[str, list[HumanScoreSheet]] = {}
    for sheet in sheets:
        by_model.setdefault(sheet.model_name, []).append(sheet)
    table: dict[str, dict] = {}
    for model in sorted(by_model):
        rows = by_model[model]
        columns = {
            "CE": [s.ce for s in rows],
            "Consistency": [s.consistency for s in rows],
            "ED": [s.ed for s in rows],
        }
        means = {metric: sum(vals) / len(vals) for metric, vals in columns.items()}
        stds = {metric: statistics.pstdev(vals) for metric, vals in columns.items()}
        table[model] = {
            **means,
            "Avg": sum(means.values()) / len(means),
            "std": stds,
            "n": len(rows),
        }
    return {"metric": "human", "n_sheets": len(sheets), "models": table}


# -- report rendering ----------------------------------------------------------


def _fmt(value: Optional[float], places: int) -> str:
    return "n/a" if value is None else f"{value:.{places}f}"


def _markdown_table(headers: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    out = ["| " + " | ".join(headers) + " |", "|" + "|".join(" --- " for _ in headers) + "|"]
    out.extend("| " + " | ".join(row) + " |" for row in rows)
    return "\n".join(out) + "\n"


def _bold_best(
    rows: list[list[str]],
    raw: list[list[Optional[float]]],
    minimize: bool = False,
) -> None:
    """Bolds the best value per numeric column, in place."""
    if not raw:
        return
    n_cols = len(raw[0])
    for col in range(n_cols):
        values = [r[col] for r in raw if r[col] is not None]
        if not values:
            continue
        best = min(values) if minimize else max(values)
        for i, r in enumerate(raw):
            if r[col] is not None and r[col] == best:
                rows[i][col + 1] = f"**{rows[i][col + 1]}**"


def render_rouge_markdown(report: dict) -> str:
    headers = ["Model", "Avg", "RAW", "CUS", "SPE"]
    models = sorted(report["models"])
    raw: list[list[Optional[float]]] = []
    rows: list[list[str]] = []
    for model in models:
        cell = report["models"][model]
        vals = [cell["Avg"], cell[CATEGORY_RAW], cell[CATEGORY_CUS], cell[CATEGORY_SPE]]
        raw.append(vals)
        rows.append([model] + [_fmt(v, 4) for v in vals])
    _bold_best(rows, raw)
    preface = "# Rouge-L\n\n"
    if report.get("empty_categories"):
        preface += f"Categories with no items: {', '.join(report['empty_categories'])}\n\n"
    return preface + _markdown_table(headers, rows)


def render_rpcs_markdown(report: dict) -> str:
    headers = ["Model", "RPCS", "missing"]
    models = sorted(report["models"])
    raw = [[report["models"][m]["rpcs"]] for m in models]
    rows = [
        [m, _fmt(report["models"][m]["rpcs"], 4), str(report["models"][m]["missing"])]
        for m in models
    ]
    _bold_best(rows, raw)
    return "# Role-play character similarity\n\n" + _markdown_table(headers, rows)


def render_judge_markdown(report: dict) -> str:
    headers = ["Model", "Avg. Ranking"]
    models = sorted(report["models"])
    raw = [[report["models"][m]["avg_rank"]] for m in models]
    rows = [[m, _fmt(report["models"][m]["avg_rank"], 2)] for m in models]
    _bold_best(rows, raw, minimize=True)
    body = "# Judge rankings\n\n" + _markdown_table(headers, rows)
    if report.get("skipped"):
        body += "\nSkipped items: " + ", ".join(
            f"{s['item_id']} ({s['reason']})" for s in report["skipped"]
        ) + "\n"
    return body


def render_human_markdown(report: dict) -> str:
    headers = ["Model", "Avg", "CE", "Consistency", "ED"]
    models = sorted(report["models"])
    raw: list[list[Optional[float]]] = []
    rows: list[list[str]] = []
    for model in models:
        cell = report["models"][model]
        vals = [cell["Avg"], cell["CE"], cell["Consistency"], cell["ED"]]
        raw.append(vals)
        rows.append([model] + [_fmt(v, 2) for v in vals])
    _bold_best(rows, raw)
    return "# Human evaluation\n\n" + _markdown_table(headers, rows)


def write_reports(out_dir: Path | str, report: dict, markdown: str) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(
        json.dumps(report, ensure_ascii=False, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    (out / "report.md").write_text(markdown, encoding="utf-8")


def eval_items_to_jsonl(items: Sequence[EvalItem]) -> str:
    lines = []
    for item in items:
        obj = {
            "item_id": item.item_id,
            "category": item.category,
            "instruction": item.instruction,
            "reference": item.reference,
            "generations": dict(item.generations),
        }
        if item.role_name is not None:
            obj["role_name"] = item.role_name
        if item.role_description is not None:
            obj["role_description"] = item.role_description
        lines.append(canonical_json(obj))
    return "".join(l + "\n" for l in lines)
