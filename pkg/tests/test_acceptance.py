"""Acceptance checks for the whole toolkit.

Every test here guards one user-visible guarantee and prints a single
``[acceptance] <name>: PASS|FAIL`` line, so a plain pytest run doubles as
a release checklist. Expected values are frozen constants that were
derived by hand or by independent brute-force oracles implemented inside
this file — never by running the code under test first.
"""

import itertools
import json
import math
import random
import re
import time
from collections import Counter
from contextlib import contextmanager

import pytest

from rolekit.cli import main as cli_main
from rolekit.corpus import (
    EMOTION_LABELS,
    KIND_GENERAL,
    KIND_SPECIFIC,
    InstructionRecord,
    compute_stats,
)
from rolekit.engine import RoleplayEngine
from rolekit.errors import TransportError
from rolekit.evaluation import (
    EvalItem,
    average_rankings,
    judge_items,
    judge_report,
    render_judge_markdown,
    rouge_l_from_tokens,
    rpcs,
    aggregate_human,
    parse_human_sheets,
    render_human_markdown,
)
from rolekit.gateway import Gateway, GatewayConfig, MockChatProvider, mock_gateway
from rolekit.mixer import FinetuneConfig, MixConfig, export_training_set, mix, render_finetune_conf
from rolekit.pipeline import AnnotationVote, load_template, merge_consensus
from rolekit.retrieval import RetrievalChunk, RetrievalIndex, cosine_similarity

from golden_tokens import TOKENIZER_GOLDENS


@contextmanager
def checklist(name, capsys):
    """Prints one PASS/FAIL line per acceptance criterion."""
    try:
        yield
    except BaseException:
        with capsys.disabled():
            print(f"[acceptance] {name}: FAIL")
        raise
    with capsys.disabled():
        print(f"[acceptance] {name}: PASS")


# --------------------------------------------------------------------------
# 1. Overlap scoring against an independent brute-force oracle
# --------------------------------------------------------------------------


def _oracle_lcs(a, b):
    """Plain memoized recursion; independent of the two-row DP under test."""
    memo = {}

    def go(i, j):
        if i == len(a) or j == len(b):
            return 0
        key = (i, j)
        hit = memo.get(key)
        if hit is not None:
            return hit
        if a[i] == b[j]:
            val = 1 + go(i + 1, j + 1)
        else:
            val = max(go(i + 1, j), go(i, j + 1))
        memo[key] = val
        return val

    return go(0, 0)


def _oracle_rouge(ref, cand, beta=1.0):
    if not ref and not cand:
        return 1.0, 1.0, 1.0
    if not ref or not cand:
        return 0.0, 0.0, 0.0
    lcs = _oracle_lcs(ref, cand)
    precision = lcs / len(cand)
    recall = lcs / len(ref)
    if precision == 0.0 and recall == 0.0:
        return 0.0, 0.0, 0.0
    f = (1 + beta * beta) * precision * recall / (recall + beta * beta * precision)
    return precision, recall, f


def test_rouge_matches_brute_force_oracle(capsys):
    with checklist("rouge-oracle", capsys):
        start = time.monotonic()

        # Exhaustive over two regimes that stay tractable in pure Python:
        # every pair with combined length <= 6 over a 3-letter alphabet,
        # and every pair where both sides have length <= 6 over a 2-letter
        # alphabet (16,129 pairs). On top of that, 1,000 random pairs with
        # lengths up to 20 over the 3-letter alphabet.
        pairs = []
        seqs3 = {
            n: [tuple(p) for p in itertools.product("abc", repeat=n)] for n in range(7)
        }
        for la in range(7):
            for lb in range(7 - la):
                pairs.extend((a, b) for a in seqs3[la] for b in seqs3[lb])
        seqs2 = [tuple(p) for n in range(7) for p in itertools.product("xy", repeat=n)]
        pairs.extend((a, b) for a in seqs2 for b in seqs2)

        rng = random.Random(20240817)
        random_pairs = []
        for _ in range(1000):
            a = tuple(rng.choice("abc") for _ in range(rng.randrange(0, 21)))
            b = tuple(rng.choice("abc") for _ in range(rng.randrange(0, 21)))
            random_pairs.append((a, b))
        pairs.extend(random_pairs)
        assert len(pairs) == 7108 + 127 * 127 + 1000

        for a, b in pairs:
            got = rouge_l_from_tokens(a, b)
            precision, recall, f = _oracle_rouge(a, b)
            assert abs(got.precision - precision) <= 1e-12
            assert abs(got.recall - recall) <= 1e-12
            assert abs(got.f - f) <= 1e-12

        # Identical sequences score exactly 1, fully disjoint ones exactly 0.
        for a, _ in random_pairs[:200]:
            assert rouge_l_from_tokens(a, a).f == 1.0
        for n in range(1, 21):
            disjoint = rouge_l_from_tokens(("a",) * n, ("z",) * n)
            assert disjoint.f == 0.0 and disjoint.precision == 0.0 and disjoint.recall == 0.0

        assert time.monotonic() - start < 10.0


# --------------------------------------------------------------------------
# 2. Tokenizer against hand-derived goldens
# --------------------------------------------------------------------------


def test_tokenizer_matches_hand_goldens(capsys):
    from rolekit.evaluation import tokenize_for_rouge

    with checklist("tokenizer-goldens", capsys):
        assert len(TOKENIZER_GOLDENS) >= 30
        for text, expected in TOKENIZER_GOLDENS:
            assert tokenize_for_rouge(text) == expected, repr(text)


# --------------------------------------------------------------------------
# 3. Embedding similarity: identity, bounds, scale invariance
# --------------------------------------------------------------------------


def test_embedding_similarity_properties(capsys):
    with checklist("similarity-properties", capsys):
        start = time.monotonic()
        gw = mock_gateway(seed=7)
        rng = random.Random(11)
        pool = "我你他她好坏笑哭天地山水abcdefg123"
        texts = [
            f"第{i}句" + "".join(rng.choice(pool) for _ in range(rng.randrange(0, 30)))
            for i in range(100)
        ]

        for text in texts:
            assert abs(rpcs(text, text, gw) - 1.0) <= 1e-6

        for _ in range(100):
            a, b = rng.choice(texts), rng.choice(texts)
            score = rpcs(a, b, gw)
            assert -1.0 - 1e-9 <= score <= 1.0 + 1e-9

        # The score is the cosine of the two embeddings, so positively
        # scaling either vector must leave it (numerically) unchanged.
        vectors = gw.embed(texts)
        for i in range(50):
            a = vectors[i].values
            b = vectors[(i * 7 + 3) % len(vectors)].values
            base = cosine_similarity(a, b)
            for scale in (3.7, 0.004):
                assert abs(cosine_similarity([x * scale for x in a], b) - base) <= 1e-9
                assert abs(cosine_similarity(a, [y * scale for y in b]) - base) <= 1e-9

        assert time.monotonic() - start < 5.0


# --------------------------------------------------------------------------
# 4. Retrieval equals a brute-force full sort
# --------------------------------------------------------------------------


def test_retrieval_matches_full_sort(capsys):
    with checklist("retrieval-oracle", capsys):
        gw = mock_gateway(seed=5)
        rng = random.Random(23)
        pool = "他们在学校打球聊天吃饭上课回家写作业"
        texts = [
            f"片段{i}：" + "".join(rng.choice(pool) for _ in range(rng.randrange(3, 25)))
            for i in range(100)
        ]
        vectors = gw.embed(texts)
        chunks = [
            RetrievalChunk(
                chunk_id=f"script:d{i:03d}:0000",
                role_name="角色",
                text=texts[i],
                source="DialogueScript",
                vector=vectors[i],
            )
            for i in range(100)
        ]
        index = RetrievalIndex(chunks)

        for qi in range(50):
            query = f"问题{qi}" + "".join(rng.choice(pool) for _ in range(rng.randrange(1, 15)))
            qvec = gw.embed([query])[0].values
            qnorm = math.sqrt(sum(v * v for v in qvec))
            expected = []
            for c in chunks:
                norm = math.sqrt(sum(v * v for v in c.vector.values))
                dot = sum(x * y for x, y in zip(qvec, c.vector.values))
                expected.append((c.chunk_id, dot / (qnorm * norm)))
            expected.sort(key=lambda pair: (-pair[1], pair[0]))
            for k in (1, 5, 100):
                got = [(r.chunk_id, r.score) for r in index.query(query, k, gw)]
                assert got == expected[:k]  # ids and scores, bit-exact


# --------------------------------------------------------------------------
# 5. Consensus over every possible three-vote assignment
# --------------------------------------------------------------------------


def test_consensus_matches_majority_reference(capsys):
    with checklist("consensus-exhaustive", capsys):
        start = time.monotonic()
        n_cases = 0
        for combo in itertools.product(EMOTION_LABELS, repeat=3):
            votes = [
                AnnotationVote("d", 0, f"annotator-{i}", label)
                for i, label in enumerate(combo)
            ]
            results = merge_consensus(votes)
            assert len(results) == 1
            result = results[0]

            top_label, top_count = Counter(combo).most_common(1)[0]
            if top_count >= 2:  # strict majority of three
                assert result.status == "Resolved"
                assert result.label == top_label
            else:
                assert result.status == "NeedsReannotation"
                assert result.label is None
            n_cases += 1
        assert n_cases == 1000
        assert time.monotonic() - start < 1.0


# --------------------------------------------------------------------------
# 6. Mixing at full-corpus scale: counts, determinism, training config
# --------------------------------------------------------------------------


def test_mix_counts_and_byte_determinism(capsys, tmp_path):
    with checklist("mix-determinism", capsys):
        general = [
            InstructionRecord(f"通用问题{i}", "答", KIND_GENERAL, "RAW") for i in range(29580)
        ]
        specific = [
            InstructionRecord(f"角色问题{i}", "答", KIND_SPECIFIC, "SPE", role_name="角色")
            for i in range(13778)
        ]
        config = MixConfig(
            strategy="Hybrid", general_weight=29580.0, specific_weight=13778.0, seed=9
        )

        mixed = mix(general + specific, config)
        assert len(mixed) == 43358
        by_kind = Counter(r.kind for r in mixed)
        assert by_kind == Counter({KIND_GENERAL: 29580, KIND_SPECIFIC: 13778})
        assert mix(general + specific, config) == mixed  # same seed, same order

        first = export_training_set(mixed, tmp_path / "run1")
        second = export_training_set(mixed, tmp_path / "run2")
        assert first == second
        assert (tmp_path / "run1" / "train.jsonl").read_bytes() == (
            tmp_path / "run2" / "train.jsonl"
        ).read_bytes()

        conf = (tmp_path / "run1" / "finetune.conf").read_text(encoding="utf-8")
        assert conf == (
            "learning_rate=0.0002\n"
            "betas=(0.9,0.999)\n"
            "batch_size=4\n"
            "lora_rank=8\n"
            "lora_alpha=32\n"
            "top_p=0.7\n"
            "temperature=0.95\n"
        )
        assert conf == render_finetune_conf(FinetuneConfig())


# --------------------------------------------------------------------------
# 7. Corpus statistics against hand-computed goldens
# --------------------------------------------------------------------------


def test_stats_match_hand_computed_goldens(capsys, clean_corpus, profiles, instructions):
    with checklist("stats-goldens", capsys):
        stats = compute_stats(clean_corpus, profiles=profiles, instructions=instructions)

        assert stats.total_dialogues == 6
        assert stats.n_characters == 3
        assert stats.n_traits == 7
        assert stats.n_instructions == 10
        assert stats.n_specific == 7
        assert stats.n_general == 3
        assert stats.n_responses == 12

        assert abs(stats.avg_rounds - 3.3333333333333335) <= 1e-9
        assert abs(stats.avg_profile_length - 56.666666666666664) <= 1e-9
        assert abs(stats.avg_instruction_length - 11.9) <= 1e-9
        assert abs(stats.avg_response_length - 18.833333333333332) <= 1e-9


# --------------------------------------------------------------------------
# 8. Judge ranking arithmetic and alias-shuffle invariance
# --------------------------------------------------------------------------

# Rank that "ours" must receive on question i (1-based); "baseline" gets
# the other rank. Mean of [1,2,1,1,2,1,2] is 10/7, which renders as 1.43.
_OURS_RANKS = {1: 1, 2: 2, 3: 1, 4: 1, 5: 2, 6: 1, 7: 2}

_ANSWER_RE = re.compile(r'\{"model": "(model-[A-Z])", "answer": "(OURS|BASE)#(\d+)"\}')


class _ScriptedJudge:
    """Ranks by the marker hidden in each answer, whatever the alias order."""

    model_id = "scripted-judge"

    def complete(self, request, sample_key=""):
        text = request.system + "\n" + "\n".join(t for _, t in request.messages)
        found = _ANSWER_RE.findall(text)
        assert len(found) == 2, "judge prompt should present exactly two answers"
        rows = []
        for alias, marker, num in found:
            ours_rank = _OURS_RANKS[int(num)]
            rank = ours_rank if marker == "OURS" else 3 - ours_rank
            rows.append({"model": alias, "rank": rank, "score": 6 - rank, "reason": "照本宣科"})
        return json.dumps(rows, ensure_ascii=False), {}


def test_judge_ranking_arithmetic_and_alias_invariance(capsys):
    with checklist("judge-ranking", capsys):
        items = [
            EvalItem(
                f"q{i}",
                "RAW",
                f"问题{i}",
                f"参考{i}",
                {"ours": f"OURS#{i}", "baseline": f"BASE#{i}"},
            )
            for i in range(1, 8)
        ]
        template = load_template("JudgeEval")

        for seed in range(20):  # alias permutations are seeded per item
            gateway = Gateway(chat_provider=_ScriptedJudge(), config=GatewayConfig())
            verdicts, skipped = judge_items(items, template, gateway, seed=seed)
            assert skipped == []
            assert [v.ranks["ours"] for v in verdicts] == [1, 2, 1, 1, 2, 1, 2]
            assert [v.ranks["baseline"] for v in verdicts] == [2, 1, 2, 2, 1, 2, 1]

            averages = average_rankings(verdicts)
            assert averages["ours"] == 1.4285714285714286  # 10/7
            assert averages["baseline"] == 1.5714285714285714  # 11/7

            markdown = render_judge_markdown(judge_report(verdicts, skipped))
            assert "| ours | **1.43** |" in markdown
            assert "| baseline | 1.57 |" in markdown


# --------------------------------------------------------------------------
# 9. Human score aggregation against hand-computed goldens
# --------------------------------------------------------------------------


def test_human_aggregation_matches_goldens(capsys, fixtures_dir):
    with checklist("human-aggregation", capsys):
        sheets, rejections = parse_human_sheets(fixtures_dir / "human_sheets.csv")
        assert rejections == []
        assert len(sheets) == 12

        report = aggregate_human(sheets)
        ours = report["models"]["ours"]
        baseline = report["models"]["baseline"]

        # Hand-derived: ours scores sum to 27/26/22 over six sheets,
        # baseline to 16/16/14.
        assert abs(ours["CE"] - 4.5) <= 1e-9
        assert abs(ours["Consistency"] - 4.333333333333333) <= 1e-9
        assert abs(ours["ED"] - 3.6666666666666665) <= 1e-9
        assert abs(ours["Avg"] - 4.166666666666667) <= 1e-9
        assert ours["n"] == 6
        assert abs(baseline["CE"] - 2.6666666666666665) <= 1e-9
        assert abs(baseline["Consistency"] - 2.6666666666666665) <= 1e-9
        assert abs(baseline["ED"] - 2.3333333333333335) <= 1e-9
        assert abs(baseline["Avg"] - 2.5555555555555554) <= 1e-9

        markdown = render_human_markdown(report)
        assert "| Model | Avg | CE | Consistency | ED |" in markdown
        assert "| ours | **4.17** | **4.50** | **4.33** | **3.67** |" in markdown
        assert "| baseline | 2.56 | 2.67 | 2.67 | 2.33 |" in markdown


# --------------------------------------------------------------------------
# 10. The whole batch pipeline is byte-deterministic under a fixed seed
# --------------------------------------------------------------------------


def _run_pipeline(root, fixtures_dir):
    base = ["--mock", "--seed", "42", "--quiet"]
    fx = str(fixtures_dir)
    r = str(root)
    stages = [
        ["clean", "--in", f"{fx}/raw_dialogues.jsonl", "--out", f"{r}/clean.jsonl",
         "--report", f"{r}/clean_report.jsonl"],
        ["annotate", "--in", f"{r}/clean.jsonl", "--out", f"{r}/votes.jsonl",
         "--report", f"{r}/annotate_report.jsonl"],
        ["consensus", "--votes", f"{r}/votes.jsonl", "--results", f"{r}/consensus.jsonl",
         "--in", f"{r}/clean.jsonl", "--out", f"{r}/labeled.jsonl"],
        ["profile", "--in", f"{r}/labeled.jsonl", "--role", "蒋飞", "--out", f"{r}/profile.jsonl"],
        ["gen-qa", "--in", f"{r}/labeled.jsonl", "--profiles", f"{r}/profile.jsonl",
         "--role", "蒋飞", "--out", f"{r}/qa.jsonl", "--questions", "5"],
        ["gen-general", "--instructions", f"{fx}/general_instructions.txt",
         "--profiles", f"{r}/profile.jsonl", "--role", "蒋飞",
         "--out", f"{r}/general.jsonl", "--examples", f"{r}/qa.jsonl"],
        ["mix", "--general", f"{r}/general.jsonl", "--specific", f"{r}/qa.jsonl",
         "--out", f"{r}/mixed.jsonl"],
        ["export", "--in", f"{r}/mixed.jsonl", "--out-dir", f"{r}/train"],
        ["index", "--in", f"{r}/labeled.jsonl", "--profiles", f"{r}/profile.jsonl",
         "--role", "蒋飞", "--out-dir", f"{r}/index"],
        ["eval", "rouge", "--items", f"{fx}/eval_items.jsonl", "--out-dir", f"{r}/eval_rouge"],
        ["eval", "rpcs", "--items", f"{fx}/eval_items.jsonl", "--out-dir", f"{r}/eval_rpcs"],
        ["eval", "judge", "--items", f"{fx}/eval_items.jsonl", "--out-dir", f"{r}/eval_judge"],
        ["eval", "human", "--sheets", f"{fx}/human_sheets.csv", "--out-dir", f"{r}/eval_human"],
    ]
    for argv in stages:
        code = cli_main(argv + base)
        assert code == 0, f"stage failed: {argv[0]} {argv[1] if len(argv) > 1 else ''}"
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


def test_pipeline_runs_are_byte_identical(capsys, tmp_path, fixtures_dir):
    with checklist("pipeline-determinism", capsys):
        start = time.monotonic()
        run1 = tmp_path / "run1"
        run2 = tmp_path / "run2"
        run1.mkdir()
        run2.mkdir()

        first = _run_pipeline(run1, fixtures_dir)
        second = _run_pipeline(run2, fixtures_dir)

        assert sorted(first) == sorted(second)
        assert len(first) >= 18  # every stage left its artifacts
        for name in first:
            assert first[name] == second[name], f"artifact differs between runs: {name}"
        assert time.monotonic() - start < 60.0


# --------------------------------------------------------------------------
# 11. A failed completion never mutates session history
# --------------------------------------------------------------------------


class _FailAtCall:
    model_id = "mock-chat"

    def __init__(self, inner, fail_call):
        self.inner = inner
        self.fail_call = fail_call
        self.calls = 0

    def complete(self, request, sample_key=""):
        self.calls += 1
        if self.calls == self.fail_call:
            raise TransportError("injected failure")
        return self.inner.complete(request, sample_key)


def _history_bytes(session):
    return json.dumps(session.history, ensure_ascii=False).encode("utf-8")


def test_failed_turns_never_mutate_history(capsys, profiles):
    with checklist("turn-atomicity", capsys):
        profile_map = {p.role_name: p for p in profiles}
        turns = [f"第{i}个问题，讲讲你的看法。" for i in range(10)]

        # Reference: the history after each turn of a failure-free run.
        reference = RoleplayEngine(
            gateway=Gateway(chat_provider=MockChatProvider(seed=3), config=GatewayConfig()),
            profiles=profile_map,
        )
        ref_session = reference.create_session("蒋飞")
        ref_states = [_history_bytes(ref_session)]
        for text in turns:
            reference.take_turn(ref_session.session_id, text)
            ref_states.append(_history_bytes(ref_session))

        for fail_at in range(10):
            provider = _FailAtCall(MockChatProvider(seed=3), fail_call=fail_at + 1)
            engine = RoleplayEngine(
                gateway=Gateway(chat_provider=provider, config=GatewayConfig()),
                profiles=profile_map,
            )
            session = engine.create_session("蒋飞")
            for i in range(fail_at):
                engine.take_turn(session.session_id, turns[i])

            before = _history_bytes(session)
            assert before == ref_states[fail_at]
            with pytest.raises(TransportError, match="injected failure"):
                engine.take_turn(session.session_id, turns[fail_at])
            assert _history_bytes(session) == before

            # The session stays usable: retrying the same turn succeeds and
            # lands exactly on the failure-free trajectory.
            engine.take_turn(session.session_id, turns[fail_at])
            assert _history_bytes(session) == ref_states[fail_at + 1]
