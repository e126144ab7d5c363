#!/usr/bin/env python3
"""Independent derivation of the golden numbers frozen in the tests.

Deliberately imports nothing from the package: statistics come straight
from the fixture JSON with plain arithmetic, so a bug in the library cannot
leak into its own expected values. Run it after editing fixtures and update
the frozen constants if the output changes.
"""

from __future__ import annotations

import json
from fractions import Fraction
from pathlib import Path

FIXTURES = Path(__file__).resolve().parents[1] / "tests" / "fixtures"


def load_jsonl(name: str) -> list[dict]:
    rows = []
    for line in (FIXTURES / name).read_text(encoding="utf-8").splitlines():
        if line.strip():
            rows.append(json.loads(line))
    return rows


def corpus_stats() -> None:
    dialogues = load_jsonl("clean_corpus.jsonl")
    profiles = load_jsonl("profiles.jsonl")
    instructions = load_jsonl("instructions.jsonl")

    n_utt = sum(len(d["utterances"]) for d in dialogues)
    print(f"dialogues={len(dialogues)} utterances={n_utt} avg_rounds={n_utt / len(dialogues)!r}")

    traits = {t for p in profiles for t in p["traits"]}
    plens = [len(p["role_description"].strip()) for p in profiles]
    print(f"characters={len(profiles)} traits={len(traits)} "
          f"profile_lens={plens} avg={sum(plens) / len(plens)!r}")

    distinct: dict[tuple, str] = {}
    for rec in instructions:
        key = (rec["kind"], rec.get("role_name") or "", rec["instruction"])
        distinct.setdefault(key, rec["instruction"])
    n_spec = sum(1 for k in distinct if k[0] == "CharacterSpecific")
    n_gen = sum(1 for k in distinct if k[0] == "General")
    ilens = [len(t.strip()) for t in distinct.values()]
    rlens = [len(r["response"].strip()) for r in instructions]
    print(f"instructions={len(distinct)} specific={n_spec} general={n_gen}")
    print(f"instr_lens={sorted(ilens)} avg={sum(ilens) / len(ilens)!r}")
    print(f"responses={len(instructions)} avg_resp_len={sum(rlens) / len(rlens)!r}")


def human_aggregation() -> None:
    rows = [line.split(",") for line in
            (FIXTURES / "human_sheets.csv").read_text().strip().splitlines()[1:]]
    by_model: dict[str, list[list[int]]] = {}
    for _a, _i, model, ce, cons, ed in rows:
        by_model.setdefault(model, []).append([int(ce), int(cons), int(ed)])
    for model in sorted(by_model):
        cols = list(zip(*by_model[model]))
        means = [Fraction(sum(c), len(c)) for c in cols]
        avg = sum(means, Fraction(0)) / 3
        stds = []
        for col, mean in zip(cols, means):
            var = sum((Fraction(v) - mean) ** 2 for v in col) / len(col)
            stds.append(float(var) ** 0.5)
        print(f"{model}: CE={float(means[0])!r} Consistency={float(means[1])!r} "
              f"ED={float(means[2])!r} Avg={float(avg)!r} ({avg}) stds={stds}")


def judge_example() -> None:
    ranks = [1, 2, 1, 1, 2, 1, 2]
    mean = Fraction(sum(ranks), len(ranks))
    print(f"ranks={ranks} mean={float(mean)!r} ({mean}) rendered={float(mean):.2f}")


def mix_counts() -> None:
    for n_g, n_s, wg, ws in [(100, 40, 1, 1), (29580, 13778, 29580, 13778), (10, 10, 2, 1)]:
        if n_g * ws <= n_s * wg:
            take_g, take_s = n_g, round(n_g * ws / wg)
        else:
            take_s, take_g = n_s, round(n_s * wg / ws)
        print(f"pools g={n_g} s={n_s} weights {wg}:{ws} -> take g={take_g} s={take_s}")


if __name__ == "__main__":
    print("== corpus stats ==")
    corpus_stats()
    print("== human aggregation ==")
    human_aggregation()
    print("== judge mean rank ==")
    judge_example()
    print("== mix counts ==")
    mix_counts()
