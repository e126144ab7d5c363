#!/usr/bin/env python3
"""Regenerates the static test fixtures under tests/fixtures/.

The fixture *content* (texts, labels, counts) is authored here by hand; the
script only handles canonical serialization so the files stay in the exact
on-disk format the parsers expect. Golden numbers derived from these
fixtures live in tools/derive_goldens.py, which recomputes them from the
raw JSON without importing the package.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from rolekit.corpus import (  # noqa: E402
    CharacterProfile,
    Dialogue,
    InstructionRecord,
    Utterance,
    serialize_corpus,
)

FIXTURES = Path(__file__).resolve().parents[1] / "tests" / "fixtures"


def dlg(dialogue_id: str, source: str, *turns: tuple) -> Dialogue:
    utterances = []
    for i, turn in enumerate(turns):
        speaker, text = turn[0], turn[1]
        emotion = turn[2] if len(turn) > 2 else None
        utterances.append(Utterance(speaker=speaker, text=text, turn_index=i, emotion=emotion))
    return Dialogue(dialogue_id=dialogue_id, source=source, utterances=tuple(utterances))


# -- labeled clean corpus: 6 dialogues, 20 utterances, 3 roles -------------------

CLEAN = [
    dlg(
        "d01", "剧本甲",
        ("蒋飞", "太好了，我们居然把第一名掀翻了！", "Happiness"),
        ("老王", "真的假的？你们平时训练可没这么猛。", "Surprise"),
        ("蒋飞", "下一场我还要再砍二十分！", "Excitement"),
        ("老王", "行，先把作业写完再说。", "Neutral"),
    ),
    dlg(
        "d02", "剧本甲",
        ("蒋飞", "唉，这次月考又砸了。", "Frustration"),
        ("肖潇", "错题整理了吗？先从数学开始。", "Neutral"),
        ("蒋飞", "我妈看到成绩单肯定要伤心了。", "Sadness"),
        ("肖潇", "别想太多，你上次进步了十名，我替你高兴。", "Happiness"),
    ),
    dlg(
        "d03", "剧本甲",
        ("肖潇", "有人把垃圾堆在你店门口，太过分了！", "Anger"),
        ("老王", "小事，我一会儿自己收拾。", "Neutral"),
        ("肖潇", "没想到你一点都不生气。", "Surprise"),
    ),
    dlg(
        "d04", "剧本乙",
        ("蒋飞", "明天家长会，我有点不敢回家。", "Fear"),
        ("肖潇", "提前把错题讲给你妈听，主动一点。", "Neutral"),
        ("蒋飞", "有道理，你真是我的军师！", "Happiness"),
    ),
    dlg(
        "d05", "剧本乙",
        ("老王", "隔壁新开的奶茶店甜得发腻，喝一口就受不了。", "Disgust"),
        ("蒋飞", "那我们班订的一整箱岂不是完了，太刺激了哈哈。", "Excitement"),
        ("老王", "唉，这个月的进货又订错了。", "Frustration"),
    ),
    dlg(
        "d06", "剧本乙",
        ("肖潇", "今天的云看起来像一只猫。", "Other"),
        ("老王", "你们年轻人眼睛就是好。", "Neutral"),
        ("肖潇", "要是每天都这么清闲就好了。", "Happiness"),
    ),
]


def signature(role: str) -> dict[str, float]:
    counts: dict[str, int] = {}
    for d in CLEAN:
        for u in d.utterances:
            if u.speaker == role and u.emotion:
                counts[u.emotion] = counts.get(u.emotion, 0) + 1
    total = sum(counts.values())
    return {k: counts[k] / total for k in sorted(counts)}


PROFILES = [
    CharacterProfile(
        role_name="蒋飞",
        role_description=(
            "蒋飞是青云中学高二的学生，篮球队的得分主力。他嘴上爱开玩笑，"
            "输了球却会一个人加练到天黑。对朋友极讲义气，最怕别人提他期中考试的成绩。"
        ),
        traits=("幽默", "冲动", "重情义"),
        emotional_signature=signature("蒋飞"),
    ),
    CharacterProfile(
        role_name="肖潇",
        role_description=(
            "肖潇是蒋飞的同桌，做事细致，笔记永远工整。她表面冷静，"
            "遇到不公平的事情比谁都敢说话，心里一直想考去南方的大学。"
        ),
        traits=("细心", "坚强"),
        emotional_signature=signature("肖潇"),
    ),
    CharacterProfile(
        role_name="老王",
        role_description=(
            "老王在学校门口开了十二年小卖部，认识每一届学生。他记性好，"
            "嘴碎但热心，谁家孩子没带饭卡都能先赊账。"
        ),
        traits=("幽默", "固执", "热心"),
        emotional_signature=signature("老王"),
    ),
]

INSTRUCTIONS = [
    # 蒋飞: 4 records, 3 distinct instructions (s1 carries two responses)
    InstructionRecord("蒋飞，你们篮球队下一场打谁？", "打三中，他们中锋两米，我得绕着打。",
                      "CharacterSpecific", "SPE", "蒋飞"),
    InstructionRecord("蒋飞，你们篮球队下一场打谁？", "三中啊，场地还是我们主场，稳的。",
                      "CharacterSpecific", "SPE", "蒋飞"),
    InstructionRecord("月考那天你为什么迟到了？", "闹钟响了没听见，别提了。",
                      "CharacterSpecific", "CUS", "蒋飞"),
    InstructionRecord("你最好的朋友是谁？", "当然是肖潇，军师一样的人物。",
                      "CharacterSpecific", "CUS", "蒋飞"),
    # 肖潇: same instruction text as 蒋飞's second one, distinct because the role differs
    InstructionRecord("月考那天你为什么迟到了？", "我没有迟到，是你记错了。",
                      "CharacterSpecific", "CUS", "肖潇"),
    InstructionRecord("肖潇，你笔记为什么记得那么整齐？", "习惯而已，乱糟糟的看着难受。",
                      "CharacterSpecific", "SPE", "肖潇"),
    # 老王
    InstructionRecord("老王，小卖部最近进了什么新货？", "新到一批橘子汽水，学生们最爱。",
                      "CharacterSpecific", "SPE", "老王"),
    InstructionRecord("你为什么总让学生赊账？", "孩子们饿着肚子哪有力气读书。",
                      "CharacterSpecific", "CUS", "老王"),
    # general: 4 records, 3 distinct instructions
    InstructionRecord("用三句话介绍你的学校。", "青云中学不大，但操场是新修的。老师管得严，食堂的糖醋排骨很有名。",
                      "General", "RAW"),
    InstructionRecord("用三句话介绍你的学校。", "我们学校在城东。每年篮球联赛都能进四强。小卖部的老王比教导主任还出名。",
                      "General", "RAW"),
    InstructionRecord("你周末一般怎么过？", "上午补作业，下午打球，晚上被我妈押着背单词。",
                      "General", "RAW"),
    InstructionRecord("推荐一本你喜欢的书。", "《平凡的世界》，看完觉得自己那点烦恼不算什么。",
                      "General", "RAW"),
]

# -- raw corpus: pre-clean, exercises every cleaning rule ------------------------

RAW = [
    dlg("r01", "剧本甲",
        ("蒋飞", "走，放学去打球。"),
        ("老王", "先把我这瓶汽水钱结了。")),
    dlg("r02", "剧本甲",
        ("肖潇", "你的错题本借我看看。"),
        ("蒋飞", "就两页，别嫌少。")),
    dlg("r03", "剧本甲",  # three speakers: dropped
        ("蒋飞", "大家都到齐了吗？"),
        ("肖潇", "到齐了。"),
        ("老王", "我也在。")),
    dlg("r04", "剧本乙",
        ("老王", "今天的报纸看了吗？"),
        ("肖潇", "看了，头版是咱们学校。")),
    dlg("r05", "剧本乙",  # consecutive same-speaker turns: merged
        ("蒋飞", "我跟你说个事。"),
        ("蒋飞", "你千万别告诉肖潇。"),
        ("老王", "你都当着全班说过了。")),
    dlg("r06", "剧本乙",
        ("肖潇", "明天降温，记得带伞。"),
        ("蒋飞", "知道了，我妈已经念了三遍。")),
    dlg("r07", "剧本丙",  # same content as r02: dropped as duplicate
        ("肖潇", "你的错题本借我看看。"),
        ("蒋飞", "就两页，别嫌少。")),
    dlg("r08", "剧本丙",
        ("老王", "店里新到了橘子汽水。"),
        ("蒋飞", "给我留两瓶！")),
    dlg("r09", "剧本丙",  # equals r05 after its merge: dropped as duplicate
        ("蒋飞", "我跟你说个事。 你千万别告诉肖潇。"),
        ("老王", "你都当着全班说过了。")),
    dlg("r10", "剧本丙",
        ("肖潇", "值日表你看了吗？"),
        ("老王", "看了，周三轮到你们组。")),
]

# -- eval items ------------------------------------------------------------------

EVAL_ITEMS = [
    {
        "item_id": "e1", "category": "RAW",
        "instruction": "用一句话介绍你自己。",
        "reference": "我叫蒋飞，篮球和朋友就是我的全部。",
        "generations": {"ours": "我是蒋飞，最爱篮球和我的兄弟们。", "baseline": "我是一个学生。"},
        "role_name": "蒋飞", "role_description": "爱打篮球的高二学生，嘴上不饶人。",
    },
    {
        "item_id": "e2", "category": "RAW",
        "instruction": "你害怕什么？",
        "reference": "最怕我妈看到考砸的成绩单。",
        "generations": {"ours": "怕我妈翻我书包找成绩单。", "baseline": None},
        "role_name": "蒋飞", "role_description": "爱打篮球的高二学生，嘴上不饶人。",
    },
    {
        "item_id": "e3", "category": "CUS",
        "instruction": "输了比赛你会怎么办？",
        "reference": "一个人留下来加练，练到手感回来为止。",
        "generations": {"ours": "留下来加练呗，练到天黑再回家。", "baseline": "我会总结经验教训。"},
        "role_name": "蒋飞", "role_description": "爱打篮球的高二学生，嘴上不饶人。",
    },
    {
        "item_id": "e4", "category": "CUS",
        "instruction": "你的同桌是个什么样的人？",
        "reference": "肖潇啊，笔记工整得像印刷的，是我的军师。",
        "generations": {"ours": "肖潇，笔记比课本还整齐，出主意一绝。", "baseline": "我的同桌学习很好。"},
        "role_name": "蒋飞", "role_description": "爱打篮球的高二学生，嘴上不饶人。",
    },
    {
        "item_id": "e5", "category": "SPE",
        "instruction": "蒋飞，市联赛第一场你们打谁？",
        "reference": "打三中，他们中锋两米高，我得绕着打。",
        "generations": {"ours": "第一场就是三中，他们那个两米的中锋我研究过了。", "baseline": "我们会全力以赴。"},
        "role_name": "蒋飞", "role_description": "爱打篮球的高二学生，嘴上不饶人。",
    },
    {
        "item_id": "e6", "category": "SPE",
        "instruction": "蒋飞，期中考试你到底考了多少分？",
        "reference": "哪壶不开提哪壶，下次一定及格。",
        "generations": {"ours": "别提分数，提分数咱俩绝交，下次肯定及格。", "baseline": "考试成绩是隐私。"},
        "role_name": "蒋飞", "role_description": "爱打篮球的高二学生，嘴上不饶人。",
    },
]

HUMAN_CSV = """annotator_id,item_id,model_name,ce,consistency,ed
a1,i1,ours,5,4,4
a2,i1,ours,4,4,3
a3,i1,ours,5,5,4
a1,i2,ours,4,4,4
a2,i2,ours,5,4,3
a3,i2,ours,4,5,4
a1,i1,baseline,3,3,2
a2,i1,baseline,2,3,2
a3,i1,baseline,3,2,3
a1,i2,baseline,3,3,2
a2,i2,baseline,2,2,2
a3,i2,baseline,3,3,3
"""

GENERAL_INSTRUCTIONS = "你喜欢什么运动？\n介绍一下你自己。\n如果中了大奖你会做什么？\n"


def main() -> None:
    FIXTURES.mkdir(parents=True, exist_ok=True)
    (FIXTURES / "clean_corpus.jsonl").write_text(serialize_corpus(CLEAN), encoding="utf-8")
    (FIXTURES / "profiles.jsonl").write_text(serialize_corpus(PROFILES), encoding="utf-8")
    (FIXTURES / "instructions.jsonl").write_text(serialize_corpus(INSTRUCTIONS), encoding="utf-8")
    (FIXTURES / "raw_dialogues.jsonl").write_text(serialize_corpus(RAW), encoding="utf-8")

    # dirty file: five parseable dialogue lines with one corrupted line third
    clean_lines = serialize_corpus(CLEAN[:5]).splitlines()
    dirty = clean_lines[:2] + ['{"dialogue_id": "bad", "source": }'] + clean_lines[2:]
    (FIXTURES / "dirty_dialogues.jsonl").write_text("\n".join(dirty) + "\n", encoding="utf-8")

    (FIXTURES / "eval_items.jsonl").write_text(
        "".join(json.dumps(o, ensure_ascii=False, sort_keys=True, separators=(",", ":")) + "\n"
                for o in EVAL_ITEMS),
        encoding="utf-8",
    )
    (FIXTURES / "human_sheets.csv").write_text(HUMAN_CSV, encoding="utf-8")
    (FIXTURES / "general_instructions.txt").write_text(GENERAL_INSTRUCTIONS, encoding="utf-8")
    print(f"fixtures written to {FIXTURES}")


if __name__ == "__main__":
    main()
