"""Training-set composition and export.

Mixing draws from the general and character-specific instruction pools at a
requested weight ratio. The ratio is honored by downsampling the
over-represented pool only; records are never duplicated to stretch a pool.
All randomness flows through one seeded generator in a fixed order (general
sample, then specific sample, then the optional shuffle), so a (records,
config) pair fully determines the output byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .corpus import (
    KIND_GENERAL,
    KIND_SPECIFIC,
    InstructionRecord,
    canonical_json,
    record_to_line,
)
from .errors import ConfigError
from .sampling import fisher_yates_shuffle, sample_without_replacement

STRATEGY_HYBRID = "Hybrid"
STRATEGY_GENERAL_ONLY = "GeneralOnly"
STRATEGY_SPECIFIC_ONLY = "SpecificOnly"
STRATEGIES = (STRATEGY_HYBRID, STRATEGY_GENERAL_ONLY, STRATEGY_SPECIFIC_ONLY)


@dataclass(frozen=True)
class MixConfig:
    strategy: str = STRATEGY_HYBRID
    general_weight: float = 1.0
    specific_weight: float = 1.0
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy: {self.strategy!r} (known: {', '.join(STRATEGIES)})")
        if self.general_weight < 0 or self.specific_weight < 0:
            raise ConfigError("weights must be non-negative")
        if self.strategy == STRATEGY_HYBRID and (
            self.general_weight == 0 or self.specific_weight == 0
        ):
            raise ConfigError("hybrid mixing needs two positive weights")


@dataclass(frozen=True)
class FinetuneConfig:
    learning_rate: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    batch_size: int = 4
    lora_rank: int = 8
    lora_alpha: int = 32
    top_p: float = 0.7
    temperature: float = 0.95

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ConfigError("betas must lie in (0, 1)")
        if self.batch_size < 1 or self.lora_rank < 1 or self.lora_alpha < 1:
            raise ConfigError("batch_size, lora_rank and lora_alpha must be >= 1")
        if not (0 < self.top_p <= 1):
            raise ConfigError("top_p must lie in (0, 1]")
        if self.temperature < 0:
            raise ConfigError("temperature must be non-negative")


def _split_pools(
    records: Sequence[InstructionRecord],
) -> tuple[list[InstructionRecord], list[InstructionRecord]]:
    general = [r for r in records if r.kind == KIND_GENERAL]
    specific = [r for r in records if r.kind == KIND_SPECIFIC]
    return general, specific


def _round_half_up(x: float) -> int:
    return int(x + 0.5)


def mix(records: Sequence[InstructionRecord], config: MixConfig) -> list[InstructionRecord]:
    """Composes a training set from the instruction pools.

    Hybrid keeps the smaller pool (relative to its weight) whole and
    downsamples the other to the weighted ratio. GeneralOnly/SpecificOnly
    pass one pool through. A required empty pool is a ConfigError.
    """
    general, specific = _split_pools(records)
    rng = random.Random(config.seed)

    if config.strategy == STRATEGY_GENERAL_ONLY:
        if not general:
            raise ConfigError("GeneralOnly mix requested but the general pool is empty")
        chosen = list(general)
    elif config.strategy == STRATEGY_SPECIFIC_ONLY:
        if not specific:
            raise ConfigError("SpecificOnly mix requested but the specific pool is empty")
        chosen = list(specific)
    else:
        if not general or not specific:
            raise ConfigError("hybrid mix requires both pools to be non-empty")
        wg, ws = config.general_weight, config.specific_weight
        # The pool that runs out first (scaled by its weight) binds; it is
        # kept whole and the other pool is cut to match the ratio.
        if len(general) * ws <= len(specific) * wg:
            n_general = len(general)
            n_specific = _round_half_up(len(general) * ws / wg)
        else:
            n_specific = len(specific)
            n_general = _round_half_up(len(specific) * wg / ws)
        if n_general > len(general) or n_specific > len(specific):
            raise ConfigError(
                f"mix would need {n_general} general / {n_specific} specific records "
                f"but pools hold {len(general)} / {len(specific)}; sampling is without replacement"
            )
        chosen = sample_without_replacement(general, n_general, rng)
        chosen += sample_without_replacement(specific, n_specific, rng)

    if config.shuffle:
        fisher_yates_shuffle(chosen, rng)
    return chosen


_CONF_FIELDS = (
    ("learning_rate", lambda c: repr(c.learning_rate)),
    ("betas", lambda c: f"({c.beta1!r},{c.beta2!r})"),
    ("batch_size", lambda c: str(c.batch_size)),
    ("lora_rank", lambda c: str(c.lora_rank)),
    ("lora_alpha", lambda c: str(c.lora_alpha)),
    ("top_p", lambda c: repr(c.top_p)),
    ("temperature", lambda c: repr(c.temperature)),
)


def render_finetune_conf(config: FinetuneConfig) -> str:
    return "".join(f"{name}={fmt(config)}\n" for name, fmt in _CONF_FIELDS)


def export_training_set(
    records: Sequence[InstructionRecord],
    out_dir: Path | str,
    finetune: FinetuneConfig = FinetuneConfig(),
) -> dict:
    """Writes train.jsonl, finetune.conf and manifest.json into out_dir.

    train.jsonl rows carry instruction/input/output with input always empty.
    The manifest records counts by kind and category plus the SHA-256 of
    train.jsonl, which is what the byte-determinism checks compare. Files
    are staged under temporary names and moved into place together, so a
    failed export leaves no partial files behind.
    """
    if not records:
        raise ConfigError("refusing to export an empty training set")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    train_text = "".join(
        canonical_json({"instruction": r.instruction, "input": "", "output": r.response}) + "\n"
        for r in records
    )
    train_sha = hashlib.sha256(train_text.encode("utf-8")).hexdigest()

    by_kind: dict[str, int] = {}
    by_category: dict[str, int] = {}
    for r in records:
        by_kind[r.kind] = by_kind.get(r.kind, 0) + 1
        by_category[r.category] = by_category.get(r.category, 0) + 1
    manifest = {
        "records": len(records),
        "by_kind": dict(sorted(by_kind.items())),
        "by_category": dict(sorted(by_category.items())),
        "train_sha256": train_sha,
    }

    staged: list[tuple[Path, Path]] = []
    try:
        for name, text in (
            ("train.jsonl", train_text),
            ("finetune.conf", render_finetune_conf(finetune)),
            ("manifest.json", json.dumps(manifest, ensure_ascii=False, sort_keys=True, indent=2) + "\n"),
        ):
            tmp = out / (name + ".tmp")
            tmp.write_text(text, encoding="utf-8")
            staged.append((tmp, out / name))
        for tmp, final in staged:
            tmp.replace(final)
    except BaseException:
        for tmp, _ in staged:
            tmp.unlink(missing_ok=True)
        raise
    return manifest


def export_records_jsonl(records: Sequence[InstructionRecord], path: Path | str) -> None:
    Path(path).write_text(
        "".join(record_to_line(r) + "\n" for r in records), encoding="utf-8"
    )
