"""Seeded shuffling and sampling.

Implemented as explicit Fisher-Yates passes over `random.Random.randrange`
so the exact output sequence is part of this package's contract, not an
implementation detail of the stdlib's shuffle/sample internals.
"""

from __future__ import annotations

import random
from typing import Sequence, TypeVar

from .errors import ValidationError

T = TypeVar("T")


def fisher_yates_shuffle(items: list, rng: random.Random) -> None:
    """In-place uniform shuffle."""
    for i in range(len(items) - 1, 0, -1):
        j = rng.randrange(i + 1)
        items[i], items[j] = items[j], items[i]


def sample_without_replacement(items: Sequence[T], k: int, rng: random.Random) -> list[T]:
    """k distinct elements, returned in their original relative order."""
    n = len(items)
    if not 0 <= k <= n:
        raise ValidationError(f"cannot sample {k} from {n} items without replacement")
    indices = list(range(n))
    for i in range(k):
        j = rng.randrange(i, n)
        indices[i], indices[j] = indices[j], indices[i]
    return [items[i] for i in sorted(indices[:k])]
