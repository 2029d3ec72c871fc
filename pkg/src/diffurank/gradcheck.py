"""Finite-difference audit of every analytic loss gradient."""

from __future__ import annotations

from typing import Iterable

import numpy as np

from .corruption import CorruptionConfig, MaskStrategy, corrupt
from .errors import ValidationError
from .train import (
    DenoiserParams,
    SftBatch,
    ce_loss,
    finite_difference_check,
    ranking_sequence,
    ranknet_loss,
    sft_loss,
)

LOSSES = ("ce", "ranknet", "sft")


def _ce_case(rng: np.random.Generator) -> float:
    n = int(rng.integers(2, 12))
    top1 = int(rng.integers(n))
    return finite_difference_check(lambda s: ce_loss(s, top1), rng.normal(scale=2.0, size=n))


def _ranknet_case(rng: np.random.Generator) -> float:
    n = int(rng.integers(2, 12))
    ranks = rng.permutation(n) + 1
    return finite_difference_check(lambda s: ranknet_loss(s, ranks), rng.normal(scale=2.0, size=n))


def _sft_case(rng: np.random.Generator) -> float:
    n = int(rng.integers(2, 6))
    labels = [chr(ord("A") + i) for i in range(n)]
    teacher = list(rng.permutation(labels))
    seq, plen = ranking_sequence(labels, teacher)
    cfg = CorruptionConfig(epsilon=0.05, strategy=MaskStrategy.RANDOM_MASK)
    items = []
    for _ in range(3):
        item = corrupt(seq, plen, float(rng.uniform(0.2, 1.0)), cfg, rng=rng)
        if item.masked_positions.size == 0:  # force at least one target
            item = corrupt(seq, plen, 1.0, cfg, rng=rng)
        items.append(item)
    batch = SftBatch(items)
    vocab = sorted(set(seq))
    base = DenoiserParams.random(vocab, len(seq), rng)

    def fn(x: np.ndarray):
        value, grad = sft_loss(batch, base.with_flat(x))
        return value, grad.flat()

    return finite_difference_check(fn, base.flat())


_CASES = {"ce": _ce_case, "ranknet": _ranknet_case, "sft": _sft_case}


def run_gradcheck(losses: Iterable[str] = LOSSES, instances: int = 100, seed: int = 0) -> dict[str, float]:
    """Worst normwise relative deviation per loss over ``instances`` random cases."""
    out = {}
    for name in losses:
        if name not in _CASES:
            raise ValidationError(f"unknown loss {name!r}")
        rng = np.random.default_rng([seed, LOSSES.index(name)])
        out[name] = max(_CASES[name](rng) for _ in range(instances))
    return out
