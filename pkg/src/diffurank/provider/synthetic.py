"""Deterministic stand-in for a diffusion LM's identifier/relevance head.

Every document carries a hidden relevance in [0, 1]. Within a prompt the
documents' true ranks follow that relevance (descending, ties by prompt
order). For a masked rank slot ``i`` the oracle scores identifier ``j`` by

    -beta * w(i) * |i - truerank(j)| + gamma * g(seed, i, j)

and softmaxes over the allowed identifiers. ``w(i)`` grows towards both ends of
the list when ``end_bias > 0``, which makes the head and tail slots the most
confident. ``g`` is hash-based noise in [-1, 1]. When the allowed tokens are the
binary relevance labels the oracle returns ``(1 - rel, rel)`` instead.
"""

from __future__ import annotations

import hashlib
import math
import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from ..errors import ValidationError
from .base import BINARY_TOKENS, LogitsResponse, MaskQuery, PromptContext

_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)


@dataclass(frozen=True)
class OracleConfig:
    seed: int = 0
    beta: float = 5.0
    gamma: float = 0.0
    end_bias: float = 0.0
    rel: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name in ("beta", "gamma", "end_bias"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValidationError(f"{name} must be finite and >= 0, got {value}")
        bad = {k: v for k, v in self.rel.items() if not 0.0 <= v <= 1.0}
        if bad:
            raise ValidationError(f"relevance values outside [0, 1]: {dict(list(bad.items())[:5])}")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "beta": self.beta,
            "gamma": self.gamma,
            "end_bias": self.end_bias,
            "rel": dict(self.rel),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> OracleConfig:
        return cls(
            seed=int(data.get("seed", 0)),
            beta=float(data.get("beta", 5.0)),
            gamma=float(data.get("gamma", 0.0)),
            end_bias=float(data.get("end_bias", 0.0)),
            rel={str(k): float(v) for k, v in data.get("rel", {}).items()},
        )


def _hash64(text: str) -> int:
    return int.from_bytes(hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest(), "little")


def _splitmix64(x: np.ndarray) -> np.ndarray:
    x = (x + np.uint64(0x9E3779B97F4A7C15)) & _MASK64
    x = ((x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & _MASK64
    x = ((x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & _MASK64
    return x ^ (x >> np.uint64(31))


def hash_noise(seed: int, query_id: str, slots: np.ndarray, doc_keys: np.ndarray) -> np.ndarray:
    """Noise in [-1, 1] for every (slot, document) pair; a pure function of its inputs."""
    base = np.uint64(_hash64(f"{seed}\x1f{query_id}"))
    slot_part = _splitmix64(slots.astype(np.uint64) ^ base)
    x = _splitmix64(slot_part[:, None] ^ doc_keys[None, :])
    return (x >> np.uint64(11)).astype(np.float64) * (2.0 / 2.0**53) - 1.0


def end_weight(slots: np.ndarray, n: int, end_bias: float) -> np.ndarray:
    if n <= 1:
        return np.ones(len(slots))
    return 1.0 + end_bias * np.abs(2.0 * slots - (n - 1)) / (n - 1)


def true_ranks(rel: np.ndarray) -> np.ndarray:
    """0-based rank of each document when sorted by relevance, ties by position."""
    order = np.lexsort((np.arange(rel.size), -rel))
    ranks = np.empty(rel.size, dtype=np.int64)
    ranks[order] = np.arange(rel.size)
    return ranks


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=1, keepdims=True)
    return z


@dataclass(frozen=True)
class _PromptTable:
    index: dict[str, int]
    rel: np.ndarray
    logits: np.ndarray
    """Full slot x document logit matrix for one prompt."""


class SyntheticOracle:
    """Mask predictor driven by hidden relevance labels (see module docstring).

    The logit table depends only on the prompt, so it is built once per
    context and sliced for every mask query against that context.
    """

    cache_size = 256

    def __init__(self, config: OracleConfig) -> None:
        self.config = config
        # Keyed by object identity: hashing a context walks every document.
        # Each entry keeps its context alive, so an id cannot be reused while cached.
        self._tables: OrderedDict[int, tuple[PromptContext, _PromptTable]] = OrderedDict()
        self._lock = threading.Lock()

    def relevance(self, doc_id: str) -> float:
        try:
            return float(self.config.rel[doc_id])
        except KeyError:
            raise ValidationError(f"oracle has no hidden relevance for {doc_id!r}") from None

    def _build(self, ctx: PromptContext) -> _PromptTable:
        cfg = self.config
        n = len(ctx.tagged_docs)
        rel = np.array([self.relevance(doc.doc_id) for _, doc in ctx.tagged_docs])
        slots = np.arange(n)
        dist = np.abs(slots[:, None] - true_ranks(rel)[None, :]).astype(np.float64)
        logits = -cfg.beta * end_weight(slots, n, cfg.end_bias)[:, None] * dist
        if cfg.gamma:
            doc_keys = np.array([_hash64(doc.doc_id) for _, doc in ctx.tagged_docs], dtype=np.uint64)
            logits += cfg.gamma * hash_noise(cfg.seed, ctx.query.query_id, slots, doc_keys)
        logits.setflags(write=False)
        index = {label: j for j, (label, _) in enumerate(ctx.tagged_docs)}
        return _PromptTable(index, rel, logits)

    def _table(self, ctx: PromptContext) -> _PromptTable:
        key = id(ctx)
        with self._lock:
            entry = self._tables.get(key)
            if entry is not None and entry[0] is ctx:
                self._tables.move_to_end(key)
                return entry[1]
        table = self._build(ctx)
        with self._lock:
            self._tables[key] = (ctx, table)
            while len(self._tables) > self.cache_size:
                self._tables.popitem(last=False)
        return table

    def provide(self, ctx: PromptContext, mq: MaskQuery) -> LogitsResponse:
        table = self._table(ctx)
        n = len(table.index)
        slots = np.asarray(mq.masked_positions, dtype=np.int64)
        if slots.size and (slots.min() < 0 or slots.max() >= n):
            raise ValidationError(f"masked positions {mq.masked_positions} outside 0..{n - 1}")

        if mq.allowed_tokens == BINARY_TOKENS:
            p1 = table.rel[slots]
            rows = np.column_stack([1.0 - p1, p1])
            return LogitsResponse(rows, {"backend": "synthetic", "head": "binary"})

        try:
            cols = [table.index[t] for t in mq.allowed_tokens]
        except KeyError as exc:
            raise ValidationError(f"allowed token {exc.args[0]!r} not in the context alphabet") from None
        logits = table.logits[slots[:, None], cols]
        return LogitsResponse(_softmax_rows(logits), {"backend": "synthetic"})
