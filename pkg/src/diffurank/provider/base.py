"""Request/response types for the mask-predictor boundary."""

from __future__ import annotations

import enum
import hashlib
import json
import threading
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Protocol

import numpy as np

from ..core import CandidateList, Document, Query, validate_prob_matrix
from ..errors import DimensionMismatchError, ValidationError

MASK_TOKEN = "[M]"
BINARY_TOKENS = ("0", "1")


class Strategy(str, enum.Enum):
    POINTWISE = "pointwise"
    LOGITS_LIST = "logits_list"
    PERMUTATION = "permutation"


@dataclass(frozen=True)
class PromptContext:
    strategy: Strategy
    query: Query
    tagged_docs: tuple[tuple[str, Document], ...]
    template_id: str = "default"

    def __post_init__(self) -> None:
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        object.__setattr__(self, "tagged_docs", tuple((str(l), d) for l, d in self.tagged_docs))
        if self.strategy is Strategy.POINTWISE and len(self.tagged_docs) != 1:
            raise ValidationError("pointwise contexts carry exactly one document")
        labels = [label for label, _ in self.tagged_docs]
        if len(set(labels)) != len(labels):
            raise ValidationError("context labels must be distinct")

    @classmethod
    def from_candidates(
        cls, strategy: Strategy | str, cands: CandidateList, template_id: str = "default"
    ) -> PromptContext:
        return cls(Strategy(strategy), cands.query, tuple(cands.tagged()), template_id)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.tagged_docs)

    def __len__(self) -> int:
        return len(self.tagged_docs)


@dataclass(frozen=True)
class MaskQuery:
    masked_positions: tuple[int, ...]
    allowed_tokens: tuple[str, ...]
    filled_slots: tuple[tuple[int, str], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "masked_positions", tuple(map(int, self.masked_positions)))
        object.__setattr__(self, "allowed_tokens", tuple(map(str, self.allowed_tokens)))
        object.__setattr__(
            self, "filled_slots", tuple((int(p), str(t)) for p, t in self.filled_slots)
        )
        if not self.allowed_tokens:
            raise ValidationError("allowed_tokens must be nonempty")
        if len(set(self.allowed_tokens)) != len(self.allowed_tokens):
            raise ValidationError("allowed_tokens must be distinct")
        if len(set(self.masked_positions)) != len(self.masked_positions):
            raise ValidationError("masked_positions must be distinct")
        if not set(self.masked_positions).isdisjoint([p for p, _ in self.filled_slots]):
            raise ValidationError("masked positions and filled slots overlap")

    def check_against(self, ctx: PromptContext) -> None:
        """Reject queries whose tokens are neither binary labels nor ctx identifiers."""
        if self.allowed_tokens == BINARY_TOKENS:
            return
        known = set(ctx.labels)
        unknown = [t for t in self.allowed_tokens if t not in known]
        if unknown:
            raise ValidationError(f"allowed tokens {unknown} not in the context alphabet")


@dataclass(frozen=True)
class LogitsResponse:
    """Probability rows aligned to ``masked_positions x allowed_tokens``."""

    rows: np.ndarray
    provider_meta: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        rows = validate_prob_matrix(self.rows)
        rows = rows.copy()
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    def check_shape(self, mq: MaskQuery) -> LogitsResponse:
        expected = (len(mq.masked_positions), len(mq.allowed_tokens))
        if self.rows.shape != expected:
            raise DimensionMismatchError(
                f"provider returned rows of shape {self.rows.shape}, expected {expected}"
            )
        return self


class MaskPredictor(Protocol):
    def provide(self, ctx: PromptContext, mq: MaskQuery) -> LogitsResponse: ...


def request_payload(ctx: PromptContext, mq: MaskQuery) -> dict[str, Any]:
    """Canonical JSON-able echo of one request; also the replay-key preimage."""
    return {
        "strategy": ctx.strategy.value,
        "template_id": ctx.template_id,
        "query": {"query_id": ctx.query.query_id, "text": ctx.query.text},
        "docs": [
            {"label": label, "doc_id": doc.doc_id, "text": doc.text} for label, doc in ctx.tagged_docs
        ],
        "masked_positions": list(mq.masked_positions),
        "filled": [{"pos": p, "label": t} for p, t in mq.filled_slots],
        "allowed_tokens": list(mq.allowed_tokens),
    }


def payload_key(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def replay_key(ctx: PromptContext, mq: MaskQuery) -> str:
    return payload_key(request_payload(ctx, mq))


class CountingProvider:
    """Wraps a provider and counts calls; thread-safe."""

    def __init__(self, inner: MaskPredictor) -> None:
        self.inner = inner
        self.calls = 0
        self._lock = threading.Lock()

    def provide(self, ctx: PromptContext, mq: MaskQuery) -> LogitsResponse:
        with self._lock:
            self.calls += 1
        return self.inner.provide(ctx, mq)


def load_template(template_id: str, strategy: Strategy | str) -> str:
    name = f"{template_id}_{Strategy(strategy).value}.txt"
    path = resources.files("diffurank.provider").joinpath("templates", name)
    try:
        return path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ValidationError(f"no template {name!r}") from None


def render_prompt(ctx: PromptContext, mq: MaskQuery | None = None) -> str:
    """Plain-text prompt with the masked response appended.

    Masked slots render as ``[M]``; filled slots show their token.
    """
    template = load_template(ctx.template_id, ctx.strategy)
    n = len(ctx.tagged_docs)
    if ctx.strategy is Strategy.POINTWISE:
        passages = ctx.tagged_docs[0][1].text
        response = MASK_TOKEN
    elif ctx.strategy is Strategy.LOGITS_LIST:
        passages = "\n".join(f"[{i + 1}] {d.text}" for i, (_, d) in enumerate(ctx.tagged_docs))
        response = ", ".join(f"Doc {i + 1}: {MASK_TOKEN}" for i in range(n))
    else:
        passages = "\n".join(f"[{label}] {d.text}" for label, d in ctx.tagged_docs)
        slots = [MASK_TOKEN] * n
        if mq is not None:
            for pos, token in mq.filled_slots:
                slots[pos] = token
        response = " > ".join(slots)
    return template.format(num=n, query=ctx.query.text, passages=passages, response=response)
