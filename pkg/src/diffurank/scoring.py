"""Relevance scores read off binary "0"/"1" predictions at masked slots."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .core import CandidateList, Document, IdentifierAlphabet, Query, stable_descending_order
from .errors import DimensionMismatchError
from .provider import BINARY_TOKENS, MaskPredictor, MaskQuery, PromptContext, Strategy

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RelevanceScore:
    value: float
    p0: float
    p1: float
    degenerate: bool = False

    @classmethod
    def from_probs(cls, p0: float, p1: float) -> RelevanceScore:
        p0, p1 = float(p0), float(p1)
        total = p0 + p1
        if total <= 0:
            log.warning("degenerate relevance probabilities p0=%r p1=%r; scoring 0.5", p0, p1)
            return cls(0.5, p0, p1, degenerate=True)
        return cls(p1 / total, p0, p1)


def pointwise_score(
    query: Query, doc: Document, provider: MaskPredictor, *, template_id: str = "default"
) -> RelevanceScore:
    """Score one query-document pair from a single masked slot after the prompt."""
    ctx = PromptContext(
        Strategy.POINTWISE, query, ((IdentifierAlphabet.default(1).labels[0], doc),), template_id
    )
    mq = MaskQuery((0,), BINARY_TOKENS)
    rows = provider.provide(ctx, mq).check_shape(mq).rows
    return RelevanceScore.from_probs(rows[0, 0], rows[0, 1])


def logits_listwise_scores(
    cands: CandidateList, provider: MaskPredictor, *, template_id: str = "default"
) -> list[RelevanceScore]:
    """Score every candidate from one call with one masked slot per document."""
    ctx = PromptContext.from_candidates(Strategy.LOGITS_LIST, cands, template_id)
    mq = MaskQuery(tuple(range(len(cands))), BINARY_TOKENS)
    resp = provider.provide(ctx, mq)
    if resp.rows.shape[0] != len(cands):
        raise DimensionMismatchError(
            f"expected {len(cands)} relevance rows, provider returned {resp.rows.shape[0]}"
        )
    rows = resp.check_shape(mq).rows
    return [RelevanceScore.from_probs(p0, p1) for p0, p1 in rows]


def order_by_scores(scores: list[RelevanceScore]) -> list[int]:
    """Candidate indices by descending score; ties keep candidate order."""
    return stable_descending_order([s.value for s in scores])


def score_values(scores: list[RelevanceScore]) -> np.ndarray:
    return np.array([s.value for s in scores])
