"""Strategy dispatch and back-to-front sliding-window reranking."""

from __future__ import annotations

import enum
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

from .assign import decode_assign
from .core import CandidateList, RankedList
from .errors import DiffuRankError, ProviderError, ValidationError
from .provider import CountingProvider, MaskPredictor
from .sampler import SamplerConfig, SamplingTrace, sample_permutation
from .scoring import RelevanceScore, logits_listwise_scores, order_by_scores, pointwise_score

log = logging.getLogger(__name__)


class RerankStrategy(str, enum.Enum):
    POINTWISE = "pointwise"
    LOGITS_LIST = "logits_list"
    PERM_SAMP = "perm_samp"
    PERM_ASSIGN = "perm_assign"


@dataclass(frozen=True)
class WindowConfig:
    window_size: int = 20
    step_size: int = 10
    top_k: int = 100

    def __post_init__(self) -> None:
        if not 1 <= self.step_size <= self.window_size <= self.top_k:
            raise ValidationError(
                "window config needs 1 <= step_size <= window_size <= top_k, got "
                f"step={self.step_size} window={self.window_size} top_k={self.top_k}"
            )


@dataclass(frozen=True)
class RerankJob:
    strategy: RerankStrategy
    sampler: SamplerConfig | None = None
    window: WindowConfig = field(default_factory=WindowConfig)
    template_id: str = "default"
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "strategy", RerankStrategy(self.strategy))
        needs_k = self.strategy is RerankStrategy.PERM_SAMP
        if needs_k and self.sampler is None:
            raise ValidationError("perm_samp needs a sampler config (steps K)")
        if not needs_k and self.sampler is not None:
            raise ValidationError(f"{self.strategy.value} does not take a sampler config")


@dataclass
class WindowResult:
    order: list[int]
    """Local candidate indices, best first."""
    scores: list[RelevanceScore] | None = None
    trace: SamplingTrace | None = None

    @property
    def valid(self) -> bool:
        return self.trace.valid if self.trace is not None else True


def window_schedule(n: int, cfg: WindowConfig) -> list[tuple[int, int]]:
    """``[start, end)`` spans over the first ``min(n, top_k)`` items, last window first."""
    n = min(n, cfg.top_k)
    if n <= 0:
        return []
    w, step = cfg.window_size, cfg.step_size
    spans = []
    start, end = n - w, n
    while True:
        spans.append((max(start, 0), end))
        if start <= 0:
            break
        start -= step
        end -= step
    return spans


def expected_window_count(n: int, cfg: WindowConfig) -> int:
    n = min(n, cfg.top_k)
    if n <= cfg.window_size:
        return 1
    return math.ceil((n - cfg.window_size) / cfg.step_size) + 1


def rerank_window(cands: CandidateList, job: RerankJob, provider: MaskPredictor) -> WindowResult:
    """Order one window with the job's strategy."""
    strategy = job.strategy
    if strategy is RerankStrategy.PERM_ASSIGN:
        perm = decode_assign(cands, provider, template_id=job.template_id)
        return WindowResult(perm.tolist())
    if strategy is RerankStrategy.PERM_SAMP:
        perm, trace = sample_permutation(cands, provider, job.sampler, template_id=job.template_id)
        return WindowResult(perm.tolist(), trace=trace)
    if strategy is RerankStrategy.LOGITS_LIST:
        scores = logits_listwise_scores(cands, provider, template_id=job.template_id)
    else:
        scores = [
            pointwise_score(cands.query, doc, provider, template_id=job.template_id)
            for doc in cands.docs
        ]
    return WindowResult(order_by_scores(scores), scores=scores)


@dataclass
class RerankOutcome:
    ranking: RankedList
    strategy: RerankStrategy
    windows: int = 0
    provider_calls: int = 0
    wall_ms: float = 0.0
    traces: list[tuple[int, SamplingTrace]] = field(default_factory=list)
    validity_flags: list[bool] = field(default_factory=list)
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    def log_record(self) -> dict:
        rec = {
            "query_id": self.ranking.query_id,
            "strategy": self.strategy.value,
            "provider_calls": self.provider_calls,
            "wall_ms": round(self.wall_ms, 3),
            "windows": self.windows,
            "validity_flags": self.validity_flags,
        }
        if self.error is not None:
            rec["error"] = self.error
        return rec


def _pointwise_ranking(cands: CandidateList, job: RerankJob, provider: MaskPredictor) -> RankedList:
    n = min(len(cands), job.window.top_k)
    head = cands.docs[:n]
    scores = [pointwise_score(cands.query, d, provider, template_id=job.template_id).value for d in head]
    ranked = RankedList.from_scores(cands.query.query_id, [d.doc_id for d in head], scores)
    tail = cands.docs[n:]
    if not tail:
        return ranked
    floor = min(scores)
    ids = ranked.doc_ids + [d.doc_id for d in tail]
    all_scores = [e.score for e in ranked.entries] + [floor - 1 - j for j in range(len(tail))]
    return RankedList.from_order(cands.query.query_id, ids, all_scores)


def rerank_query(cands: CandidateList, job: RerankJob, provider: MaskPredictor) -> RerankOutcome:
    """Rerank one candidate list and collect run-log bookkeeping."""
    counter = CountingProvider(provider)
    started = time.perf_counter()
    outcome = RerankOutcome(RankedList(cands.query.query_id), job.strategy)
    if job.strategy is RerankStrategy.POINTWISE:
        outcome.ranking = _pointwise_ranking(cands, job, counter)
    else:
        order = list(range(len(cands)))
        for w, (start, end) in enumerate(window_schedule(len(cands), job.window)):
            window = cands.subset(order[start:end])
            try:
                result = rerank_window(window, job, counter)
            except ProviderError as exc:
                exc.window = w
                raise
            order[start:end] = [order[start + i] for i in result.order]
            outcome.windows += 1
            outcome.validity_flags.append(result.valid)
            if result.trace is not None:
                outcome.traces.append((w, result.trace))
        outcome.ranking = RankedList.from_order(
            cands.query.query_id, [cands.docs[i].doc_id for i in order]
        )
    outcome.provider_calls = counter.calls
    outcome.wall_ms = (time.perf_counter() - started) * 1000.0
    return outcome


def sliding_rerank(cands: CandidateList, job: RerankJob, provider: MaskPredictor) -> RankedList:
    """Rerank the top ``job.window.top_k`` candidates; anything below keeps its place."""
    return rerank_query(cands, job, provider).ranking


def rerank_many(
    candidate_lists: Sequence[CandidateList],
    job: RerankJob,
    provider: MaskPredictor,
    *,
    jobs: int = 1,
) -> list[RerankOutcome]:
    """Rerank many queries on a worker pool; results come back in input order.

    A query whose reranking raises keeps its input ordering and carries the
    error message in its outcome.
    """

    def run(cands: CandidateList) -> RerankOutcome:
        try:
            return rerank_query(cands, job, provider)
        except DiffuRankError as exc:
            log.warning("query %s failed, keeping input order: %s", cands.query.query_id, exc)
            fallback = RankedList.from_order(cands.query.query_id, [d.doc_id for d in cands.docs])
            return RerankOutcome(fallback, job.strategy, error=f"{type(exc).__name__}: {exc}")

    if jobs <= 1:
        return [run(c) for c in candidate_lists]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run, candidate_lists))
