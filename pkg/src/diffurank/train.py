"""Distillation and denoising losses with analytic gradients, plus toy trainers.

The scorer is linear in a fixed feature map and the denoiser is a tiny
position/context-conditioned softmax; both exist so the losses can be
exercised end to end without a real language model.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass, field
from typing import Callable, Literal, Sequence

import numpy as np

from .corruption import CorruptionConfig, MaskedSequence, corrupt, sample_noise_level
from .errors import TrainingDivergedError, ValidationError
from .evaluation import ndcg_from_grades

LossName = Literal["ce", "ranknet"]


def _log_softmax(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def ce_loss(scores, top1: int) -> tuple[float, np.ndarray]:
    """``-log softmax(scores)[top1]`` and its gradient ``softmax - onehot``."""
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 1 or s.size == 0:
        raise ValidationError("scores must be a nonempty vector")
    if not 0 <= top1 < s.size:
        raise ValidationError(f"top1 index {top1} out of range for {s.size} scores")
    logp = _log_softmax(s)
    grad = np.exp(logp)
    grad[top1] -= 1.0
    return float(-logp[top1]), grad


def ranknet_loss(scores, ranks) -> tuple[float, np.ndarray]:
    """Sum over pairs with ``rank_i < rank_j`` of ``log(1 + exp(s_j - s_i))``.

    Better-ranked documents are pushed towards higher scores.
    """
    s = np.asarray(scores, dtype=np.float64)
    r = np.asarray(ranks)
    if s.shape != r.shape or s.ndim != 1:
        raise ValidationError("scores and ranks must be vectors of equal length")
    pairs = r[:, None] < r[None, :]  # pairs[i, j]: i preferred over j
    diff = s[None, :] - s[:, None]  # diff[i, j] = s_j - s_i
    loss = float(np.logaddexp(0.0, diff[pairs]).sum())
    # d/d(diff) softplus = sigmoid(diff)
    sig = np.where(pairs, 0.5 * (1.0 + np.tanh(0.5 * diff)), 0.0)
    grad = sig.sum(axis=0) - sig.sum(axis=1)
    return loss, grad


@dataclass(frozen=True)
class TeacherRanking:
    query_id: str
    doc_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "doc_ids", tuple(self.doc_ids))
        if len(set(self.doc_ids)) != len(self.doc_ids):
            raise ValidationError(f"teacher ranking for {self.query_id!r} repeats a doc_id")

    def ranks_for(self, doc_ids: Sequence[str]) -> np.ndarray:
        """1-based teacher rank of each doc in ``doc_ids``."""
        position = {d: i + 1 for i, d in enumerate(self.doc_ids)}
        missing = [d for d in doc_ids if d not in position]
        if missing:
            raise ValidationError(f"teacher ranking does not cover {missing[:5]}")
        return np.array([position[d] for d in doc_ids])


# -- scorer -----------------------------------------------------------------

_WORD = re.compile(r"\w+")


def _tokens(text: str) -> list[str]:
    return _WORD.findall(text.lower())


@dataclass(frozen=True)
class HashedFeatureMap:
    """Lexical-match features of a (query, document) pair.

    Four dense match statistics followed by ``buckets`` hashed query-term
    frequency slots.
    """

    buckets: int = 8

    @property
    def dim(self) -> int:
        return 4 + self.buckets

    def _bucket(self, term: str) -> int:
        h = hashlib.blake2b(term.encode("utf-8"), digest_size=4).digest()
        return int.from_bytes(h, "little") % self.buckets

    def __call__(self, query: str, doc: str) -> np.ndarray:
        q_terms = set(_tokens(query))
        d_tokens = _tokens(doc)
        tf: dict[str, int] = {}
        for tok in d_tokens:
            if tok in q_terms:
                tf[tok] = tf.get(tok, 0) + 1
        vec = np.zeros(self.dim)
        vec[0] = len(tf)
        vec[1] = len(tf) / max(len(q_terms), 1)
        vec[2] = math.log1p(sum(tf.values()))
        vec[3] = math.log1p(len(d_tokens))
        for term, count in tf.items():
            vec[4 + self._bucket(term)] += math.log1p(count)
        return vec


@dataclass
class ToyScorer:
    theta: np.ndarray
    feature_map: HashedFeatureMap | None = None

    def scores(self, features: np.ndarray) -> np.ndarray:
        return features @ self.theta

    def to_dict(self) -> dict:
        out = {"kind": "linear_scorer", "theta": self.theta.tolist()}
        if self.feature_map is not None:
            out["feature_buckets"] = self.feature_map.buckets
        return out


@dataclass
class TrainingInstance:
    query_id: str
    features: np.ndarray
    """One row per document."""
    ranks: np.ndarray
    """1-based teacher rank per document."""
    grades: np.ndarray | None = None
    """Graded relevance per document, used only for NDCG reporting."""

    @property
    def top1(self) -> int:
        return int(np.argmin(self.ranks))

    def eval_grades(self) -> np.ndarray:
        if self.grades is not None:
            return self.grades
        n = len(self.ranks)
        return grades_from_ranks(self.ranks, n)


def grades_from_ranks(ranks: np.ndarray, n: int) -> np.ndarray:
    """Graded labels by teacher percentile: top 10% -> 3, 25% -> 2, 50% -> 1."""
    q = 1.0 - (np.asarray(ranks) - 1) / n
    return np.select([q > 0.9, q > 0.75, q > 0.5], [3, 2, 1], default=0)


def make_separable_instances(
    num_queries: int, num_docs: int, dim: int = 8, seed: int = 0
) -> tuple[list[TrainingInstance], np.ndarray]:
    """Instances whose teacher order is exactly the order of a hidden linear score."""
    rng = np.random.default_rng(seed)
    true_theta = rng.normal(size=dim)
    true_theta /= np.linalg.norm(true_theta)
    instances = []
    for q in range(num_queries):
        feats = rng.normal(size=(num_docs, dim))
        order = np.argsort(-(feats @ true_theta), kind="stable")
        ranks = np.empty(num_docs, dtype=np.int64)
        ranks[order] = np.arange(1, num_docs + 1)
        instances.append(
            TrainingInstance(f"q{q}", feats, ranks, grades_from_ranks(ranks, num_docs))
        )
    return instances, true_theta


def instance_loss(
    theta: np.ndarray, inst: TrainingInstance, loss: LossName
) -> tuple[float, np.ndarray]:
    s = inst.features @ theta
    if loss == "ce":
        value, gs = ce_loss(s, inst.top1)
    elif loss == "ranknet":
        value, gs = ranknet_loss(s, inst.ranks)
    else:
        raise ValidationError(f"unknown loss {loss!r}")
    return value, inst.features.T @ gs


def mean_loss(
    theta: np.ndarray, instances: Sequence[TrainingInstance], loss: LossName
) -> tuple[float, np.ndarray]:
    total = 0.0
    grad = np.zeros_like(theta)
    for inst in instances:
        v, g = instance_loss(theta, inst, loss)
        total += v
        grad += g
    return total / len(instances), grad / len(instances)


def training_ndcg(scorer: ToyScorer, instances: Sequence[TrainingInstance], k: int = 10) -> float:
    vals = []
    for inst in instances:
        order = np.argsort(-scorer.scores(inst.features), kind="stable")
        grades = inst.eval_grades()
        vals.append(ndcg_from_grades(grades[order], grades, k))
    return float(np.mean(vals))


@dataclass
class TrainResult:
    scorer: ToyScorer
    losses: list[float] = field(default_factory=list)


def train_toy(
    instances: Sequence[TrainingInstance],
    loss: LossName = "ranknet",
    epochs: int = 200,
    lr: float = 0.1,
    seed: int = 0,
    feature_map: HashedFeatureMap | None = None,
) -> TrainResult:
    """Full-batch gradient descent on the mean loss; records the loss before each update."""
    if not instances:
        raise ValidationError("need at least one training instance")
    dim = instances[0].features.shape[1]
    rng = np.random.default_rng(seed)
    theta = rng.normal(scale=0.01, size=dim)
    losses = []
    for epoch in range(epochs):
        value, grad = mean_loss(theta, instances, loss)
        if not math.isfinite(value) or not np.all(np.isfinite(grad)):
            raise TrainingDivergedError(
                f"{loss} loss diverged at epoch {epoch}: loss={value}, |theta|={np.linalg.norm(theta):.3g}"
            )
        losses.append(value)
        theta = theta - lr * grad
    return TrainResult(ToyScorer(theta, feature_map), losses)


# -- masked-denoising objective -----------------------------------------------


@dataclass
class DenoiserParams:
    """Logits at position ``i`` are ``pos[i] + counts(visible tokens) @ ctx``."""

    vocab: tuple[str, ...]
    pos: np.ndarray
    ctx: np.ndarray

    @classmethod
    def zeros(cls, vocab: Sequence[str], max_len: int) -> DenoiserParams:
        v = len(vocab)
        return cls(tuple(vocab), np.zeros((max_len, v)), np.zeros((v, v)))

    @classmethod
    def random(cls, vocab: Sequence[str], max_len: int, rng: np.random.Generator, scale=0.5):
        v = len(vocab)
        return cls(
            tuple(vocab), rng.normal(scale=scale, size=(max_len, v)), rng.normal(scale=scale, size=(v, v))
        )

    def flat(self) -> np.ndarray:
        return np.concatenate([self.pos.ravel(), self.ctx.ravel()])

    def with_flat(self, x: np.ndarray) -> DenoiserParams:
        k = self.pos.size
        return DenoiserParams(
            self.vocab, x[:k].reshape(self.pos.shape), x[k:].reshape(self.ctx.shape)
        )

    def to_dict(self) -> dict:
        return {"kind": "denoiser", "vocab": list(self.vocab), "pos": self.pos.tolist(), "ctx": self.ctx.tolist()}


@dataclass
class SftBatch:
    items: list[MaskedSequence]


def _token_ids(vocab_index: dict[str, int], tokens: Sequence[str]) -> np.ndarray:
    try:
        return np.array([vocab_index[t] for t in tokens], dtype=np.int64)
    except KeyError as exc:
        raise ValidationError(f"token {exc.args[0]!r} is not in the denoiser vocabulary") from None


def sft_loss(batch: SftBatch, params: DenoiserParams) -> tuple[float, DenoiserParams]:
    """Inverse-mask-probability weighted NLL over masked slots.

    Each item's sum is divided by its response length; the batch loss is the
    mean over items. The gradient comes back shaped like ``params``.
    """
    if not batch.items:
        raise ValidationError("empty SFT batch")
    index = {t: i for i, t in enumerate(params.vocab)}
    v = len(params.vocab)
    total = 0.0
    g_pos = np.zeros_like(params.pos)
    g_ctx = np.zeros_like(params.ctx)
    scale = 1.0 / len(batch.items)
    for item in batch.items:
        masked = item.masked_positions
        if masked.size == 0:
            continue
        if item.response_len <= 0:
            raise ValidationError("masked sequence has an empty response")
        if len(item.clean) > params.pos.shape[0]:
            raise ValidationError(f"sequence length {len(item.clean)} exceeds denoiser capacity")
        p = item.mask_prob[masked]
        if np.any(p <= 0):
            raise ValidationError("masked position with zero mask probability")
        clean_ids = _token_ids(index, item.clean)
        visible = ~item.mask_flags
        counts = np.bincount(clean_ids[visible], minlength=v).astype(np.float64)
        logits = params.pos[masked] + counts @ params.ctx
        logp = _log_softmax(logits)
        target = clean_ids[masked]
        weight = scale / (p * item.response_len)
        nll = -logp[np.arange(masked.size), target]
        total += float((weight * nll).sum())
        dlogits = np.exp(logp)
        dlogits[np.arange(masked.size), target] -= 1.0
        dlogits *= weight[:, None]
        np.add.at(g_pos, masked, dlogits)
        g_ctx += np.outer(counts, dlogits.sum(axis=0))
    return total, DenoiserParams(params.vocab, g_pos, g_ctx)


def ranking_sequence(labels_in_prompt_order: Sequence[str], teacher_labels: Sequence[str]):
    """Token sequence for one ranking instance and its prompt length.

    The prompt lists the identifiers in candidate order; the response lists
    them best first, separated by ``>``.
    """
    prompt = ["[", *labels_in_prompt_order, "]"]
    response = []
    for i, label in enumerate(teacher_labels):
        if i:
            response.append(">")
        response.append(label)
    return prompt + response, len(prompt)


@dataclass
class DenoiserTrainResult:
    params: DenoiserParams
    losses: list[float] = field(default_factory=list)


def train_denoiser(
    sequences: Sequence[tuple[Sequence[str], int]],
    id_labels: Sequence[str],
    cfg: CorruptionConfig,
    epochs: int = 100,
    lr: float = 0.5,
    seed: int = 0,
) -> DenoiserTrainResult:
    """Gradient descent on fresh corruptions each epoch (``t ~ U(0, 1)`` per item)."""
    if not sequences:
        raise ValidationError("need at least one sequence")
    vocab = sorted({tok for seq, _ in sequences for tok in seq})
    max_len = max(len(seq) for seq, _ in sequences)
    rng = np.random.default_rng(seed)
    params = DenoiserParams.zeros(vocab, max_len)
    losses = []
    for epoch in range(epochs):
        items = [
            corrupt(seq, plen, sample_noise_level(rng), cfg, id_labels=id_labels, rng=rng)
            for seq, plen in sequences
        ]
        value, grad = sft_loss(SftBatch(items), params)
        if not math.isfinite(value):
            raise TrainingDivergedError(f"sft loss diverged at epoch {epoch}: loss={value}")
        losses.append(value)
        params = params.with_flat(params.flat() - lr * grad.flat())
    return DenoiserTrainResult(params, losses)


# -- gradient checking ----------------------------------------------------------


def finite_difference_check(
    fn: Callable[[np.ndarray], tuple[float, np.ndarray]], point, h: float = 1e-5
) -> float:
    """Normwise relative gap between ``fn``'s gradient and central differences.

    Returns ``max|g - g_fd| / max(max|g|, max|g_fd|)`` (0 when both vanish).
    """
    if h <= 0:
        raise ValidationError("step h must be positive")
    x = np.array(point, dtype=np.float64)
    _, grad = fn(x.copy())
    grad = np.asarray(grad, dtype=np.float64).ravel()
    fd = np.empty_like(grad)
    flat = x.ravel()
    for i in range(flat.size):
        xp = flat.copy()
        xm = flat.copy()
        xp[i] += h
        xm[i] -= h
        fd[i] = (fn(xp.reshape(x.shape))[0] - fn(xm.reshape(x.shape))[0]) / (2 * h)
    scale = max(np.abs(grad).max(initial=0.0), np.abs(fd).max(initial=0.0))
    if scale == 0.0:
        return 0.0
    return float(np.abs(grad - fd).max() / scale)
