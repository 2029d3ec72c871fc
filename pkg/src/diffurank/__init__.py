"""Permutation decoding and sliding-window reranking with masked-token predictors."""

from .assign import AssignmentResult, assignment_from_probs, brute_force_assignment, decode_assign, hungarian
from .core import (
    CandidateList,
    Document,
    IdentifierAlphabet,
    Permutation,
    Query,
    RankedEntry,
    RankedList,
    assign_identifiers,
)
from .corruption import CorruptionConfig, MaskedSequence, MaskStrategy, corrupt, mask_probability
from .errors import (
    CapacityError,
    DiffuRankError,
    ParseError,
    ProviderError,
    TrainingDivergedError,
    ValidationError,
)
from .evaluation import FillingDynamics, Qrels, correct_rate, filling_dynamics, ndcg_at_k, paired_ttest
from .orchestrate import (
    RerankJob,
    RerankOutcome,
    RerankStrategy,
    WindowConfig,
    rerank_many,
    rerank_query,
    sliding_rerank,
    window_schedule,
)
from .provider import OracleConfig, RemoteProvider, ReplayProvider, SyntheticOracle
from .sampler import SamplerConfig, SamplingMode, SamplingTrace, sample_permutation
from .scoring import RelevanceScore, logits_listwise_scores, pointwise_score
from .train import ce_loss, ranknet_loss, sft_loss

__version__ = "0.1.0"

__all__ = [
    "AssignmentResult",
    "CandidateList",
    "CapacityError",
    "CorruptionConfig",
    "DiffuRankError",
    "Document",
    "FillingDynamics",
    "IdentifierAlphabet",
    "MaskStrategy",
    "MaskedSequence",
    "OracleConfig",
    "ParseError",
    "Permutation",
    "ProviderError",
    "Qrels",
    "Query",
    "RankedEntry",
    "RankedList",
    "RelevanceScore",
    "RemoteProvider",
    "ReplayProvider",
    "RerankJob",
    "RerankOutcome",
    "RerankStrategy",
    "SamplerConfig",
    "SamplingMode",
    "SamplingTrace",
    "SyntheticOracle",
    "TrainingDivergedError",
    "ValidationError",
    "WindowConfig",
    "assign_identifiers",
    "assignment_from_probs",
    "brute_force_assignment",
    "ce_loss",
    "correct_rate",
    "corrupt",
    "decode_assign",
    "filling_dynamics",
    "hungarian",
    "logits_listwise_scores",
    "mask_probability",
    "ndcg_at_k",
    "paired_ttest",
    "pointwise_score",
    "ranknet_loss",
    "rerank_many",
    "rerank_query",
    "sample_permutation",
    "sft_loss",
    "sliding_rerank",
    "window_schedule",
]
