"""Forward masking of response tokens for denoising training."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Collection, Sequence

import numpy as np

from .errors import ValidationError
from .provider import MASK_TOKEN


class MaskStrategy(str, enum.Enum):
    RANDOM_MASK = "random_mask"
    DOCID_MASK = "docid_mask"


@dataclass(frozen=True)
class CorruptionConfig:
    epsilon: float = 1e-3
    strategy: MaskStrategy = MaskStrategy.RANDOM_MASK
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "strategy", MaskStrategy(self.strategy))
        if not 0.0 <= self.epsilon < 1.0:
            raise ValidationError(f"epsilon must lie in [0, 1), got {self.epsilon}")


@dataclass(frozen=True)
class MaskedSequence:
    clean: tuple[str, ...]
    tokens: tuple[str, ...]
    """``clean`` with masked positions replaced by the mask token."""
    mask_flags: np.ndarray
    prompt_len: int
    t: float
    mask_prob: np.ndarray
    """Per-position masking probability; 0 where a position can never be masked."""

    @property
    def response_len(self) -> int:
        return len(self.clean) - self.prompt_len

    @property
    def masked_positions(self) -> np.ndarray:
        return np.flatnonzero(self.mask_flags)


def mask_probability(t: float, epsilon: float) -> float:
    return (1.0 - epsilon) * t + epsilon


def sample_noise_level(rng: np.random.Generator) -> float:
    return float(rng.uniform(0.0, 1.0))


def corrupt(
    clean: Sequence[str],
    prompt_len: int,
    t: float,
    cfg: CorruptionConfig,
    *,
    id_labels: Collection[str] | None = None,
    rng: np.random.Generator | None = None,
) -> MaskedSequence:
    """Mask response tokens independently with probability ``(1 - eps) * t + eps``.

    Under ``docid_mask`` only response tokens that exactly match one of
    ``id_labels`` are eligible. Without an explicit ``rng`` the draw is seeded
    from ``cfg.seed``.
    """
    if not 0.0 <= t <= 1.0:
        raise ValidationError(f"noise level t must lie in [0, 1], got {t}")
    clean = tuple(clean)
    if not 0 <= prompt_len <= len(clean):
        raise ValidationError(f"prompt_len {prompt_len} outside 0..{len(clean)}")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)

    eligible = np.zeros(len(clean), dtype=bool)
    eligible[prompt_len:] = True
    if cfg.strategy is MaskStrategy.DOCID_MASK:
        if id_labels is None:
            raise ValidationError("docid_mask needs the identifier labels")
        ids = set(id_labels)
        eligible &= np.array([tok in ids for tok in clean], dtype=bool)

    p_mask = mask_probability(t, cfg.epsilon)
    # One uniform per token keeps the draw aligned with positions across strategies.
    draws = rng.random(len(clean))
    flags = eligible & (draws < p_mask)
    mask_prob = np.where(eligible, p_mask, 0.0)
    tokens = tuple(MASK_TOKEN if f else tok for tok, f in zip(clean, flags))
    flags.setflags(write=False)
    mask_prob.setflags(write=False)
    return MaskedSequence(clean, tokens, flags, prompt_len, float(t), mask_prob)
