import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from diffurank.corruption import CorruptionConfig, MaskStrategy, corrupt, mask_probability, sample_noise_level
from diffurank.errors import ValidationError
from diffurank.provider import MASK_TOKEN
from diffurank.train import ranking_sequence

LABELS = [chr(ord("A") + i) for i in range(8)]
SEQ, PLEN = ranking_sequence(LABELS, LABELS[::-1])


def test_nothing_masked_at_zero_noise():
    item = corrupt(SEQ, PLEN, 0.0, CorruptionConfig(epsilon=0.0))
    assert not item.mask_flags.any()
    assert item.tokens == item.clean


@pytest.mark.parametrize("eps", [0.0, 1e-3, 0.5])
def test_everything_eligible_masked_at_full_noise(eps):
    item = corrupt(SEQ, PLEN, 1.0, CorruptionConfig(epsilon=eps))
    assert item.mask_flags[PLEN:].all() and not item.mask_flags[:PLEN].any()
    assert all(tok == MASK_TOKEN for tok in item.tokens[PLEN:])


def test_half_noise_fraction():
    clean = ["x"] * 10_000
    item = corrupt(clean, 0, 0.5, CorruptionConfig(epsilon=0.0), rng=np.random.default_rng(5))
    assert abs(item.mask_flags.mean() - 0.5) < 0.02


def test_mask_probability_floor():
    assert mask_probability(0.0, 1e-3) == 1e-3
    assert mask_probability(1.0, 1e-3) == 1.0


def test_docid_mask_only_touches_identifiers():
    rng = np.random.default_rng(0)
    cfg = CorruptionConfig(strategy=MaskStrategy.DOCID_MASK)
    for _ in range(50):
        item = corrupt(SEQ, PLEN, float(rng.uniform()), cfg, id_labels=LABELS, rng=rng)
        for pos in item.masked_positions:
            assert pos >= PLEN and item.clean[pos] in LABELS
        separators = [i for i in range(PLEN, len(SEQ)) if SEQ[i] == ">"]
        assert (item.mask_prob[separators] == 0).all()
    with pytest.raises(ValidationError):
        corrupt(SEQ, PLEN, 0.5, cfg)


def test_noise_level_draws():
    a = [sample_noise_level(np.random.default_rng(3)) for _ in range(2)]
    assert a[0] == a[1]
    draws = np.array([sample_noise_level(r) for r in [np.random.default_rng(7)] for _ in range(100_000)])
    assert draws.min() >= 0.0 and draws.max() <= 1.0
    assert abs(draws.mean() - 0.5) < 0.01


def test_seeded_corruption_is_reproducible():
    cfg = CorruptionConfig(seed=11)
    assert corrupt(SEQ, PLEN, 0.4, cfg).tokens == corrupt(SEQ, PLEN, 0.4, cfg).tokens


def test_bad_inputs():
    with pytest.raises(ValidationError):
        corrupt(SEQ, PLEN, 1.5, CorruptionConfig())
    with pytest.raises(ValidationError):
        corrupt(SEQ, len(SEQ) + 1, 0.5, CorruptionConfig())
    with pytest.raises(ValidationError):
        CorruptionConfig(epsilon=1.0)


@given(st.floats(0, 1), st.floats(0, 0.5), st.integers(0, 2**32 - 1))
def test_prompt_never_masked(t, eps, seed):
    item = corrupt(SEQ, PLEN, t, CorruptionConfig(epsilon=eps), rng=np.random.default_rng(seed))
    assert not item.mask_flags[:PLEN].any()
    np.testing.assert_allclose(item.mask_prob[PLEN:], mask_probability(t, eps))
