import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.optimize import linear_sum_assignment

from diffurank.assign import assignment_from_probs, brute_force_assignment, decode_assign, hungarian
from diffurank.errors import ValidationError
from diffurank.provider import CountingProvider
from helpers import oracle_window
from oracles import enumerate_assignments, sigma_star


def test_one_by_one():
    res = hungarian([[0.7]])
    assert res.permutation.tolist() == [0]
    assert res.total_cost == 0.7
    assert brute_force_assignment([[0.7]]).permutation.tolist() == [0]


def test_diagonal_dominant_gives_identity():
    C = np.full((3, 3), 5.0) - np.diag([4.0, 3.0, 2.0])
    assert hungarian(C).permutation.tolist() == [0, 1, 2]


def test_random_six_by_six_against_enumeration():
    rng = np.random.default_rng(6)
    for _ in range(20):
        C = rng.uniform(size=(6, 6))
        cost, perm = enumerate_assignments(C)
        res = hungarian(C)
        assert res.total_cost == pytest.approx(cost, abs=1e-12)
        assert tuple(res.permutation) == perm


def test_all_equal_costs_pick_identity():
    assert hungarian(np.ones((5, 5))).permutation.tolist() == list(range(5))
    uniform = np.full((4, 4), 0.25)
    assert assignment_from_probs(uniform).permutation.tolist() == [0, 1, 2, 3]


square_ints = st.integers(1, 7).flatmap(
    lambda n: arrays(np.float64, (n, n), elements=st.integers(0, 3).map(float))
)


@settings(max_examples=300)
@given(square_ints)
def test_tied_matrices_match_lexicographic_enumeration(C):
    cost, perm = enumerate_assignments(C)
    res = hungarian(C)
    assert res.total_cost == cost
    assert tuple(res.permutation) == perm


@settings(max_examples=100)
@given(arrays(np.float64, (5, 5), elements=st.floats(-50, 50)))
def test_brute_force_agrees_with_hungarian(C):
    a, b = hungarian(C), brute_force_assignment(C)
    assert a.permutation == b.permutation
    assert a.total_cost == b.total_cost


def test_cost_matches_scipy_on_larger_matrices():
    rng = np.random.default_rng(1)
    for n in (10, 25, 40):
        C = rng.normal(size=(n, n))
        rows, cols = linear_sum_assignment(C)
        assert hungarian(C).total_cost == pytest.approx(C[rows, cols].sum(), abs=1e-9)


def test_row_permutation_symmetry():
    rng = np.random.default_rng(2)
    C = rng.uniform(size=(6, 6))
    shuffle = rng.permutation(6)
    base = hungarian(C).permutation.mapping
    moved = hungarian(C[shuffle]).permutation.mapping
    np.testing.assert_array_equal(moved, base[shuffle])


def test_row_scaling_leaves_decoding_unchanged():
    rng = np.random.default_rng(3)
    P = rng.dirichlet(np.ones(6), size=6)
    scaled = P * rng.uniform(0.5, 3.0, size=(6, 1))
    assert assignment_from_probs(P).permutation == assignment_from_probs(scaled).permutation


def test_rejects_bad_matrices():
    for bad in (np.ones((2, 3)), np.zeros((0, 0)), np.array([[np.inf]])):
        with pytest.raises(ValidationError):
            hungarian(bad)
    with pytest.raises(ValidationError):
        brute_force_assignment(np.ones((10, 10)))


def test_checksum_tracks_matrix():
    C = np.arange(9.0).reshape(3, 3)
    assert hungarian(C).matrix_checksum == hungarian(C.copy()).matrix_checksum
    assert hungarian(C).matrix_checksum != hungarian(C + 1).matrix_checksum


@pytest.mark.parametrize("n", range(2, 9))
def test_decode_assign_recovers_sigma_star(n):
    for seed in range(5):
        cands, oracle, rel = oracle_window(n, seed=seed)
        counter = CountingProvider(oracle)
        assert decode_assign(cands, counter).tolist() == sigma_star(rel)
        assert counter.calls == 1


def test_oracle_optimum_is_sigma_star_by_enumeration():
    """The oracle's cost matrix has sigma* as its unique brute-force optimum."""
    from diffurank.core import cost_matrix
    from diffurank.provider import MaskQuery, PromptContext, Strategy

    for seed in range(10):
        cands, oracle, rel = oracle_window(7, seed=seed)
        ctx = PromptContext.from_candidates(Strategy.PERMUTATION, cands)
        P = oracle.provide(ctx, MaskQuery(tuple(range(7)), cands.labels)).rows
        _, perm = enumerate_assignments(cost_matrix(P))
        assert list(perm) == sigma_star(rel)
