import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diffurank.core import RankedList
from diffurank.errors import ValidationError
from diffurank.evaluation import (
    Qrels,
    correct_rate,
    filling_dynamics,
    ndcg_at_k,
    ndcg_from_grades,
    paired_ttest,
    write_dynamics_csv,
    write_metrics_csv,
)
from diffurank.sampler import SamplerConfig, SamplingMode, sample_permutation
from helpers import oracle_window
from oracles import ndcg_loop, paired_t_statistic, t_two_sided_p


def test_binary_example():
    expected = 1.5 / (1 + 1 / math.log2(3))
    assert ndcg_from_grades([1, 0, 1], [1, 0, 1], 3) == pytest.approx(expected)
    assert expected == pytest.approx(0.9197, abs=5e-5)


def test_all_relevant_and_none_relevant():
    assert ndcg_from_grades([1, 1, 1], [1, 1, 1, 1], 3) == 1.0
    assert ndcg_from_grades([0, 0], [0, 0], 10) == 0.0


def test_ideal_uses_every_judged_document():
    qrels = Qrels({("q", "a"): 0, ("q", "b"): 0, ("q", "z"): 3})
    run = RankedList.from_order("q", ["a", "b"])
    assert ndcg_at_k(run, qrels, 10) == 0.0
    assert ndcg_at_k(RankedList.from_order("other", ["a"]), qrels) == 0.0


def test_linear_gain():
    assert ndcg_from_grades([1, 2], [2, 1], 2, "linear") == pytest.approx(
        (1 + 2 / math.log2(3)) / (2 + 1 / math.log2(3))
    )


grades = st.lists(st.integers(0, 3), min_size=1, max_size=30)


@given(grades, st.integers(1, 15), st.randoms())
def test_ndcg_matches_loop_and_bounds(gs, k, rnd):
    ranked = list(gs)
    rnd.shuffle(ranked)
    value = ndcg_from_grades(ranked, gs, k)
    assert value == pytest.approx(ndcg_loop(ranked, gs, k), abs=1e-12)
    assert 0.0 <= value <= 1.0 + 1e-12
    if any(gs):
        assert ndcg_from_grades(sorted(gs, reverse=True), gs, k) == pytest.approx(1.0)


def test_qrels_rejects_bad_judgments():
    q = Qrels()
    q.add("q", "d", 1)
    with pytest.raises(ValidationError):
        q.add("q", "d", 2)
    with pytest.raises(ValidationError):
        q.add("q", "e", -1)
    assert q.grade("q", "d") == 1 and q.grade("q", "nope") == 0 and len(q) == 1


def test_correct_rate_counting():
    assert correct_rate([True, True, False, True]) == 75.0
    assert correct_rate([]) is None


def test_identical_samples_give_p_one():
    a = [0.3, 0.5, 0.9, 0.1]
    assert paired_ttest(a, a) == (0.0, 1.0)


def test_constant_shift_gives_p_zero():
    t, p = paired_ttest([1.0, 2.0, 3.0], [0.5, 1.5, 2.5])
    assert p == 0.0 and t == math.inf


def test_worked_difference_vector():
    d = [1.0, -1.0, 2.0, 0.0, 1.0]
    t, p = paired_ttest(d, [0.0] * 5)
    assert t == pytest.approx(paired_t_statistic(d, [0.0] * 5), abs=1e-12)
    assert p == pytest.approx(t_two_sided_p(t, 4), abs=1e-6)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 40), st.integers(0, 2**32 - 1))
def test_ttest_against_quadrature(n, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=n), rng.normal(0.3, 1.0, size=n)
    t, p = paired_ttest(a, b)
    assert abs(p - t_two_sided_p(t, n - 1)) < 1e-6
    t2, p2 = paired_ttest(b, a)
    assert t2 == pytest.approx(-t) and p2 == pytest.approx(p)


def test_ttest_validation():
    with pytest.raises(ValidationError):
        paired_ttest([1.0], [2.0])
    with pytest.raises(ValidationError):
        paired_ttest([1.0, 2.0], [1.0])


def _traces(k, count, mode=SamplingMode.CONSTRAINED, **kw):
    out = []
    for seed in range(count):
        cands, oracle, _ = oracle_window(10, seed=seed, **kw)
        out.append(sample_permutation(cands, oracle, SamplerConfig(k, mode))[1])
    return out


def test_single_step_fills_everything_at_once():
    dyn = filling_dynamics(_traces(1, 5, gamma=2.0), 1)
    assert (dyn.preference == 1.0).all()


@pytest.mark.parametrize("mode", list(SamplingMode))
def test_dynamics_identities(mode):
    traces = _traces(4, 30, mode, gamma=3.0, beta=1.0)
    dyn = filling_dynamics(traces, 4)
    H, E = dyn.first_fill, dyn.eligible
    assert (H.sum(axis=0) == len(traces)).all()
    np.testing.assert_array_equal(E[1:], E[:-1] - H[:-1])
    last = E[-1] > 0
    assert (dyn.preference[-1][last] == 1.0).all()


def test_dynamics_k_mismatch():
    with pytest.raises(ValidationError):
        filling_dynamics(_traces(3, 2), 4)
    with pytest.raises(ValidationError):
        filling_dynamics([], 4)


def test_dynamics_csv_layout():
    dyn = filling_dynamics(_traces(2, 3), 2)
    buf = io.StringIO()
    write_dynamics_csv(buf, dyn)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "step,position,H,E,P"
    assert len(lines) == 1 + 2 * 10


def test_metrics_csv_summary():
    buf = io.StringIO()
    write_metrics_csv(buf, {"q1": 1.0, "q2": 0.5}, "ndcg@10", [("all", "ttest_p", 0.04)])
    assert buf.getvalue().splitlines() == [
        "query_id,metric,value",
        "q1,ndcg@10,1.000000",
        "q2,ndcg@10,0.500000",
        "all,ndcg@10,0.750000",
        "all,ttest_p,0.04",
    ]
