import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fpstream.core import (
    EstimatorConfig,
    FrequencyVector,
    StreamMeta,
    Update,
    alpha_for,
    apply_stream,
    apply_stream_arrays,
    default_reps,
    eta_for,
    exact_f2_l2,
    exact_fp,
)


def test_apply_stream_sums_deltas():
    f = apply_stream([(1, 1), (1, 1), (1, 1), (2, 1)], n=2)
    assert f.counts.tolist() == [3, 1]


def test_apply_stream_empty():
    f = apply_stream([], n=5)
    assert f.counts.tolist() == [0] * 5


def test_apply_stream_signed_cancellation():
    f = apply_stream([(5, 2), (5, -1)], n=5)
    assert f.count(5) == 1


def test_apply_stream_accepts_updates_and_bare_items():
    f = apply_stream([Update(3), 3, (3, 1)], n=4)
    assert f.count(3) == 3


def test_apply_stream_rejects_out_of_range():
    with pytest.raises(IndexError):
        apply_stream([(0, 1)], n=4)
    with pytest.raises(IndexError):
        apply_stream([(5, 1)], n=4)
    with pytest.raises(IndexError):
        apply_stream_arrays(np.array([7]), None, 4)


def test_exact_fp_examples():
    assert exact_fp(FrequencyVector(2, np.array([3, 1])), 3) == 28
    assert exact_fp(FrequencyVector(3), 4) == 0.0
    assert exact_fp(FrequencyVector(2, np.array([-2, 2])), 4) == 32


def test_exact_f2_l2_examples():
    assert exact_f2_l2(FrequencyVector(2, np.array([3, 4]))) == (25.0, 5.0)
    assert exact_f2_l2(FrequencyVector(3)) == (0.0, 0.0)
    f = FrequencyVector(100, np.ones(100, dtype=np.int64))
    assert exact_f2_l2(f) == (100.0, 10.0)


def test_exact_fp_fractional_p_precision():
    # reference via per-term high-precision sum
    rng = np.random.default_rng(0)
    counts = rng.integers(0, 1000, size=500)
    f = FrequencyVector(500, counts)
    got = exact_fp(f, 2.5)
    want = math.fsum(sorted(float(c) ** 2.5 for c in counts if c))
    assert abs(got - want) <= 1e-12 * want


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 20), st.integers(-3, 5)), max_size=60),
       st.randoms())
def test_fp_invariant_under_permutation(updates, rnd):
    shuffled = list(updates)
    rnd.shuffle(shuffled)
    for p in (2.5, 3.0):
        a = exact_fp(apply_stream(updates, 20), p)
        b = exact_fp(apply_stream(shuffled, 20), p)
        assert a == pytest.approx(b, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(1, 15), max_size=50))
def test_fp_homogeneous_in_counts(items):
    base = apply_stream([(i, 1) for i in items], 15)
    for p in (3, 4):
        f1 = exact_fp(base, p)
        for c in (1, 2, 3):
            scaled = FrequencyVector(15, base.counts * c)
            assert exact_fp(scaled, p) == pytest.approx(c**p * f1, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(1, 10), min_size=1, max_size=40),
       st.lists(st.integers(1, 10), max_size=20))
def test_fp_monotone_under_appends(items, extra):
    p = 3.0
    before = exact_fp(apply_stream([(i, 1) for i in items], 10), p)
    after = exact_fp(apply_stream([(i, 1) for i in items + extra], 10), p)
    assert after >= before


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(1, 30), max_size=80))
def test_insertion_only_counts_nonnegative_and_sum_to_length(items):
    f = apply_stream([(i, 1) for i in items], 30)
    assert np.all(f.counts >= 0)
    assert f.total() == len(items)


def test_stream_meta_validation():
    StreamMeta(n=16, m=100)
    with pytest.raises(ValueError):
        StreamMeta(n=16, m=5000)  # above n**3
    with pytest.raises(ValueError):
        StreamMeta(n=16, m=10, mode="bogus")
    with pytest.raises(ValueError):
        StreamMeta(n=0, m=0)
    meta = StreamMeta(n=4, m=100, poly_exponent=4)
    assert meta.m == 100


def test_estimator_config_defaults_and_invariants():
    cfg = EstimatorConfig(p=3.0, eps=0.25)
    assert cfg.resolved_gamma() == 2**11 // cfg.scaling.gamma_divisor
    paper = EstimatorConfig(p=3.0, eps=0.25, constants_mode="paper")
    assert paper.resolved_gamma() == 2**11
    m = 200_000
    alpha = cfg.resolved_alpha(m)
    assert 2.0**alpha > float(m) ** 3.0
    assert cfg.resolved_reps(4096) % 2 == 1
    assert paper.resolved_reps(4096) == default_reps(4096) == 9
    # eta strictly above its defining series
    for p in (2.5, 3.0, 4.0):
        ratio = 2.0 ** -(p / 16 - 0.125)
        series = sum(ratio**j for j in range(10_000))
        assert eta_for(p) > series


def test_estimator_config_rejects_bad_values():
    with pytest.raises(ValueError):
        EstimatorConfig(p=2.0, eps=0.25)
    with pytest.raises(ValueError):
        EstimatorConfig(p=3.0, eps=1.5)
    with pytest.raises(ValueError):
        EstimatorConfig(p=3.0, eps=0.25, reps_r=4)
    with pytest.raises(ValueError):
        EstimatorConfig(p=3.0, eps=0.25, alpha=3).resolved_alpha(10_000)


def test_alpha_for_covers_mp():
    for m, p in [(10, 3.0), (1000, 2.5), (10**6, 4.0)]:
        assert 2.0 ** alpha_for(m, p) > float(m) ** p
