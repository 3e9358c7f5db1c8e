import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from monocount.census import (Capture, Decision, EstimatorKind, StopConfig, all_estimates,
                              capture_variance, chapman, estimate, lincoln_petersen, schnabel,
                              stopping_decision)
from monocount.monodromy import LoopRecord

# hand-computed from the closed forms
LP_VAR = 11 * 11 * 5 * 5 / (6 * 6 * 7)  # 3025/252


def test_lincoln_petersen_hand_values():
    est = lincoln_petersen(Capture(10, 10, 5))
    assert est.beta == pytest.approx(20.0, abs=1e-12)
    assert est.variance == pytest.approx(3025 / 252, abs=1e-12)
    assert est.variance == pytest.approx(12.0040, abs=1e-4)
    half = 1.96 * math.sqrt(3025 / 252)
    assert est.ci_low == pytest.approx(20 - half, abs=1e-9)
    assert est.ci_high == pytest.approx(20 + half, abs=1e-9)
    assert est.ci_low == pytest.approx(13.209, abs=1e-3)
    assert est.ci_high == pytest.approx(26.791, abs=1e-3)


def test_chapman_hand_values():
    est = chapman(Capture(10, 10, 5))
    assert est.beta == pytest.approx(115 / 6, abs=1e-12)
    assert est.beta == pytest.approx(19.1667, abs=1e-4)
    assert est.variance == pytest.approx(LP_VAR, abs=1e-12)


def test_schnabel_hand_values():
    est = schnabel([Capture(10, 10, 5), Capture(15, 15, 9)])
    assert est.beta == pytest.approx(325 / 14, abs=1e-12)
    assert est.beta == pytest.approx(23.214, abs=1e-3)
    inv, sd = 14 / 325, math.sqrt(14) / 325
    assert est.variance == pytest.approx(sd**2, rel=1e-12)
    assert est.ci_low == pytest.approx(1 / (inv + 1.96 * sd), rel=1e-12)
    assert est.ci_high == pytest.approx(1 / (inv - 1.96 * sd), rel=1e-12)


def test_schnabel_window_keeps_latest():
    recs = [Capture(100, 100, 1), Capture(10, 10, 5), Capture(15, 15, 9)]
    assert schnabel(recs, window=2).beta == pytest.approx(325 / 14)
    assert schnabel(recs, window=3).beta == pytest.approx(10325 / 15)


def test_zero_recapture():
    rec = Capture(10, 9, 0)
    lp = lincoln_petersen(rec)
    assert not lp.defined
    assert (lp.ci_low, lp.ci_high) == (-math.inf, math.inf)
    assert chapman(rec).beta == pytest.approx(109.0)
    assert not schnabel([rec]).defined


def test_schnabel_upper_bound_unbounded():
    est = schnabel([Capture(3, 3, 1)])
    assert est.beta == pytest.approx(9)
    assert est.ci_high == math.inf
    assert 0 < est.ci_low < 9


def test_full_recapture_collapses():
    for est in all_estimates([Capture(7, 7, 7)]):
        assert est.beta == pytest.approx(7)
    assert capture_variance(7, 7, 7) == 0


def test_bad_input():
    with pytest.raises(ValueError):
        schnabel([])
    with pytest.raises(ValueError):
        schnabel([Capture(1, 1, 1)], window=0)
    with pytest.raises(ValueError):
        estimate(EstimatorKind.CHAPMAN, [])


def test_estimator_names():
    assert EstimatorKind.parse("lp") is EstimatorKind.LINCOLN_PETERSEN
    assert EstimatorKind.parse("Chapman") is EstimatorKind.CHAPMAN
    assert EstimatorKind.parse("schnabel") is EstimatorKind.SCHNABEL
    with pytest.raises(ValueError):
        EstimatorKind.parse("jolly-seber")


def test_stopping_policy():
    cfg = StopConfig(consecutive_no_new=3, max_loops=5)
    new = LoopRecord.from_counts(2, 2, 1)
    none = LoopRecord.from_counts(2, 2, 2)
    failed = LoopRecord.from_counts(2, 1, 1)
    assert stopping_decision([], cfg) is Decision.CONTINUE
    assert stopping_decision([new, none, none], cfg) is Decision.CONTINUE
    assert stopping_decision([new, none, none, none], cfg) is Decision.RUN_TRACE_TEST
    assert stopping_decision([new, failed, failed, failed], cfg) is Decision.CONTINUE
    assert stopping_decision([new, failed, none, failed], cfg) is Decision.RUN_TRACE_TEST
    assert stopping_decision([new] * 5, cfg) is Decision.ABORT
    assert stopping_decision([new, new, none, none, none], cfg) is Decision.RUN_TRACE_TEST


@st.composite
def captures(draw, max_size=500):
    n_start = draw(st.integers(1, max_size))
    n_end = draw(st.integers(1, n_start))
    m = draw(st.integers(1, n_end))
    return Capture(n_start, n_end, m)


@settings(max_examples=200)
@given(captures())
def test_symmetry(rec):
    swapped = Capture(rec.n_end, rec.n_start, rec.n_overlap)
    for f in (lincoln_petersen, chapman):
        a, b = f(rec), f(swapped)
        assert a.beta == pytest.approx(b.beta, rel=1e-12)
        assert a.variance == pytest.approx(b.variance, rel=1e-12, abs=1e-12)


@settings(max_examples=200)
@given(captures(), st.integers(2, 20))
def test_scale(rec, k):
    big = Capture(k * rec.n_start, k * rec.n_end, k * rec.n_overlap)
    assert lincoln_petersen(big).beta == pytest.approx(k * lincoln_petersen(rec).beta, rel=1e-12)
    assert schnabel([big]).beta == pytest.approx(k * schnabel([rec]).beta, rel=1e-12)


@settings(max_examples=200)
@given(captures())
def test_chapman_below_lincoln_petersen(rec):
    assert chapman(rec).beta <= lincoln_petersen(rec).beta + 1e-9


@settings(max_examples=200)
@given(st.lists(captures(), min_size=1, max_size=6), st.integers(1, 6))
def test_intervals_contain_point_estimates(recs, window):
    for est in all_estimates(recs, window):
        assert est.ci_low <= est.beta <= est.ci_high
    s = schnabel(recs, window)
    assert 0 < s.ci_low


@settings(max_examples=100)
@given(st.lists(captures(), min_size=2, max_size=4))
def test_schnabel_ignores_record_order(recs):
    a, b = schnabel(recs, len(recs)), schnabel(recs[::-1], len(recs))
    assert a.beta == pytest.approx(b.beta, rel=1e-12)


def test_schnabel_window_one_equals_lincoln_petersen():
    rng = np.random.default_rng(1000)
    for _ in range(1000):
        n_start = int(rng.integers(1, 2000))
        n_end = int(rng.integers(1, n_start + 1))
        m = int(rng.integers(1, n_end + 1))
        rec = Capture(n_start, n_end, m)
        assert abs(schnabel([Capture(5, 5, 1), rec], window=1).beta - lincoln_petersen(rec).beta) <= 1e-9


@settings(max_examples=200)
@given(captures())
def test_estimate_not_below_observed(rec):
    for f in (lincoln_petersen, chapman):
        assert f(rec).beta >= max(rec.n_start, rec.n_end) - 1e-9
