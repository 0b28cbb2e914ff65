import json

import numpy as np
import pytest

from semlc.analysis import (
    OrderReport,
    correlation_profile,
    msd,
    order_metric,
    order_report,
    pairwise_msd,
    tour_length,
    two_opt_order,
)
from semlc.errors import LengthTooSmall, ShapeMismatch, ZeroNormFilter
from semlc.net import FilterBank

import oracles


def _scalar_bank(values):
    values = np.asarray(values, dtype=np.float64)
    return FilterBank(values.reshape(-1, 1, 1, 1), np.zeros(len(values)))


def _vector_bank(rows):
    rows = np.asarray(rows, dtype=np.float64)
    f, d = rows.shape
    return FilterBank(rows.reshape(f, 1, 1, d), np.zeros(f))


def _ring_bank(f, radius=1.0):
    """Filters on a feature ring: equally spaced unit 2-vectors, so MSD
    grows monotonically with circular offset and the native order is an
    optimal tour."""
    angles = 2.0 * np.pi * np.arange(f) / f
    return _vector_bank(radius * np.stack([np.cos(angles), np.sin(angles)], axis=1))


def _random_bank(rng, f, shape=(2, 3, 3)):
    return FilterBank(rng.standard_normal((f, *shape)), rng.standard_normal(f))


# ------------------------------------------------------------------ msd

def test_msd_trivials():
    a = np.random.default_rng(0).standard_normal((2, 3, 3))
    assert msd(a, a) == 0.0
    assert msd(np.zeros(2), np.ones(2)) == 1.0


def test_msd_matches_loop_oracle():
    rng = np.random.default_rng(1)
    for _ in range(5):
        a = rng.standard_normal((3, 4, 4))
        b = rng.standard_normal((3, 4, 4))
        assert msd(a, b) == pytest.approx(oracles.msd_loops(a, b), abs=1e-12)


def test_msd_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        msd(np.zeros(3), np.zeros(4))


# ------------------------------------------------------------------ order metric

def test_order_metric_degenerate_bank():
    bank = _scalar_bank([2.5, 2.5, 2.5, 2.5])
    assert order_metric(bank) == (0.0, 0.0, 0.0)


def test_order_metric_hand_example():
    # scalars [0, 1, 2, 10]: all pairs {1,4,100,1,81,64}, adjacent {1,1,64,100}
    all_pair, adjacent, reduction = order_metric(_scalar_bank([0.0, 1.0, 2.0, 10.0]))
    assert all_pair == pytest.approx(251.0 / 6.0)
    assert adjacent == pytest.approx(41.5)
    assert reduction == pytest.approx(100.0 * (251.0 / 6.0 - 41.5) / (251.0 / 6.0))
    assert reduction == pytest.approx(0.80, abs=0.005)


def test_order_metric_matches_loop_oracle():
    rng = np.random.default_rng(2)
    for f in (3, 5, 16):
        bank = _random_bank(rng, f)
        got = order_metric(bank)
        expected = oracles.order_metric_loops(list(bank.weights))
        np.testing.assert_allclose(got, expected, rtol=1e-10, atol=1e-10)


def test_order_metric_rotation_invariant():
    rng = np.random.default_rng(3)
    bank = _random_bank(rng, 8)
    base = order_metric(bank)
    for shift in (1, 3, 5):
        rolled = FilterBank(np.roll(bank.weights, shift, axis=0), np.roll(bank.bias, shift))
        np.testing.assert_allclose(order_metric(rolled), base, rtol=1e-12)


def test_order_metric_needs_three_filters():
    with pytest.raises(LengthTooSmall):
        order_metric(_scalar_bank([1.0, 2.0]))


# ------------------------------------------------------------------ 2-opt

def test_two_opt_recovers_exhaustive_optimum_from_spec_bank():
    bank = _scalar_bank([0.0, 3.0, 1.0, 4.0, 2.0])
    tour = two_opt_order(bank, threshold=0.0)
    distances = pairwise_msd(bank)
    best_len, _ = oracles.best_tour_exhaustive(distances)
    assert tour_length(distances, tour) == pytest.approx(best_len)


def test_two_opt_identity_for_ring_sorted_bank():
    for f in (5, 8, 12):
        bank = _ring_bank(f)
        distances = pairwise_msd(bank)
        # the native ring order admits no improving reversal (verified by
        # brute force over all O(f^2) segment reversals)
        assert not oracles.has_improving_reversal(distances, list(range(f)))
        assert two_opt_order(bank, threshold=0.0) == tuple(range(f))


def test_two_opt_infinite_threshold_is_identity():
    bank = _scalar_bank([5.0, 1.0, 4.0, 2.0, 8.0])
    assert two_opt_order(bank, threshold=np.inf) == tuple(range(5))


def test_two_opt_never_increases_length():
    rng = np.random.default_rng(4)
    for _ in range(20):
        f = int(rng.integers(4, 10))
        bank = _scalar_bank(rng.standard_normal(f))
        distances = pairwise_msd(bank)
        native = tour_length(distances, list(range(f)))
        tour = two_opt_order(bank, threshold=0.0)
        assert tour_length(distances, tour) <= native + 1e-12
        assert sorted(tour) == list(range(f))


def test_two_opt_close_to_optimum_on_random_banks():
    rng = np.random.default_rng(5)
    for f in (5, 6):
        for _ in range(50):
            bank = _scalar_bank(rng.standard_normal(f))
            distances = pairwise_msd(bank)
            best_len, _ = oracles.best_tour_exhaustive(distances)
            got = tour_length(distances, two_opt_order(bank, threshold=0.0))
            assert got <= best_len * 1.05 + 1e-12


def test_two_opt_validation():
    with pytest.raises(LengthTooSmall):
        two_opt_order(_scalar_bank([0.0, 1.0]), 0.0)
    with pytest.raises(ValueError):
        two_opt_order(_scalar_bank([0.0, 1.0, 2.0]), -1.0)


# ------------------------------------------------------------------ correlation profile

def test_correlation_center_is_one():
    rng = np.random.default_rng(6)
    profile = correlation_profile(_random_bank(rng, 8))
    assert profile[4] == pytest.approx(1.0, abs=1e-9)


def test_correlation_orthogonal_bank():
    bank = _vector_bank(np.eye(4))
    profile = correlation_profile(bank)
    expected = np.zeros(4)
    expected[2] = 1.0
    np.testing.assert_allclose(profile, expected, atol=1e-12)


def test_correlation_hand_example():
    # two pairs of identical 2-vectors: offsets +-1 average 0.5, +-2 average 0
    bank = _vector_bank([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
    profile = correlation_profile(bank)
    np.testing.assert_allclose(profile, [0.0, 0.5, 1.0, 0.5], atol=1e-12)


def test_correlation_matches_loop_oracle():
    rng = np.random.default_rng(7)
    for f in (4, 7, 16):
        bank = _random_bank(rng, f)
        np.testing.assert_allclose(
            correlation_profile(bank),
            oracles.correlation_loops(list(bank.weights)),
            atol=1e-10,
        )


def test_correlation_reversed_bank_mirrors_profile():
    rng = np.random.default_rng(8)
    bank = _random_bank(rng, 6)
    reversed_bank = FilterBank(bank.weights[::-1].copy(), bank.bias[::-1].copy())
    prof = correlation_profile(bank)
    prof_rev = correlation_profile(reversed_bank)
    center = 3
    # circular values: reversed profile at offset m equals original at -m
    circ = np.roll(prof, -center)
    circ_rev = np.roll(prof_rev, -center)
    for m in range(6):
        assert circ_rev[m] == pytest.approx(circ[(6 - m) % 6], abs=1e-12)


def test_correlation_zero_norm_filter_reports_index():
    weights = np.random.default_rng(9).standard_normal((4, 1, 2, 2))
    weights[2] = 0.0
    with pytest.raises(ZeroNormFilter) as excinfo:
        correlation_profile(FilterBank(weights, np.zeros(4)))
    assert excinfo.value.index == 2


# ------------------------------------------------------------------ report

def test_order_report_fields_and_json():
    rng = np.random.default_rng(10)
    bank = _random_bank(rng, 6)
    report = order_report(bank, threshold=0.003)
    assert isinstance(report, OrderReport)
    record = json.loads(report.to_json())
    assert sorted(record["tour"]) == list(range(6))
    assert record["correlation_profile"][3] == pytest.approx(1.0, abs=1e-9)
    assert record["all_pair_msd"] >= 0.0
    assert record["adjacent_pair_msd"] >= 0.0
