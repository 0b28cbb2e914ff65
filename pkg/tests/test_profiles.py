import json

import numpy as np
import pytest

from semlc.errors import LengthTooSmall
from semlc.profiles import (
    FREE,
    GAUSSIAN,
    RICKER,
    ConnectivityProfile,
    ProfileParams,
    center_index,
    discretize,
    free_profile,
    profile_gradient,
    profile_offsets,
    ricker,
)

import oracles


def test_ricker_zero_crossing_at_sigma():
    for sigma, delta in [(3.0, 0.2), (1.0, 0.5), (7.5, 0.05)]:
        params = ProfileParams(sigma, delta, 9)
        assert ricker(sigma, params) == pytest.approx(0.0, abs=1e-15)
        assert ricker(-sigma, params) == pytest.approx(0.0, abs=1e-15)


def test_ricker_peak_value():
    # 2*0.2 / (sqrt(9) * pi**0.25), evaluated independently at high precision
    assert ricker(0.0, ProfileParams(3.0, 0.2, 9)) == pytest.approx(
        0.100150072595325664, abs=1e-15
    )


def test_ricker_even_symmetry():
    params = ProfileParams(2.7, 0.31, 9)
    xs = np.random.default_rng(7).uniform(0.0, 12.0, size=50)
    np.testing.assert_allclose(ricker(xs, params), ricker(-xs, params), rtol=0, atol=1e-16)


def test_ricker_matches_independent_scalar_evaluation():
    params = ProfileParams(3.0, 0.2, 9)
    for x in np.linspace(-6, 6, 25):
        assert ricker(float(x), params) == pytest.approx(
            oracles.ricker_scalar(float(x), 3.0, 0.2), rel=1e-14, abs=1e-16
        )


def test_discretize_ricker_sign_pattern():
    profile = discretize(ProfileParams(3.0, 0.2, 9), RICKER)
    c = profile.center
    assert profile.weights[c] == 0.0
    for off in (1, 2):
        assert profile.weights[c + off] > 0.0
        assert profile.weights[c - off] > 0.0
    assert profile.weights[c + 4] < 0.0
    assert profile.weights[c - 4] < 0.0
    # each sampled weight equals the independent scalar evaluation
    for i, off in enumerate(profile_offsets(9)):
        if off == 0:
            continue
        assert profile.weights[i] == pytest.approx(
            oracles.ricker_scalar(float(off), 3.0, 0.2), rel=1e-14
        )


def test_discretize_gaussian_all_positive_off_center():
    profile = discretize(ProfileParams(3.0, 0.2, 9), GAUSSIAN)
    mask = np.ones(9, dtype=bool)
    mask[profile.center] = False
    assert np.all(profile.weights[mask] > 0.0)
    assert profile.weights[profile.center] == 0.0


@pytest.mark.parametrize("length", [2, 5, 8, 9, 16, 64])
@pytest.mark.parametrize("kind", [RICKER, GAUSSIAN])
def test_discretize_center_always_zero(length, kind):
    profile = discretize(ProfileParams(3.0, 0.2, length), kind)
    assert profile.weights[center_index(length)] == 0.0
    assert profile.length == length


def test_even_length_offsets_are_asymmetric_by_one():
    assert profile_offsets(8).tolist() == [-4, -3, -2, -1, 0, 1, 2, 3]
    assert profile_offsets(9).tolist() == [-4, -3, -2, -1, 0, 1, 2, 3, 4]


def test_discretize_is_deterministic():
    a = discretize(ProfileParams(4.2, 0.17, 31), RICKER)
    b = discretize(ProfileParams(4.2, 0.17, 31), RICKER)
    assert a.weights.tobytes() == b.weights.tobytes()


def test_sign_pattern_property():
    rng = np.random.default_rng(11)
    for _ in range(20):
        sigma = rng.uniform(1.0, 6.0)
        length = int(2 * sigma + 3 + rng.integers(0, 10))
        profile = discretize(ProfileParams(sigma, 0.3, length), RICKER)
        for i, off in enumerate(profile_offsets(length)):
            if off == 0:
                continue
            if abs(off) < sigma:
                assert profile.weights[i] > 0.0
            elif abs(off) > sigma:
                assert profile.weights[i] < 0.0


def test_params_validation():
    with pytest.raises(ValueError):
        ProfileParams(0.0, 0.2, 9)
    with pytest.raises(ValueError):
        ProfileParams(3.0, 0.0, 9)
    with pytest.raises(ValueError):
        ProfileParams(3.0, 1.0, 9)
    with pytest.raises(LengthTooSmall):
        ProfileParams(3.0, 0.2, 1)


def test_discretize_rejects_free_kind():
    with pytest.raises(ValueError):
        discretize(ProfileParams(3.0, 0.2, 9), FREE)


def test_gradient_delta_is_linear():
    params = ProfileParams(3.0, 0.2, 11)
    for kind in (RICKER, GAUSSIAN):
        profile = discretize(params, kind)
        _, d_delta = profile_gradient(params, kind)
        mask = np.arange(11) != profile.center
        np.testing.assert_allclose(
            d_delta[mask], profile.weights[mask] / params.delta, rtol=1e-12
        )


def test_gradient_center_is_clamped():
    d_sigma, d_delta = profile_gradient(ProfileParams(3.0, 0.2, 8), RICKER)
    assert d_sigma[4] == 0.0
    assert d_delta[4] == 0.0


@pytest.mark.parametrize("kind", [RICKER, GAUSSIAN])
@pytest.mark.parametrize("sigma,delta,length", [(3.0, 0.2, 9), (1.5, 0.45, 12), (6.0, 0.08, 17)])
def test_gradient_matches_finite_differences(kind, sigma, delta, length):
    step = 1e-5
    d_sigma, d_delta = profile_gradient(ProfileParams(sigma, delta, length), kind)
    fd_sigma = (
        discretize(ProfileParams(sigma + step, delta, length), kind).weights
        - discretize(ProfileParams(sigma - step, delta, length), kind).weights
    ) / (2 * step)
    fd_delta = (
        discretize(ProfileParams(sigma, delta + step, length), kind).weights
        - discretize(ProfileParams(sigma, delta - step, length), kind).weights
    ) / (2 * step)
    np.testing.assert_allclose(d_sigma, fd_sigma, rtol=1e-4, atol=1e-12)
    np.testing.assert_allclose(d_delta, fd_delta, rtol=1e-4, atol=1e-12)


def test_sigma_gradient_at_offset_one_matches_fd():
    step = 1e-5
    d_sigma, _ = profile_gradient(ProfileParams(3.0, 0.2, 9), RICKER)
    hi = oracles.ricker_scalar(1.0, 3.0 + step, 0.2)
    lo = oracles.ricker_scalar(1.0, 3.0 - step, 0.2)
    assert d_sigma[5] == pytest.approx((hi - lo) / (2 * step), rel=1e-5)


def test_free_profile_forces_center_zero():
    params = ProfileParams(3.0, 0.2, 5)
    profile = free_profile(np.array([1.0, 2.0, 3.0, 4.0, 5.0]), params)
    assert profile.kind == FREE
    assert profile.weights[2] == 0.0
    assert profile.weights[0] == 1.0


def test_json_roundtrip():
    profile = discretize(ProfileParams(3.0, 0.2, 16), RICKER)
    text = profile.to_json()
    record = json.loads(text)
    assert record["kind"] == RICKER
    assert record["length"] == 16
    restored = ConnectivityProfile.from_json(text)
    np.testing.assert_array_equal(restored.weights, profile.weights)
    assert restored.params == profile.params
