import numpy as np
import pytest

from semlc.errors import ShapeMismatch, UnstableOperator
from semlc.operators import (
    apply_equilibrium_dense,
    apply_equilibrium_fft,
    apply_equilibrium_fft_adjoint,
    build_circulant,
    circulant_first_column,
    equilibrium_backward,
    equilibrium_param_backward,
)
from semlc.profiles import RICKER, ProfileParams, discretize, free_profile

import oracles


def _free(weights, sigma=3.0, delta=0.2):
    weights = np.asarray(weights, dtype=np.float64)
    return free_profile(weights, ProfileParams(sigma, delta, len(weights)))


# profile with weights [0, 0.1, 0, 0.1] by circulant offset 0..3
HAND_F4 = [0.0, 0.1, 0.0, 0.1]


def _hand_u4():
    row0 = np.array(HAND_F4)
    u = np.empty((4, 4))
    for i in range(4):
        for j in range(4):
            u[i, j] = row0[(j - i) % 4]
    return u


def test_zero_profile_gives_identity_equilibrium():
    op = build_circulant(_free(np.zeros(6)))
    assert op.stable
    np.testing.assert_array_equal(op.u_matrix, np.zeros((6, 6)))
    np.testing.assert_allclose(op.q_matrix, np.eye(6), atol=1e-15)


def test_circulant_closure_and_zero_diagonal():
    profile = discretize(ProfileParams(3.0, 0.2, 16), RICKER)
    op = build_circulant(profile)
    u = op.u_matrix
    for i in range(16):
        assert u[i, i] == 0.0
        for j in range(16):
            assert u[i, j] == u[0, (j - i) % 16]


def test_first_row_is_profile_rotated_to_diagonal():
    profile = discretize(ProfileParams(3.0, 0.2, 9), RICKER)
    op = build_circulant(profile)
    # row 0, column j holds the weight at circulant offset j
    expected = np.roll(profile.weights, -profile.center)
    np.testing.assert_array_equal(op.u_matrix[0], expected)


def test_hand_f4_equilibrium_matches_adjugate_inverse():
    op = build_circulant(_free(HAND_F4))
    np.testing.assert_array_equal(op.u_matrix, _hand_u4())
    oracle_q = oracles.inverse_adjugate(np.eye(4) - _hand_u4())
    np.testing.assert_allclose(op.q_matrix, oracle_q, atol=1e-12)


def test_shipped_configuration_is_stable():
    profile = discretize(ProfileParams(3.0, 0.2, 64), RICKER)
    op = build_circulant(profile)
    assert op.stable
    assert op.spectrum.real.max() < 1.0


def test_spectrum_matches_dense_eigensolver():
    rng = np.random.default_rng(3)
    for f in (4, 8, 16):
        profile = _free(np.where(np.arange(f) == f // 2, 0.0, rng.normal(0, 0.05, f)))
        op = build_circulant(profile, require_stable=False)
        dense_eigs = np.linalg.eigvals(op.u_matrix)
        remaining = list(op.spectrum)
        for eig in dense_eigs:  # greedy multiset match
            gaps = [abs(eig - r) for r in remaining]
            k = int(np.argmin(gaps))
            assert gaps[k] < 1e-8
            remaining.pop(k)


def test_dense_apply_inverse_consistency():
    rng = np.random.default_rng(5)
    profile = discretize(ProfileParams(3.0, 0.2, 16), RICKER)
    op = build_circulant(profile)
    z_hat = rng.standard_normal((16, 7))
    out = apply_equilibrium_dense(op, z_hat)
    np.testing.assert_allclose((np.eye(16) - op.u_matrix) @ out, z_hat, atol=1e-10)


def test_dense_apply_standard_basis_picks_q_column():
    op = build_circulant(_free(HAND_F4))
    e1 = np.zeros((4, 1))
    e1[0, 0] = 1.0
    np.testing.assert_allclose(apply_equilibrium_dense(op, e1)[:, 0], op.q_matrix[:, 0])


def test_fft_identity_for_zero_profile():
    profile = _free(np.zeros(8))
    z_hat = np.random.default_rng(0).standard_normal((8, 3))
    np.testing.assert_allclose(apply_equilibrium_fft(profile, z_hat), z_hat, atol=1e-12)


def test_fft_hand_f4_matches_adjugate_inverse():
    profile = _free(HAND_F4)
    oracle_q = oracles.inverse_adjugate(np.eye(4) - _hand_u4())
    z_hat = np.eye(4)
    np.testing.assert_allclose(apply_equilibrium_fft(profile, z_hat), oracle_q, atol=1e-10)


def test_fft_matches_dense_across_random_profiles():
    rng = np.random.default_rng(9)
    for _ in range(25):
        f = int(rng.choice([4, 8, 16, 64]))
        sigma = rng.uniform(1.0, 10.0)
        delta = rng.uniform(0.01, 0.5)
        profile = discretize(ProfileParams(sigma, delta, f), RICKER)
        op = build_circulant(profile, require_stable=False)
        if not op.stable:
            continue
        z_hat = rng.standard_normal((f, 6))
        dense = apply_equilibrium_dense(op, z_hat)
        fft = apply_equilibrium_fft(profile, z_hat)
        assert np.max(np.abs(dense - fft)) < 1e-8


def test_backward_is_exact_adjoint():
    rng = np.random.default_rng(13)
    profile = discretize(ProfileParams(3.0, 0.2, 16), RICKER)
    op = build_circulant(profile)
    a = rng.standard_normal((16, 4))
    b = rng.standard_normal((16, 4))
    lhs = np.sum(apply_equilibrium_dense(op, a) * b)
    rhs = np.sum(a * equilibrium_backward(op, b))
    assert lhs == pytest.approx(rhs, abs=1e-10)


def test_backward_identity_for_zero_profile():
    op = build_circulant(_free(np.zeros(5)))
    g = np.random.default_rng(1).standard_normal((5, 2))
    np.testing.assert_allclose(equilibrium_backward(op, g), g, atol=1e-15)


def test_backward_equals_forward_for_symmetric_profile():
    # symmetric profile with odd f makes U (hence Q) symmetric
    profile = discretize(ProfileParams(2.0, 0.3, 9), RICKER)
    op = build_circulant(profile)
    g = np.random.default_rng(2).standard_normal((9, 3))
    np.testing.assert_allclose(
        equilibrium_backward(op, g), apply_equilibrium_dense(op, g), atol=1e-12
    )


def test_backward_matches_finite_differences():
    rng = np.random.default_rng(17)
    profile = discretize(ProfileParams(2.5, 0.25, 8), RICKER)
    op = build_circulant(profile)
    z_hat = rng.standard_normal((8, 3))
    target = rng.standard_normal((8, 3))

    def loss(z_hat_probe):
        out = apply_equilibrium_dense(op, z_hat_probe)
        return 0.5 * float(np.sum((out - target) ** 2))

    grad_out = apply_equilibrium_dense(op, z_hat) - target
    analytic = equilibrium_backward(op, grad_out)
    fd = oracles.central_difference(loss, z_hat)
    np.testing.assert_allclose(analytic, fd, rtol=1e-5, atol=1e-9)


def test_param_backward_zero_grad_and_center():
    op = build_circulant(_free(HAND_F4))
    z_hat = np.random.default_rng(0).standard_normal((4, 3))
    grad = equilibrium_param_backward(op, z_hat, np.zeros((4, 3)))
    np.testing.assert_array_equal(grad, np.zeros(4))
    grad = equilibrium_param_backward(op, z_hat, np.ones((4, 3)))
    assert grad[2] == 0.0  # center weight stays clamped


def test_param_backward_matches_finite_differences():
    rng = np.random.default_rng(23)
    f = 4
    base = np.where(np.arange(f) == f // 2, 0.0, rng.normal(0.0, 0.1, f))
    z_hat = rng.standard_normal((f, 3))
    target = rng.standard_normal((f, 3))

    def loss_for_weights(weights):
        op = build_circulant(_free(weights))
        out = apply_equilibrium_dense(op, z_hat)
        return 0.5 * float(np.sum((out - target) ** 2))

    op = build_circulant(_free(base))
    grad_out = apply_equilibrium_dense(op, z_hat) - target
    analytic = equilibrium_param_backward(op, z_hat, grad_out)
    fd = oracles.central_difference(loss_for_weights, base, step=1e-6)
    fd[f // 2] = 0.0  # oracle perturbs the clamped entry; the layer cannot
    np.testing.assert_allclose(analytic, fd, rtol=1e-4, atol=1e-10)


def test_unstable_profile_rejected():
    # inflate a wavelet until its spectrum crosses the boundary
    base = discretize(ProfileParams(3.0, 0.2, 16), RICKER)
    inflated = _free(base.weights * 4.0)
    op_unchecked = build_circulant(inflated, require_stable=False)
    assert not op_unchecked.stable
    assert np.max(np.fft.fft(circulant_first_column(inflated)).real) > 1.0
    with pytest.raises(UnstableOperator):
        build_circulant(inflated)
    assert op_unchecked.q_matrix is None
    with pytest.raises(UnstableOperator):
        apply_equilibrium_dense(op_unchecked, np.zeros((16, 1)))
    with pytest.raises(UnstableOperator):
        apply_equilibrium_fft(inflated, np.zeros((16, 1)))


def test_shape_mismatch():
    op = build_circulant(_free(HAND_F4))
    with pytest.raises(ShapeMismatch):
        apply_equilibrium_dense(op, np.zeros((5, 2)))
    with pytest.raises(ShapeMismatch):
        equilibrium_param_backward(op, np.zeros((4, 2)), np.zeros((4, 3)))


def test_fft_adjoint_identity():
    rng = np.random.default_rng(31)
    profile = discretize(ProfileParams(3.0, 0.2, 16), RICKER)
    a = rng.standard_normal((16, 5))
    b = rng.standard_normal((16, 5))
    lhs = np.sum(apply_equilibrium_fft(profile, a) * b)
    rhs = np.sum(a * apply_equilibrium_fft_adjoint(profile, b))
    assert lhs == pytest.approx(rhs, abs=1e-10)


def test_first_column_alignment():
    profile = discretize(ProfileParams(3.0, 0.2, 9), RICKER)
    op = build_circulant(profile)
    np.testing.assert_array_equal(circulant_first_column(profile), op.u_matrix[:, 0])
