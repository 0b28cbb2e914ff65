"""Circulant channel-coupling matrix and its analytic equilibrium operator.

The profile defines a circulant matrix U acting along the channel axis
(circular convolution of every depth-column with the profile). For a
constant feed-forward drive z_hat, the coupled dynamics settle on the
fixed point z = Q z_hat with Q = (I - U)^-1, provided every eigenvalue of
U has real part below 1. Because U is circulant its spectrum is the DFT of
its first column, which also yields a second, frequency-domain route to
the same equilibrium.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch, UnstableOperator
from .profiles import ConnectivityProfile

# Reject profiles whose spectrum comes within this margin of the stability
# boundary Re(lambda) = 1, to guard the conditioning of (I - U)^-1.
STABILITY_MARGIN = 1e-6

# An FFT-path denominator 1 - DFT(u) below this magnitude means the solve
# is effectively singular.
DENOMINATOR_FLOOR = 1e-12


@dataclass(frozen=True)
class LateralOperator:
    """Circulant recurrence U with its equilibrium operator Q = (I - U)^-1.

    spectrum holds the eigenvalues of U (DFT of its first column).
    q_matrix is None when the operator is unstable.
    """

    u_matrix: np.ndarray
    q_matrix: np.ndarray | None
    spectrum: np.ndarray
    stable: bool

    @property
    def length(self) -> int:
        return self.u_matrix.shape[0]


def circulant_first_column(profile: ConnectivityProfile) -> np.ndarray:
    """First column of U: the profile indexed so row i feels weight
    w(offset i) from channel 0, i.e. u[i] = weights[(center - i) mod f]."""
    f = profile.length
    return profile.weights[(profile.center - np.arange(f)) % f]


def spectrum_of(profile: ConnectivityProfile) -> np.ndarray:
    """Eigenvalues of the circulant U for this profile."""
    return np.fft.fft(circulant_first_column(profile))


def is_stable(profile: ConnectivityProfile) -> bool:
    return bool(np.max(spectrum_of(profile).real) <= 1.0 - STABILITY_MARGIN)


def build_circulant(profile: ConnectivityProfile, require_stable: bool = True) -> LateralOperator:
    """Materialize U, its spectrum, and (when stable) Q for a profile.

    Row i of U is the profile rotated so its center weight lands on the
    diagonal, which makes U circulant with zero diagonal. Raises
    UnstableOperator when some eigenvalue's real part reaches 1 (up to the
    stability margin) unless require_stable=False, in which case the
    operator is returned with stable=False and q_matrix=None so callers
    (e.g. the dynamics integrator) can still probe the divergent system.
    """
    f = profile.length
    col = circulant_first_column(profile)
    idx = (np.arange(f)[:, None] - np.arange(f)[None, :]) % f
    u_matrix = col[idx]
    spectrum = np.fft.fft(col)
    max_real = float(np.max(spectrum.real))
    stable = max_real <= 1.0 - STABILITY_MARGIN
    if not stable:
        if require_stable:
            raise UnstableOperator(
                f"max Re(eigenvalue) = {max_real:.6g} reaches the stability "
                "boundary 1; shrink the damping factor delta"
            )
        return LateralOperator(u_matrix, None, spectrum, False)
    q_matrix = np.linalg.solve(np.eye(f) - u_matrix, np.eye(f))
    return LateralOperator(u_matrix, q_matrix, spectrum, True)


def _check_columns(op_length: int, z_hat: np.ndarray) -> np.ndarray:
    z_hat = np.asarray(z_hat, dtype=np.float64)
    if z_hat.ndim != 2 or z_hat.shape[0] != op_length:
        raise ShapeMismatch(
            f"expected a matrix of shape ({op_length}, m), got {z_hat.shape}"
        )
    return z_hat


def apply_equilibrium_dense(op: LateralOperator, z_hat: np.ndarray) -> np.ndarray:
    """Equilibrium response Q @ z_hat for a stack of depth-columns."""
    if not op.stable:
        raise UnstableOperator("operator is unstable; no equilibrium exists")
    z_hat = _check_columns(op.length, z_hat)
    return op.q_matrix @ z_hat


def equilibrium_backward(op: LateralOperator, grad_out: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. z_hat of a loss given its gradient w.r.t. Q z_hat."""
    if not op.stable:
        raise UnstableOperator("operator is unstable; no equilibrium exists")
    grad_out = _check_columns(op.length, grad_out)
    return op.q_matrix.T @ grad_out


def equilibrium_param_backward(
    op: LateralOperator, z_hat: np.ndarray, grad_out: np.ndarray
) -> np.ndarray:
    """Loss gradient w.r.t. each profile weight, by circulant offset.

    From Q = (I - U)^-1, a perturbation dU moves the equilibrium by
    Q dU (Q z_hat), so dL/dU = (Q^T G) (Q z_hat)^T; entries of U sharing a
    circulant offset share a profile weight and are summed. The center
    offset is clamped to 0 like the weight itself. The returned vector is
    indexed like profile.weights.
    """
    if not op.stable:
        raise UnstableOperator("operator is unstable; no equilibrium exists")
    z_hat = _check_columns(op.length, z_hat)
    grad_out = _check_columns(op.length, grad_out)
    if z_hat.shape != grad_out.shape:
        raise ShapeMismatch(f"z_hat {z_hat.shape} and grad_out {grad_out.shape} differ")
    f = op.length
    c = f // 2
    z = op.q_matrix @ z_hat
    du = (op.q_matrix.T @ grad_out) @ z.T
    # weight index p occupies positions (i, j) with j - i == p - c (mod f)
    rows = np.arange(f)[:, None]
    cols = (rows + (np.arange(f)[None, :] - c)) % f
    grad_w = du[rows, cols].sum(axis=0)
    grad_w[c] = 0.0
    return grad_w


def _fft_denominator(profile: ConnectivityProfile) -> np.ndarray:
    spectrum = np.fft.fft(circulant_first_column(profile))
    if np.max(spectrum.real) > 1.0 - STABILITY_MARGIN:
        raise UnstableOperator(
            "profile spectrum reaches the stability boundary; no equilibrium exists"
        )
    denom = 1.0 - spectrum
    if np.min(np.abs(denom)) < DENOMINATOR_FLOOR:
        raise UnstableOperator("near-zero FFT denominator 1 - DFT(u)")
    return denom


def apply_equilibrium_fft(profile: ConnectivityProfile, z_hat: np.ndarray) -> np.ndarray:
    """Equilibrium via frequency-domain deconvolution along the channel axis.

    Diagonalizing the circulant solve gives
    z = IDFT( DFT(z_hat) / (1 - DFT(u)) ) with u the first column of U.
    Agrees with the dense path; exists as its own route (and for the
    benchmark comparison).
    """
    z_hat = _check_columns(profile.length, z_hat)
    denom = _fft_denominator(profile)
    return np.real(np.fft.ifft(np.fft.fft(z_hat, axis=0) / denom[:, None], axis=0))


def apply_equilibrium_fft_adjoint(profile: ConnectivityProfile, grad_out: np.ndarray) -> np.ndarray:
    """Transpose of the FFT equilibrium map (backward pass of the FFT path)."""
    grad_out = _check_columns(profile.length, grad_out)
    denom = _fft_denominator(profile)
    return np.real(
        np.fft.ifft(np.fft.fft(grad_out, axis=0) * np.conj(1.0 / denom)[:, None], axis=0)
    )
