"""Channel-interaction layers for feature tensors (B, f, H, W).

The lateral-connectivity layer applies the equilibrium operator Q to every
depth-column of a feature tensor, in four flavors distinguished by what is
trainable:

    fixed       Ricker profile, frozen        (0 extra parameters)
    gaussian    Gaussian control, frozen      (0 extra parameters)
    adaptive    the f-1 non-center weights    (f-1 extra parameters)
    parametric  the wavelet's sigma and delta (2 extra parameters)

Local response normalization is included as the connectivity-free
comparator. All forward/backward functions are pure with respect to a
layer's frozen parameter snapshot.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch
from .operators import (
    LateralOperator,
    apply_equilibrium_dense,
    build_circulant,
    equilibrium_backward,
    equilibrium_param_backward,
)
from .profiles import (
    GAUSSIAN,
    RICKER,
    ConnectivityProfile,
    ProfileParams,
    discretize,
    free_profile,
    profile_gradient,
)

FIXED = "fixed"
ADAPTIVE = "adaptive"
PARAMETRIC = "parametric"
GAUSSIAN_VARIANT = "gaussian"
VARIANTS = (FIXED, ADAPTIVE, PARAMETRIC, GAUSSIAN_VARIANT)


@dataclass(frozen=True)
class SemlcLayer:
    """A lateral-connectivity stage: variant, profile, and the operator
    built from that profile. Rebuild (never mutate) after any parameter
    update so the operator always matches the profile."""

    variant: str
    profile: ConnectivityProfile
    operator: LateralOperator

    @property
    def length(self) -> int:
        return self.profile.length


def make_semlc_layer(variant: str, sigma: float, delta: float, length: int) -> SemlcLayer:
    """Build a layer from wavelet parameters. The adaptive variant starts
    from the Ricker initialization; its weights become free afterwards."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    params = ProfileParams(sigma, delta, length)
    kind = GAUSSIAN if variant == GAUSSIAN_VARIANT else RICKER
    profile = discretize(params, kind)
    return SemlcLayer(variant, profile, build_circulant(profile))


def non_center_weights(profile: ConnectivityProfile) -> np.ndarray:
    """The f-1 profile weights excluding the clamped center."""
    return np.delete(profile.weights, profile.center)


def insert_center_zero(weights: np.ndarray, length: int) -> np.ndarray:
    """Inverse of non_center_weights: rebuild the full length-f vector."""
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (length - 1,):
        raise ShapeMismatch(f"expected {length - 1} non-center weights, got {weights.shape}")
    return np.insert(weights, length // 2, 0.0)


def with_weights(layer: SemlcLayer, weights: np.ndarray) -> SemlcLayer:
    """Adaptive update: replace the f-1 non-center weights and rebuild.

    Raises UnstableOperator if the new profile crosses the stability
    boundary; the caller decides how to back off.
    """
    if layer.variant != ADAPTIVE:
        raise ValueError(f"weights are only trainable on the adaptive variant, not {layer.variant!r}")
    full = insert_center_zero(weights, layer.length)
    profile = free_profile(full, layer.profile.params)
    return SemlcLayer(layer.variant, profile, build_circulant(profile))


def with_wavelet_params(layer: SemlcLayer, sigma: float, delta: float) -> SemlcLayer:
    """Parametric update: re-discretize the wavelet at (sigma, delta)."""
    if layer.variant != PARAMETRIC:
        raise ValueError(f"(sigma, delta) are only trainable on the parametric variant, not {layer.variant!r}")
    params = ProfileParams(sigma, delta, layer.length)
    profile = discretize(params, RICKER)
    return SemlcLayer(layer.variant, profile, build_circulant(profile))


def trainable_parameters(layer: SemlcLayer) -> dict[str, np.ndarray]:
    """Parameter ledger: what this variant adds to a network."""
    if layer.variant == ADAPTIVE:
        return {"weights": non_center_weights(layer.profile)}
    if layer.variant == PARAMETRIC:
        return {
            "sigma": np.asarray(layer.profile.params.sigma, dtype=np.float64),
            "delta": np.asarray(layer.profile.params.delta, dtype=np.float64),
        }
    return {}


def _check_feature_tensor(length: int, z: np.ndarray) -> np.ndarray:
    z = np.asarray(z)
    if z.ndim != 4:
        raise ShapeMismatch(f"expected a (B, f, H, W) tensor, got shape {z.shape}")
    if z.shape[1] != length:
        raise ShapeMismatch(f"layer has {length} channels but tensor has {z.shape[1]}")
    return z


def _unfold(z: np.ndarray) -> np.ndarray:
    # (B, f, H, W) -> (f, B*H*W): each column is one depth-column
    b, f, h, w = z.shape
    return z.transpose(1, 0, 2, 3).reshape(f, b * h * w)


def _fold(columns: np.ndarray, shape: tuple) -> np.ndarray:
    b, f, h, w = shape
    return columns.reshape(f, b, h, w).transpose(1, 0, 2, 3)


def semlc_forward(layer: SemlcLayer, z_hat: np.ndarray) -> np.ndarray:
    """Apply Q along the channel axis of every depth-column."""
    z_hat = _check_feature_tensor(layer.length, z_hat)
    out = apply_equilibrium_dense(layer.operator, _unfold(z_hat))
    return _fold(out, z_hat.shape)


def semlc_backward(
    layer: SemlcLayer, z_hat: np.ndarray, grad_out: np.ndarray
) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Input gradient Q^T per depth-column, plus this variant's parameter
    gradients: {"weights": (f-1,)} for adaptive, {"sigma", "delta"} scalars
    for parametric, {} for fixed and gaussian."""
    z_hat = _check_feature_tensor(layer.length, z_hat)
    grad_out = _check_feature_tensor(layer.length, grad_out)
    if z_hat.shape != grad_out.shape:
        raise ShapeMismatch(f"z_hat {z_hat.shape} and grad_out {grad_out.shape} differ")
    g = _unfold(grad_out)
    grad_in = _fold(equilibrium_backward(layer.operator, g), z_hat.shape)
    grad_params: dict[str, np.ndarray] = {}
    if layer.variant in (ADAPTIVE, PARAMETRIC):
        grad_full = equilibrium_param_backward(layer.operator, _unfold(z_hat), g)
        if layer.variant == ADAPTIVE:
            grad_params["weights"] = np.delete(grad_full, layer.profile.center)
        else:
            d_sigma, d_delta = profile_gradient(layer.profile.params, RICKER)
            grad_params["sigma"] = np.asarray(grad_full @ d_sigma)
            grad_params["delta"] = np.asarray(grad_full @ d_delta)
    return grad_in, grad_params


@dataclass(frozen=True)
class LrnLayer:
    """Local response normalization over a truncated channel window.

    Defaults are the AlexNet-era convention.
    """

    depth_radius: int = 2
    alpha: float = 1e-4
    beta: float = 0.75
    k: float = 2.0

    def __post_init__(self):
        if self.depth_radius < 1:
            raise ValueError(f"depth_radius must be >= 1, got {self.depth_radius}")
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not self.k > 0:
            raise ValueError(f"k must be positive, got {self.k}")


def _window_sums(x: np.ndarray, radius: int) -> np.ndarray:
    """Sum x over the channel window [i-radius, i+radius], truncated at the
    boundaries (axis 1)."""
    f = x.shape[1]
    csum = np.concatenate(
        [np.zeros_like(x[:, :1]), np.cumsum(x, axis=1)], axis=1
    )
    hi = np.minimum(np.arange(f) + radius + 1, f)
    lo = np.maximum(np.arange(f) - radius, 0)
    return csum[:, hi] - csum[:, lo]


def lrn_forward(layer: LrnLayer, z: np.ndarray) -> np.ndarray:
    """out = z / (k + alpha * sum_{window} z^2) ** beta, window truncated
    (not wrapped) at the channel boundary."""
    z = np.asarray(z)
    if z.ndim != 4:
        raise ShapeMismatch(f"expected a (B, f, H, W) tensor, got shape {z.shape}")
    scale = layer.k + layer.alpha * _window_sums(z * z, layer.depth_radius)
    return z * scale ** (-layer.beta)


def lrn_backward(layer: LrnLayer, z: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Input gradient of lrn_forward.

    With s_i = k + alpha * sum_{j in W_i} z_j^2 and the window symmetric
    (p in W_i iff i in W_p), d out_i / d z_p contributes the direct term
    s^-beta plus the cross terms -2 alpha beta z_i z_p s_i^(-beta-1).
    """
    z = np.asarray(z)
    grad_out = np.asarray(grad_out)
    if z.shape != grad_out.shape:
        raise ShapeMismatch(f"z {z.shape} and grad_out {grad_out.shape} differ")
    scale = layer.k + layer.alpha * _window_sums(z * z, layer.depth_radius)
    direct = grad_out * scale ** (-layer.beta)
    cross = _window_sums(grad_out * z * scale ** (-layer.beta - 1.0), layer.depth_radius)
    return direct - 2.0 * layer.alpha * layer.beta * z * cross
