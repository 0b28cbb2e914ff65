"""Lateral connectivity profiles along the channel axis.

A profile is a length-f weight vector, centered on the modulated channel,
that says how strongly each circular channel offset excites (positive) or
inhibits (negative) the center. The shipped generators are a damped Ricker
(Mexican hat) wavelet and a Gaussian control with the same width and
damping; "free" profiles carry externally supplied weights (the adaptive
layer variant). The self-weight at the center offset is always exactly 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import LengthTooSmall, ShapeMismatch

RICKER = "ricker"
GAUSSIAN = "gaussian"
FREE = "free"

GENERATED_KINDS = (RICKER, GAUSSIAN)
KINDS = (RICKER, GAUSSIAN, FREE)


@dataclass(frozen=True)
class ProfileParams:
    """Width, damping, and channel count of a connectivity profile.

    sigma is the wavelet width in units of channel index, delta the global
    damping factor that keeps the recurrent feedback weak, and length the
    number of channels f the profile spans.
    """

    sigma: float
    delta: float
    length: int

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if self.length < 2:
            raise LengthTooSmall(f"profile length must be >= 2, got {self.length}")


def center_index(length: int) -> int:
    """Index of the zero self-weight. For even lengths the profile is
    asymmetric by one sample; the covered offsets are -(length//2) ..
    length-1-(length//2)."""
    return length // 2


def profile_offsets(length: int) -> np.ndarray:
    """Signed channel offsets covered by a length-f profile."""
    return np.arange(length) - center_index(length)


def ricker(x, params: ProfileParams):
    """Damped Ricker (Mexican hat) wavelet.

    omega(x) = (2*delta / (sqrt(3*sigma) * pi**(1/4)))
               * (1 - x**2/sigma**2) * exp(-x**2 / (2*sigma**2))

    Even in x, positive for |x| < sigma, negative beyond, with zero
    crossings exactly at |x| = sigma. Accepts scalars or arrays.
    """
    x = np.asarray(x, dtype=np.float64)
    amplitude = 2.0 * params.delta / (np.sqrt(3.0 * params.sigma) * np.pi ** 0.25)
    u = (x * x) / (params.sigma * params.sigma)
    out = amplitude * (1.0 - u) * np.exp(-0.5 * u)
    return out if out.ndim else float(out)


def gaussian(x, params: ProfileParams):
    """Gaussian control profile: delta * exp(-x**2 / (2*sigma**2)).

    Shares the wavelet's envelope and damping but has no inhibitory lobes,
    which is what makes it a shape control.
    """
    x = np.asarray(x, dtype=np.float64)
    out = params.delta * np.exp(-0.5 * (x * x) / (params.sigma * params.sigma))
    return out if out.ndim else float(out)


_GENERATORS = {RICKER: ricker, GAUSSIAN: gaussian}


@dataclass(frozen=True)
class ConnectivityProfile:
    """Discretized lateral weight vector with its provenance.

    weights[i] is the weight at signed offset i - center_index(length);
    weights[center] is exactly 0 (no self-connection).
    """

    weights: np.ndarray
    kind: str
    params: ProfileParams

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.shape[0] != self.params.length:
            raise ShapeMismatch(
                f"weights must be a vector of length {self.params.length}, got shape {w.shape}"
            )
        if self.kind not in KINDS:
            raise ValueError(f"unknown profile kind {self.kind!r}")
        if w[center_index(self.params.length)] != 0.0:
            raise ValueError("profile center weight must be exactly 0")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def length(self) -> int:
        return self.params.length

    @property
    def center(self) -> int:
        return center_index(self.params.length)

    def to_json(self) -> str:
        record = {
            "kind": self.kind,
            "sigma": self.params.sigma,
            "delta": self.params.delta,
            "length": self.params.length,
            "weights": self.weights.tolist(),
        }
        return json.dumps(record)

    @staticmethod
    def from_json(text: str) -> "ConnectivityProfile":
        record = json.loads(text)
        params = ProfileParams(record["sigma"], record["delta"], record["length"])
        return ConnectivityProfile(
            np.asarray(record["weights"], dtype=np.float64), record["kind"], params
        )


def discretize(params: ProfileParams, kind: str) -> ConnectivityProfile:
    """Sample a generator at integer offsets and clamp the center to 0.

    The generator is evaluated at the signed offsets -(f//2) .. f-1-(f//2);
    no area normalization is applied.
    """
    if kind not in GENERATED_KINDS:
        raise ValueError(f"discretize supports kinds {GENERATED_KINDS}, got {kind!r}")
    if params.length < 2:
        raise LengthTooSmall(f"profile length must be >= 2, got {params.length}")
    x = profile_offsets(params.length).astype(np.float64)
    weights = _GENERATORS[kind](x, params)
    weights[center_index(params.length)] = 0.0
    return ConnectivityProfile(weights, kind, params)


def free_profile(weights: np.ndarray, params: ProfileParams) -> ConnectivityProfile:
    """Wrap externally supplied weights (center entry forced to 0)."""
    w = np.array(weights, dtype=np.float64)
    if w.ndim != 1 or w.shape[0] != params.length:
        raise ShapeMismatch(f"expected a vector of length {params.length}, got shape {w.shape}")
    w[center_index(params.length)] = 0.0
    return ConnectivityProfile(w, FREE, params)


def profile_gradient(params: ProfileParams, kind: str) -> tuple[np.ndarray, np.ndarray]:
    """Analytic partials of the discretized weights w.r.t. sigma and delta.

    Returns (d_weights/d_sigma, d_weights/d_delta), each of length f with
    the center entries 0 because the center weight is clamped.
    """
    if kind not in GENERATED_KINDS:
        raise ValueError(f"profile_gradient supports kinds {GENERATED_KINDS}, got {kind!r}")
    x = profile_offsets(params.length).astype(np.float64)
    sigma, delta = params.sigma, params.delta
    u = (x * x) / (sigma * sigma)
    envelope = np.exp(-0.5 * u)
    if kind == RICKER:
        amplitude = 2.0 * delta / (np.sqrt(3.0 * sigma) * np.pi ** 0.25)
        # d/dsigma of amplitude*(1-u)*envelope, collected over the three factors
        d_sigma = amplitude * envelope * (-0.5 + 3.5 * u - u * u) / sigma
        d_delta = amplitude * (1.0 - u) * envelope / delta
    else:
        d_sigma = delta * envelope * u / sigma
        d_delta = envelope.copy()
    c = center_index(params.length)
    d_sigma[c] = 0.0
    d_delta[c] = 0.0
    return d_sigma, d_delta
