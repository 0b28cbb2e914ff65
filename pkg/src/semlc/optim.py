"""Adam optimizer over named parameter dictionaries."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch


@dataclass(frozen=True)
class AdamConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(params: dict[str, np.ndarray]) -> dict:
    return {
        "step": 0,
        "m": {k: np.zeros_like(v) for k, v in params.items()},
        "v": {k: np.zeros_like(v) for k, v in params.items()},
    }


def update_moments(grads: dict[str, np.ndarray], state: dict, cfg: AdamConfig) -> dict:
    """Advance the first/second moment estimates by one step (no parameter
    change). Split out so a caller can retry the value update at a smaller
    step size without double-counting the gradient."""
    m = {}
    v = {}
    for key, g in grads.items():
        m[key] = cfg.beta1 * state["m"][key] + (1.0 - cfg.beta1) * g
        v[key] = cfg.beta2 * state["v"][key] + (1.0 - cfg.beta2) * (g * g)
    return {"step": state["step"] + 1, "m": m, "v": v}


def candidate_value(param: np.ndarray, key: str, state: dict, cfg: AdamConfig, lr: float) -> np.ndarray:
    """Bias-corrected Adam update of one parameter at step size lr."""
    t = state["step"]
    m_hat = state["m"][key] / (1.0 - cfg.beta1 ** t)
    v_hat = state["v"][key] / (1.0 - cfg.beta2 ** t)
    return param - lr * m_hat / (np.sqrt(v_hat) + cfg.eps)


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: dict,
    cfg: AdamConfig,
    lr: float | None = None,
) -> tuple[dict[str, np.ndarray], dict]:
    """One Adam update with bias correction; returns (new_params, new_state).

    lr overrides cfg.learning_rate when a schedule has rescaled it.
    """
    if set(params) != set(grads):
        raise ShapeMismatch(
            f"parameter/gradient keys differ: {sorted(set(params) ^ set(grads))}"
        )
    lr = cfg.learning_rate if lr is None else lr
    new_state = update_moments(grads, state, cfg)
    new_params = {
        key: candidate_value(value, key, new_state, cfg, lr) for key, value in params.items()
    }
    return new_params, new_state
