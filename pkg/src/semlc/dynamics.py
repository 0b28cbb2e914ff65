"""Direct numerical integration of the coupled channel dynamics.

dz/dt = -z + U z + z_hat

The integrator is deliberately dumb: forward Euler on the raw system, so
its fixed point shares no algebra with the dense or FFT equilibrium paths
and can serve as an independent cross-check. For a linear system the fixed
point is exact regardless of step size; only the path there depends on dt.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ShapeMismatch
from .operators import LateralOperator

# Abort integration once the state leaves any plausible basin; unstable
# operators would otherwise run to max_steps for nothing.
DIVERGENCE_LIMIT = 1e12


@dataclass(frozen=True)
class DynamicsConfig:
    dt: float = 0.01
    max_steps: int = 200_000
    convergence_eps: float = 1e-9

    def __post_init__(self):
        if not 0.0 < self.dt <= 0.1:
            raise ValueError(f"dt must lie in (0, 0.1], got {self.dt}")
        if self.max_steps < 1:
            raise ValueError(f"max_steps must be positive, got {self.max_steps}")
        if not self.convergence_eps > 0:
            raise ValueError(f"convergence_eps must be positive, got {self.convergence_eps}")


class IntegrationResult(NamedTuple):
    z_final: np.ndarray
    steps: int
    converged: bool


def integrate(
    op: LateralOperator,
    z_hat: np.ndarray,
    cfg: DynamicsConfig = DynamicsConfig(),
    z0: np.ndarray | None = None,
    trace: list | None = None,
) -> IntegrationResult:
    """Forward-Euler integration until the residual dz/dt settles.

    Converged means max-abs(dz/dt) < cfg.convergence_eps before max_steps;
    divergence (state max-abs beyond DIVERGENCE_LIMIT) ends the run early
    with converged=False. When trace is a list, (step, max-abs residual)
    pairs are appended for every evaluated step.
    """
    f = op.length
    z_hat = np.asarray(z_hat, dtype=np.float64)
    if z_hat.shape != (f,):
        raise ShapeMismatch(f"z_hat must have shape ({f},), got {z_hat.shape}")
    z = np.zeros(f) if z0 is None else np.array(z0, dtype=np.float64)
    if z.shape != (f,):
        raise ShapeMismatch(f"z0 must have shape ({f},), got {z.shape}")

    u = op.u_matrix
    for step in range(cfg.max_steps + 1):
        residual = -z + u @ z + z_hat
        residual_norm = float(np.max(np.abs(residual)))
        if trace is not None:
            trace.append((step, residual_norm))
        if residual_norm < cfg.convergence_eps:
            return IntegrationResult(z, step, True)
        if step == cfg.max_steps:
            break
        z = z + cfg.dt * residual
        if np.max(np.abs(z)) > DIVERGENCE_LIMIT:
            return IntegrationResult(z, step + 1, False)
    return IntegrationResult(z, cfg.max_steps, False)
