"""Local stability oracle: linearize at the designated point, read the spectrum.

The verdict follows the spectral test for hyperbolic equilibria: with
J = df/dx evaluated at the point, decay = -max Re eig(J), and the system is
locally asymptotically stable exactly when decay > 0.  Near-zero margins are
rejected rather than labeled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MarginalSample
from .expr import Expr, differentiate, eval_complex
from .linalg import decay_rate, eigenvalues
from .sampler import System

MARGINAL_BAND = 1e-6


@dataclass(frozen=True)
class StabilityVerdict:
    decay: float
    stable: bool
    eigenvalues: tuple[complex, ...]


def jacobian(system: System) -> tuple[tuple[Expr, ...], ...]:
    """Symbolic J with entry (i, j) = d equation_i / d x_j."""
    if system.n_controls:
        raise ValueError("stability analysis requires an uncontrolled system")
    names = system.state_vars
    return tuple(
        tuple(differentiate(eq, v) for v in names) for eq in system.equations
    )


def jacobian_at(system: System) -> np.ndarray:
    """Numeric Jacobian at the system's equilibrium (complex entries allowed)."""
    if system.has_time:
        raise ValueError("stability analysis requires an autonomous system")
    env = system.eq_env()
    sym = jacobian(system)
    n = system.n_states
    J = np.empty((n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            J[i, j] = eval_complex(sym[i][j], env)
    return J


def classify_stability(
    system: System, marginal_band: float = MARGINAL_BAND
) -> StabilityVerdict:
    """Stability verdict; |decay| inside ``marginal_band`` raises MarginalSample."""
    eigs = eigenvalues(jacobian_at(system))
    decay = decay_rate(eigs)
    if abs(decay) < marginal_band:
        raise MarginalSample(f"decay {decay:.3g} inside ±{marginal_band:g}")
    return StabilityVerdict(
        decay=decay, stable=decay > 0, eigenvalues=tuple(complex(z) for z in eigs)
    )
