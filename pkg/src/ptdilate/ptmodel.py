"""The PT-symmetric two-level Hamiltonian family and its closed-form evolution.

The family is ``H(r) = [[i r, 1], [1, -i r]]`` with real ``r >= 0`` and
unit off-diagonal coupling; time is dimensionless (hbar = 1, one unit of
time corresponds to 1 us at a 1 rad/us coupling).  The closed-form state
and population formulas serve as the oracle the dilated simulation is
checked against.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

__all__ = [
    "PTParams",
    "PTRegime",
    "EP_WINDOW",
    "pt_hamiltonian",
    "pt_eigenvalues",
    "analytic_state",
    "analytic_p0",
    "classify",
]

# Width of the exceptional-point window: the generic formulas are 0/0 at
# r = 1, so |r - 1| below this switches to the polynomial limit.
EP_WINDOW = 1e-9


@dataclass(frozen=True)
class PTParams:
    """Non-Hermiticity strength of the family; negative r is rejected."""

    r: float

    def __post_init__(self):
        if not self.r >= 0.0:
            raise ValueError(f"r must be >= 0 (use symmetry for r < 0), got {self.r}")


class PTRegime(enum.Enum):
    HERMITIAN = "hermitian"
    UNBROKEN = "unbroken"
    EXCEPTIONAL_POINT = "exceptional_point"
    BROKEN = "broken"


def _as_params(p) -> PTParams:
    return p if isinstance(p, PTParams) else PTParams(float(p))


def pt_hamiltonian(p: PTParams | float) -> np.ndarray:
    """The 2x2 matrix [[i r, 1], [1, -i r]]; non-Hermitian for r > 0."""
    r = _as_params(p).r
    return np.array([[1j * r, 1.0], [1.0, -1j * r]], dtype=complex)


def pt_eigenvalues(p: PTParams | float) -> tuple[complex, complex]:
    """(E+, E-) = (+sqrt(1-r^2), -sqrt(1-r^2)), principal branch.

    Real for r <= 1, purely imaginary (+-i sqrt(r^2-1)) for r > 1, both
    zero at the exceptional point.
    """
    r = _as_params(p).r
    if r <= 1.0:
        e = complex(np.sqrt(1.0 - r * r))
    else:
        e = 1j * np.sqrt(r * r - 1.0)
    return e, -e


def classify(p: PTParams | float) -> PTRegime:
    """Regime tag, with exact threshold comparisons at r = 0 and r = 1."""
    r = _as_params(p).r
    if r == 0.0:
        return PTRegime.HERMITIAN
    if r < 1.0:
        return PTRegime.UNBROKEN
    if r == 1.0:
        return PTRegime.EXCEPTIONAL_POINT
    return PTRegime.BROKEN


def _state_components(r: float, t):
    """Overflow-safe components of the evolved state from |0>.

    Returns ``(a, b)`` with the physical (unnormalized) state proportional
    to ``(a, -i b)``; the common dominant exponential has been divided
    out, so only ratios of a and b are meaningful.
    """
    t = np.asarray(t, dtype=float)
    if abs(r - 1.0) < EP_WINDOW:
        # Nilpotent limit: psi = (1 + r t, -i t).
        return 1.0 + r * t, t + 0.0 * t
    if r < 1.0:
        k = np.sqrt(1.0 - r * r)
        return np.cos(k * t) + (r / k) * np.sin(k * t), np.sin(k * t) / k
    s = np.sqrt(r * r - 1.0)
    # Divided by e^{s t} (the growing exponential); decaying part is safe.
    decay = np.exp(-2.0 * s * t)
    a = ((r + s) - decay * (r - s)) / (2.0 * s)
    b = (1.0 - decay) / (2.0 * s)
    return a, b


def analytic_state(p: PTParams | float, t) -> np.ndarray:
    """Unnormalized evolved state from |0> = (1, 0)^T at time(s) ``t``.

    Rescaled by the dominant exponential for r > 1 so magnitudes never
    overflow; only the ray (direction) is meaningful.  Scalar ``t`` gives
    shape (2,), array ``t`` gives shape t.shape + (2,).
    """
    r = _as_params(p).r
    a, b = _state_components(r, t)
    return np.stack([np.asarray(a, dtype=complex), -1j * np.asarray(b, dtype=complex)], axis=-1)


def analytic_p0(p: PTParams | float, t):
    """Normalized population of |0> at time(s) ``t``: |psi0|^2 / |psi|^2.

    Overflow-safe (the dominant exponential cancels) and continuous in r
    across the exceptional point.  Vectorized over ``t``.
    """
    r = _as_params(p).r
    a, b = _state_components(r, t)
    a2 = np.abs(a) ** 2
    b2 = np.abs(b) ** 2
    return a2 / (a2 + b2)
