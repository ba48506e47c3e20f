"""Dense complex linear-algebra kernels shared by the dilation pipeline.

Everything here operates on small (dim <= 4 in practice) dense complex
matrices.  The functions accept stacked inputs with shape ``(..., n, n)``
wherever that comes for free, which lets callers exponentiate a whole
time series of generators in one call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "NotHermitian",
    "NotPositive",
    "SingularPair",
    "TimeGrid",
    "OperatorSeries",
    "is_hermitian",
    "herm_eig",
    "expm",
    "sqrtm_psd",
    "sylvester_hermitian",
    "ordered_propagator",
]


class NotHermitian(ValueError):
    """Input failed a Hermiticity check at the requested tolerance."""


class NotPositive(ValueError):
    """Matrix has an eigenvalue below the allowed negative tolerance."""


class SingularPair(ValueError):
    """An eigenvalue pair sum is too small to divide by."""


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time discretization of ``[t0, t1]`` with ``n_nodes`` nodes."""

    t0: float
    t1: float
    n_nodes: int

    def __post_init__(self):
        if self.n_nodes < 2:
            raise ValueError(f"n_nodes must be >= 2, got {self.n_nodes}")
        if not self.t1 > self.t0:
            raise ValueError(f"need t1 > t0, got t0={self.t0}, t1={self.t1}")

    @property
    def dt(self) -> float:
        return (self.t1 - self.t0) / (self.n_nodes - 1)

    def times(self) -> np.ndarray:
        return np.linspace(self.t0, self.t1, self.n_nodes)

    def refined(self, factor: int) -> "TimeGrid":
        """Same span with ``factor`` times as many steps."""
        return TimeGrid(self.t0, self.t1, (self.n_nodes - 1) * factor + 1)


@dataclass
class OperatorSeries:
    """A per-node sequence of operators (or state vectors) over a TimeGrid.

    ``data`` has shape ``(n_nodes, ...)``; for operators ``(n_nodes, d, d)``.
    """

    grid: TimeGrid
    data: np.ndarray

    def __post_init__(self):
        if self.data.shape[0] != self.grid.n_nodes:
            raise ValueError(
                f"series length {self.data.shape[0]} != grid nodes {self.grid.n_nodes}"
            )

    def __len__(self) -> int:
        return self.grid.n_nodes

    def __getitem__(self, k):
        return self.data[k]


def is_hermitian(m: np.ndarray, tol: float) -> bool:
    """max |M - M^dagger| <= tol, elementwise."""
    m = np.asarray(m)
    return bool(np.max(np.abs(m - m.conj().swapaxes(-1, -2))) <= tol)


def herm_eig(m: np.ndarray, tol: float = 1e-10):
    """Eigendecomposition of a Hermitian matrix (ascending eigenvalues).

    Raises NotHermitian if ``m`` deviates from Hermiticity by more than
    ``tol`` relative to its magnitude (floor 1), so matrices of any scale
    pass at roundoff level.  Returns ``(w, v)`` with orthonormal
    eigenvector columns.
    """
    m = np.asarray(m, dtype=complex)
    scale = max(1.0, float(np.max(np.abs(m))) if m.size else 1.0)
    if not is_hermitian(m, tol * scale):
        raise NotHermitian(f"matrix is not Hermitian within tol={tol}")
    return np.linalg.eigh((m + m.conj().swapaxes(-1, -2)) / 2.0)


# Pade [6/6] numerator coefficients, b[j] * A^j; the denominator uses the
# same coefficients with alternating signs.
_PADE6 = (665280.0, 332640.0, 75600.0, 10080.0, 840.0, 42.0, 1.0)

# Scale so the Pade argument norm stays below this; 0.25 keeps the [6/6]
# approximant comfortably beyond double precision.
_PADE6_THETA = 0.25


def expm(a: np.ndarray) -> np.ndarray:
    """Matrix exponential by scaling-and-squaring with a Pade [6/6] core.

    Works on any square complex matrix (no normality assumed) and on
    stacks of shape ``(..., n, n)``.
    """
    a = np.asarray(a, dtype=complex)
    n = a.shape[-1]
    if a.shape[-2] != n:
        raise ValueError(f"expected square matrices, got shape {a.shape}")
    # One-norm over the whole stack; a single scaling power keeps the
    # squaring loop batched.
    norm = np.max(np.sum(np.abs(a), axis=-2)) if a.size else 0.0
    s = max(0, math.ceil(math.log2(norm / _PADE6_THETA))) if norm > _PADE6_THETA else 0
    x = a / (2.0**s)

    b = _PADE6
    eye = np.broadcast_to(np.eye(n, dtype=complex), x.shape)
    x2 = x @ x
    x4 = x2 @ x2
    x6 = x2 @ x4
    even = b[0] * eye + b[2] * x2 + b[4] * x4 + b[6] * x6
    odd = x @ (b[1] * eye + b[3] * x2 + b[5] * x4)
    r = np.linalg.solve(even - odd, even + odd)
    for _ in range(s):
        r = r @ r
    return r


def sqrtm_psd(m: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Hermitian PSD square root of a Hermitian PSD matrix.

    Eigenvalues in ``[-thresh, 0)`` are clamped to zero, where ``thresh``
    scales ``tol`` by the largest eigenvalue magnitude; anything below
    raises NotPositive.
    """
    w, v = herm_eig(m)
    scale = max(1.0, float(np.max(np.abs(w))) if w.size else 1.0)
    thresh = tol * scale
    if np.min(w) < -thresh:
        raise NotPositive(f"eigenvalue {np.min(w)} below -{thresh}")
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)[..., None, :]) @ v.conj().swapaxes(-1, -2)


def sylvester_hermitian(a: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Solve A X + X A = C for Hermitian X, with A Hermitian positive definite.

    In A's eigenbasis the solution is elementwise: X_ij = C_ij/(l_i + l_j).
    Raises SingularPair when an eigenvalue pair sum is numerically zero.
    """
    w, v = herm_eig(a)
    pair = w[..., :, None] + w[..., None, :]
    scale = float(np.max(np.abs(w))) if w.size else 0.0
    if np.min(pair) <= 1e-14 * scale:
        raise SingularPair(f"eigenvalue pair sum {np.min(pair)} too small")
    vh = v.conj().swapaxes(-1, -2)
    x = v @ ((vh @ c @ v) / pair) @ vh
    return (x + x.conj().swapaxes(-1, -2)) / 2.0


def ordered_propagator(
    generator: Callable[[float], np.ndarray],
    grid: TimeGrid,
    substeps: int = 1,
) -> OperatorSeries:
    """Time-ordered product U(t_k) of ``T exp(int G dt)`` on a uniform grid.

    Second-order commutator-free stepping: each step applies the
    exponential of the midpoint generator,
    ``U(t+h) = expm(h * G(t + h/2)) U(t)``, with ``substeps`` sub-intervals
    per grid step.  ``U(t0) = I``.
    """
    if substeps < 1:
        raise ValueError(f"substeps must be >= 1, got {substeps}")
    ts = grid.times()
    h = grid.dt / substeps
    n_steps = (grid.n_nodes - 1) * substeps
    mids = grid.t0 + (np.arange(n_steps) + 0.5) * h
    gs = np.stack([np.asarray(generator(t), dtype=complex) for t in mids])
    steps = expm(h * gs)
    d = steps.shape[-1]
    out = np.empty((grid.n_nodes, d, d), dtype=complex)
    cur = np.eye(d, dtype=complex)
    out[0] = cur
    for k in range(grid.n_nodes - 1):
        for j in range(substeps):
            cur = steps[k * substeps + j] @ cur
        out[k + 1] = cur
    assert np.isclose(ts[-1], grid.t1)
    return OperatorSeries(grid, out)
