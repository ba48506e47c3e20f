"""Unitary evolution under the dilated Hamiltonian with ancilla post-selection.

State ordering is system (x) ancilla with basis
(|0>|0>, |0>|1>, |1>|0>, |1>|1>).  Projecting the ancilla onto |-> and
renormalizing recovers the non-unitary system trajectory; ``p0`` is the
population of the system |0> state of that conditional trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dilation import ANCILLA_MINUS, ANCILLA_PLUS, DilationConfig, DilationResult, dilate
from .numkit import OperatorSeries, TimeGrid, expm
from .ptmodel import PTParams, pt_hamiltonian

__all__ = [
    "ZeroBranch",
    "CombinedState",
    "Trajectory",
    "prepare_initial",
    "evolve_dilated",
    "postselect",
    "p0_trajectory",
    "branch_populations",
    "simulate_pt",
]


class ZeroBranch(RuntimeError):
    """Post-selection impossible: the |-> branch has (numerically) no weight."""


@dataclass
class CombinedState:
    amplitudes: np.ndarray  # complex 4-vector, |s> x |a>

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


@dataclass
class Trajectory:
    grid: TimeGrid
    states: np.ndarray  # (n_nodes, 4) complex
    p0: np.ndarray  # (n_nodes,) post-selected |0> population
    success_prob: np.ndarray  # (n_nodes,) |-> branch weight


def prepare_initial(psi0: np.ndarray, eta0: float) -> CombinedState:
    """Normalized (|psi0>|-> + eta0 |psi0>|+>) / sqrt(1 + eta0^2)."""
    psi0 = np.asarray(psi0, dtype=complex)
    if not np.isclose(np.linalg.norm(psi0), 1.0, atol=1e-12):
        raise ValueError("psi0 must be a unit vector")
    if eta0 < 0:
        raise ValueError(f"eta0 must be >= 0, got {eta0}")
    anc = (ANCILLA_MINUS + eta0 * ANCILLA_PLUS) / np.sqrt(1.0 + eta0**2)
    return CombinedState(amplitudes=np.kron(psi0, anc))


def _postselect_batch(states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(projected system amplitudes, success probabilities) for a stack."""
    resh = states.reshape(-1, 2, 2)
    proj = resh @ ANCILLA_MINUS.conj()
    w = np.sum(np.abs(proj) ** 2, axis=-1)
    total = np.sum(np.abs(states) ** 2, axis=-1)
    return proj, w / total


def postselect(state: CombinedState) -> tuple[np.ndarray, float]:
    """Project the ancilla onto |->; return (unit system state, success)."""
    if state.norm <= 0:
        raise ValueError("state has zero norm")
    proj, succ = _postselect_batch(state.amplitudes[None])
    pnorm = np.linalg.norm(proj[0])
    if pnorm < 1e-30:
        raise ZeroBranch("projected |-> branch norm below 1e-30")
    return proj[0] / pnorm, float(succ[0])


def evolve_dilated(
    hsa: OperatorSeries, initial: CombinedState, substeps: int = 1
) -> Trajectory:
    """Propagate by per-step unitaries expm(-i dt H_sa(midpoint)).

    Midpoint Hamiltonians come from linear interpolation of H_sa between
    grid nodes, which matches the O(dt^2) accuracy of the dilation
    integrator; each step is exactly unitary up to expm error.
    """
    if substeps < 1:
        raise ValueError(f"substeps must be >= 1, got {substeps}")
    grid = hsa.grid
    n = grid.n_nodes
    h = grid.dt / substeps
    # Midpoint Hamiltonians for all substeps of all intervals at once.
    frac = (np.arange(substeps) + 0.5) / substeps
    hmid = (
        hsa.data[:-1, None] * (1.0 - frac)[None, :, None, None]
        + hsa.data[1:, None] * frac[None, :, None, None]
    ).reshape(-1, 4, 4)
    steps = expm(-1j * h * hmid)
    states = np.empty((n, 4), dtype=complex)
    cur = initial.amplitudes.astype(complex)
    states[0] = cur
    for k in range(n - 1):
        for j in range(substeps):
            cur = steps[k * substeps + j] @ cur
        states[k + 1] = cur
    proj, succ = _postselect_batch(states)
    w = np.sum(np.abs(proj) ** 2, axis=-1)
    if np.min(w) < 1e-60:
        raise ZeroBranch("post-selected branch vanished along the trajectory")
    p0 = np.abs(proj[:, 0]) ** 2 / w
    return Trajectory(grid=grid, states=states, p0=p0, success_prob=succ)


def p0_trajectory(traj: Trajectory) -> np.ndarray:
    """Post-selected |0> population at each node (recomputed from states)."""
    proj, _ = _postselect_batch(traj.states)
    w = np.sum(np.abs(proj) ** 2, axis=-1)
    if np.min(w) < 1e-60:
        raise ZeroBranch("post-selected branch vanished along the trajectory")
    return np.abs(proj[:, 0]) ** 2 / w


def branch_populations(states: np.ndarray) -> np.ndarray:
    """Populations of the four readout levels for a state or stack.

    The readout basis maps |-> -> |1>_n and |+> -> |0>_n, so the level
    order (|0 1>, |0 0>, |-1 1>, |-1 0>) corresponds to the amplitudes
    (<0,-|, <0,+|, <1,-|, <1,+|) of the dilated state.
    """
    states = np.asarray(states)
    single = states.ndim == 1
    if single:
        states = states[None]
    resh = states.reshape(-1, 2, 2)
    a_minus = resh @ ANCILLA_MINUS.conj()
    a_plus = resh @ ANCILLA_PLUS.conj()
    pops = np.stack(
        [
            np.abs(a_minus[:, 0]) ** 2,
            np.abs(a_plus[:, 0]) ** 2,
            np.abs(a_minus[:, 1]) ** 2,
            np.abs(a_plus[:, 1]) ** 2,
        ],
        axis=-1,
    )
    pops /= np.sum(np.abs(states) ** 2, axis=-1, keepdims=True)
    return pops[0] if single else pops


def simulate_pt(
    r: float | PTParams,
    grid: TimeGrid,
    margin: float = 0.1,
    substeps: int = 1,
    psi0: np.ndarray | None = None,
) -> tuple[Trajectory, DilationResult]:
    """Dilate the PT Hamiltonian at strength r and evolve from |psi0>|->...

    Convenience wrapper: runs the dilation pipeline, prepares the initial
    state with eta0 = sqrt(m0 - 1) (scalar M(0)), and propagates over the
    grid.  Returns the trajectory together with the dilation it used.
    """
    h_s = pt_hamiltonian(r)
    result = dilate(h_s, DilationConfig(grid=grid, margin=margin, substeps=substeps))
    if psi0 is None:
        psi0 = np.array([1.0, 0.0], dtype=complex)
    initial = prepare_initial(psi0, np.sqrt(result.m0 - 1.0))
    traj = evolve_dilated(result.hsa_series, initial, substeps=substeps)
    return traj, result
