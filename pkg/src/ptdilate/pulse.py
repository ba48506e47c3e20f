"""NV-center pulse synthesis for the dilated Hamiltonian.

Maps the A-coefficient form of H_sa onto the two-qubit subspace
{|0>_e|1>_n, |0>_e|0>_n, |-1>_e|1>_n, |-1>_e|0>_n} of the NV electron +
14N nuclear spin system: static subspace Hamiltonian, carrier
frequencies of the two selective MW transitions, Rabi/phase/frequency
trajectories of the drives, and a lab-frame integrator that audits the
rotating-wave approximation.

Units: frequencies in NVParams are MHz (cycles/us); Hamiltonians and
carrier/drive angular frequencies are rad/us; time is us (matching the
dimensionless time unit of the PT model at unit coupling).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numkit import TimeGrid, expm
from .pauli import ASeries, assemble_a_form
from .simulator import CombinedState, Trajectory, _postselect_batch

__all__ = [
    "GridTooCoarse",
    "NVParams",
    "PulseProgram",
    "subspace_h0",
    "synthesize",
    "rotating_frame_check",
    "simulate_lab_frame",
]

_SX = np.array([[0, 1], [1, 0]], dtype=complex)
_SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
_SZ = np.diag([1.0, -1.0]).astype(complex)
_I2 = np.eye(2, dtype=complex)

# Nuclear-spin projectors in the {|1>_n, |0>_n} subspace ordering.
_P_N1 = np.diag([1.0, 0.0]).astype(complex)
_P_N0 = np.diag([0.0, 1.0]).astype(complex)

# Max fraction of a carrier cycle a lab-frame step may span.
_MAX_CYCLES_PER_STEP = 0.02


class GridTooCoarse(ValueError):
    """Lab-frame grid does not resolve the MW carrier."""


@dataclass(frozen=True)
class NVParams:
    """NV two-qubit constants; gyromagnetic ratios are gamma/2pi in MHz/G.

    The ratios are standard physical constants supplied as configuration
    (electron and 14N), not fitted quantities; their sign convention is
    pinned by the ~2.9 and ~5.1 MHz nuclear transition frequencies.
    """

    zero_field_splitting: float = 2870.0  # D, MHz
    quadrupole: float = -4.95  # Q, MHz
    hyperfine: float = -2.16  # A, MHz
    b_field: float = 506.0  # G
    gamma_e: float = -2.8025  # MHz/G
    gamma_n: float = 3.077e-4  # MHz/G

    def __post_init__(self):
        if not self.zero_field_splitting > 0:
            raise ValueError("zero-field splitting must be > 0")
        if not self.b_field > 0:
            raise ValueError("magnetic field must be > 0")

    @property
    def omega_e(self) -> float:
        """Electron Zeeman splitting, MHz: omega_e = -gamma_e B0."""
        return -self.gamma_e * self.b_field

    @property
    def omega_n(self) -> float:
        """Nuclear Zeeman splitting, MHz: omega_n = -gamma_n B0."""
        return -self.gamma_n * self.b_field


def subspace_h0(p: NVParams) -> tuple[np.ndarray, tuple[float, float]]:
    """Static two-qubit Hamiltonian (rad/us) and the MW carrier pair.

    H0 = pi [-(D - omega_e - A/2) sz x I + (Q + omega_n - A/2) I x sz
             + (A/2) sz x sz] in the electron (x) nuclear ordering; the
    carriers are the |0>_e <-> |-1>_e transition frequencies with the
    nuclear spin in |1>_n resp. |0>_n (magnitudes, rad/us).
    """
    d, q, a = p.zero_field_splitting, p.quadrupole, p.hyperfine
    we, wn = p.omega_e, p.omega_n
    h0 = math.pi * (
        -(d - we - a / 2.0) * np.kron(_SZ, _I2)
        + (q + wn - a / 2.0) * np.kron(_I2, _SZ)
        + (a / 2.0) * np.kron(_SZ, _SZ)
    )
    w_mw1 = abs(2.0 * math.pi * (d - we - a))
    w_mw2 = abs(2.0 * math.pi * (d - we))
    return h0, (w_mw1, w_mw2)


@dataclass
class PulseProgram:
    """Per-node drive parameters of the two selective MW pulses.

    ``freq1``/``freq2`` are the instantaneous angular frequencies
    (rad/us); their offsets from the carriers are +-2 A4(t).  ``phase``
    is the shared phase phi(t) (drive 1 runs at -phi, drive 2 at +phi),
    unwrapped to a continuous branch.
    """

    grid: TimeGrid
    omega_rabi: np.ndarray  # Omega(t), MHz, >= 0
    phase: np.ndarray  # phi(t), rad, continuous
    freq1: np.ndarray  # rad/us
    freq2: np.ndarray  # rad/us
    carriers: tuple[float, float]  # (omega_MW1, omega_MW2), rad/us

    def to_csv(self, fh) -> None:
        fh.write("t,omega_rabi,phase,freq1_offset,freq2_offset\n")
        w1, w2 = self.carriers
        for t, om, ph, f1, f2 in zip(
            self.grid.times(), self.omega_rabi, self.phase, self.freq1, self.freq2
        ):
            row = [t, om, ph, f1 - w1, f2 - w2]
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def synthesize(a: ASeries, carriers: tuple[float, float]) -> PulseProgram:
    """Drive parameters realizing the A-form Hamiltonian.

    pi Omega(t) = sqrt(A1^2 + A3^2), phi(t) = atan2(A3, A1) (branch-safe,
    unlike a plain arctan of the ratio, which breaks the reconstruction
    when A1 < 0), and the frequencies track the carriers with the
    +-2 A4(t) offsets.
    """
    a1, _, a3, a4 = a.a.T
    if not np.all(np.isfinite(a.a)):
        raise ValueError("A-series contains non-finite values")
    omega = np.hypot(a1, a3) / math.pi
    phase = np.unwrap(np.arctan2(a3, a1))
    w1, w2 = carriers
    return PulseProgram(
        grid=a.grid,
        omega_rabi=omega,
        phase=phase,
        freq1=w1 + 2.0 * a4,
        freq2=w2 - 2.0 * a4,
        carriers=(w1, w2),
    )


def rotating_frame_check(prog: PulseProgram, a: ASeries) -> float:
    """Max spectral-norm residual of the rotating-frame reconstruction.

    Rebuilds pi Omega cos(phi) sx x I + A2 I x sz + pi Omega sin(phi)
    sy x sz + A4 sz x sz from the program and compares node-wise against
    the A-form Hamiltonian.
    """
    _, a2, _, a4 = a.a.T
    piom = math.pi * prog.omega_rabi
    rebuilt = (
        piom[:, None, None] * np.cos(prog.phase)[:, None, None] * np.kron(_SX, _I2)
        + a2[:, None, None] * np.kron(_I2, _SZ)
        + piom[:, None, None] * np.sin(prog.phase)[:, None, None] * np.kron(_SY, _SZ)
        + a4[:, None, None] * np.kron(_SZ, _SZ)
    )
    target = np.stack([assemble_a_form(row) for row in a.a])
    diff = rebuilt - target
    return float(np.max(np.linalg.svd(diff, compute_uv=False)[:, 0]))


def _interp(t_nodes: np.ndarray, values: np.ndarray, t_query: np.ndarray) -> np.ndarray:
    return np.interp(t_query, t_nodes, values)


def simulate_lab_frame(
    prog: PulseProgram,
    a: ASeries,
    params: NVParams,
    grid_fine: TimeGrid,
    initial: CombinedState,
    chunk: int = 16384,
) -> Trajectory:
    """Integrate the cosine-drive Hamiltonian without RWA and rotate back.

    Slow audit path: steps the full lab-frame Hamiltonian (static
    subspace term plus the two selective cosine drives) on ``grid_fine``,
    transforms each node through the interaction-picture unitary (whose
    exponent is diagonal), and reports the post-selected trajectory.  The
    A-series supplies the A2/A4 integrals that define the frame.
    """
    h0, _ = subspace_h0(params)
    f_carrier = max(abs(c) for c in prog.carriers) / (2.0 * math.pi)
    if grid_fine.dt * f_carrier > _MAX_CYCLES_PER_STEP:
        raise GridTooCoarse(
            f"dt={grid_fine.dt:.3e} spans {grid_fine.dt * f_carrier:.3f} carrier "
            f"cycles (limit {_MAX_CYCLES_PER_STEP})"
        )
    t_nodes = prog.grid.times()
    ts = grid_fine.times()
    h = grid_fine.dt
    n = grid_fine.n_nodes
    mids = ts[:-1] + h / 2.0

    a2 = a.a[:, 1]
    a4 = a.a[:, 3]
    # Cumulative integrals of A4 and A2 on the fine grid (trapezoid).
    a4_f = _interp(t_nodes, a4, ts)
    a2_f = _interp(t_nodes, a2, ts)
    int_a4 = np.concatenate([[0.0], np.cumsum((a4_f[1:] + a4_f[:-1]) / 2.0 * h)])
    int_a2 = np.concatenate([[0.0], np.cumsum((a2_f[1:] + a2_f[:-1]) / 2.0 * h)])

    w1, w2 = prog.carriers
    int_a4_mid = _interp(ts, int_a4, mids)
    theta1 = w1 * mids + 2.0 * int_a4_mid
    theta2 = w2 * mids - 2.0 * int_a4_mid
    om_mid = _interp(t_nodes, prog.omega_rabi, mids)
    ph_mid = _interp(t_nodes, prog.phase, mids)

    drive1 = 2.0 * math.pi * om_mid * np.cos(theta1 - ph_mid)
    drive2 = 2.0 * math.pi * om_mid * np.cos(theta2 + ph_mid)

    sx_n1 = np.kron(_SX, _P_N1)
    sx_n0 = np.kron(_SX, _P_N0)

    states = np.empty((n, 4), dtype=complex)
    cur = initial.amplitudes.astype(complex)
    states[0] = cur
    # Chunked batched exponentials keep memory bounded on ~1e5+ steps.
    for start in range(0, n - 1, chunk):
        stop = min(start + chunk, n - 1)
        hmats = (
            h0[None]
            + drive1[start:stop, None, None] * sx_n1[None]
            + drive2[start:stop, None, None] * sx_n0[None]
        )
        steps = expm(-1j * h * hmats)
        for k in range(start, stop):
            cur = steps[k - start] @ cur
            states[k + 1] = cur

    # Back to the rotating frame: the exponent of U_rot is diagonal.
    h0_diag = np.real(np.diag(h0))
    sz_n = np.array([1.0, -1.0, 1.0, -1.0])  # I x sz diagonal
    sz_sz = np.array([1.0, -1.0, -1.0, 1.0])  # sz x sz diagonal
    exponent = (
        h0_diag[None, :] * ts[:, None]
        - int_a2[:, None] * sz_n[None, :]
        - int_a4[:, None] * sz_sz[None, :]
    )
    states = np.exp(1j * exponent) * states

    proj, succ = _postselect_batch(states)
    wgt = np.sum(np.abs(proj) ** 2, axis=-1)
    p0 = np.abs(proj[:, 0]) ** 2 / wgt
    return Trajectory(grid=grid_fine, states=states, p0=p0, success_prob=succ)
