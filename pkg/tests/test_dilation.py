"""Dilation-pipeline tests: metric selection, operator identities, routes."""

import numpy as np
import pytest

from ptdilate.dilation import (
    ANCILLA_MINUS,
    ANCILLA_PLUS,
    DilationConfig,
    PositivityLost,
    SingularPropagator,
    ancilla_blocks,
    choose_initial_m,
    dilate,
    dilated_hamiltonian,
    eta_series,
    lambda_gamma,
    m_series,
    verify_dilation,
)
from ptdilate.numkit import TimeGrid, expm, is_hermitian
from ptdilate.ptmodel import pt_hamiltonian

GRID = TimeGrid(0.0, 4.0, 2001)


def cfg(grid=GRID, margin=0.1):
    return DilationConfig(grid=grid, margin=margin)


class TestAncillaBasis:
    def test_states_are_orthonormal(self):
        assert np.vdot(ANCILLA_MINUS, ANCILLA_MINUS) == pytest.approx(1.0)
        assert np.vdot(ANCILLA_PLUS, ANCILLA_PLUS) == pytest.approx(1.0)
        assert abs(np.vdot(ANCILLA_PLUS, ANCILLA_MINUS)) < 1e-15

    def test_sigma_y_eigenstates(self):
        sy = np.array([[0.0, -1.0j], [1.0j, 0.0]])
        assert np.allclose(sy @ ANCILLA_MINUS, -ANCILLA_MINUS)
        assert np.allclose(sy @ ANCILLA_PLUS, ANCILLA_PLUS)


class TestInitialMetric:
    def test_hermitian_case_gives_margin_only(self):
        # For r = 0 the propagator is unitary, mu' = 1, m0 = 1 + margin.
        m0, mu = choose_initial_m(pt_hamiltonian(0.0), cfg())
        assert mu == pytest.approx(1.0, abs=1e-12)
        assert m0 == pytest.approx(1.1, abs=1e-12)

    def test_m0_grows_with_horizon(self):
        short = choose_initial_m(pt_hamiltonian(1.4), cfg(TimeGrid(0.0, 2.0, 1001)))[0]
        long = choose_initial_m(pt_hamiltonian(1.4), cfg(TimeGrid(0.0, 4.0, 2001)))[0]
        assert long > short > 1.0

    def test_metric_starts_scalar(self):
        h = pt_hamiltonian(0.6)
        m0, _ = choose_initial_m(h, cfg())
        m = m_series(h, m0, cfg())
        assert np.max(np.abs(m.data[0] - m0 * np.eye(2))) < 1e-12

    def test_metric_floor_respects_margin(self):
        h = pt_hamiltonian(0.6)
        m0, _ = choose_initial_m(h, cfg())
        m = m_series(h, m0, cfg())
        eigs = np.linalg.eigvalsh(m.data)
        assert np.min(eigs) >= 1.0 + 0.1 - 1e-9

    def test_positivity_lost_when_m0_too_small(self):
        h = pt_hamiltonian(1.2)
        with pytest.raises(PositivityLost):
            m_series(h, 1.0001, cfg())

    def test_singular_propagator_guard(self):
        # Broken-regime growth e^{2 s T} beyond the condition cap.
        with pytest.raises(SingularPropagator):
            choose_initial_m(pt_hamiltonian(2.5), cfg(TimeGrid(0.0, 8.0, 4001)))


class TestOperatorIdentities:
    @pytest.mark.parametrize("r", [0.0, 0.6, 1.0, 1.4])
    def test_invariant_suite(self, r):
        h = pt_hamiltonian(r)
        result = dilate(h, cfg())
        report = verify_dilation(result, h)
        assert report.hermiticity <= 1e-10
        assert report.block_antisym <= 1e-9
        assert report.min_eig_m_minus_i >= 0.99 * 0.1
        assert report.metric_ode <= 1e-5

    def test_hermitian_input_collapses_to_h_tensor_identity(self):
        # r = 0: eta is constant, Gamma = 0, H_sa = H_s x I.
        h = pt_hamiltonian(0.0)
        result = dilate(h, cfg())
        assert np.max(np.abs(result.gamma_series.data)) < 1e-12
        expected = np.kron(h, np.eye(2))
        assert np.max(np.abs(result.hsa_series.data - expected[None])) < 1e-12

    def test_block_structure_in_ancilla_basis(self):
        # sigma_z maps each sigma_y eigenstate to the other with matrix
        # elements <+-|sigma_z|-+> = +-i, so the diagonal blocks are both
        # Lambda and the off-diagonal blocks are +-i Gamma.
        result = dilate(pt_hamiltonian(0.6), cfg())
        blocks = ancilla_blocks(result.hsa_series.data)
        lam = result.lambda_series.data
        gam = result.gamma_series.data
        assert np.max(np.abs(blocks["--"] - lam)) < 1e-10
        assert np.max(np.abs(blocks["++"] - lam)) < 1e-10
        assert np.max(np.abs(blocks["+-"] - 1j * gam)) < 1e-10
        assert np.max(np.abs(blocks["-+"] + 1j * gam)) < 1e-10

    def test_eta_squared_is_m_minus_identity(self):
        result = dilate(pt_hamiltonian(0.6), cfg())
        eta2 = result.eta_series.data @ result.eta_series.data
        target = result.m_series.data - np.eye(2)[None]
        assert np.max(np.abs(eta2 - target)) < 1e-9

    def test_direct_route_agrees_with_svd_route(self):
        # The naive formula evaluation is accurate while the metric is
        # moderately conditioned; both routes must then coincide.
        h = pt_hamiltonian(0.6)
        result = dilate(h, cfg(TimeGrid(0.0, 2.0, 1001)))
        eta, deta = eta_series(result.m_series, h)
        lam, gam = lambda_gamma(h, result.m_series, eta, deta)
        assert np.max(np.abs(lam.data - result.lambda_series.data)) < 1e-8
        assert np.max(np.abs(gam.data - result.gamma_series.data)) < 1e-8
        assert np.max(lam.presym_residual) < 1e-6

    def test_dilated_hamiltonian_layout(self):
        result = dilate(pt_hamiltonian(0.6), cfg(TimeGrid(0.0, 1.0, 11)))
        hsa = dilated_hamiltonian(result.lambda_series, result.gamma_series)
        lam0 = result.lambda_series.data[0]
        gam0 = result.gamma_series.data[0]
        expected = np.kron(lam0, np.eye(2)) + np.kron(gam0, np.diag([1.0, -1.0]))
        assert np.max(np.abs(hsa.data[0] - expected)) < 1e-14


class TestPostselectionFidelity:
    @pytest.mark.parametrize("r", [0.3, 0.9, 1.2])
    def test_projected_propagation_reproduces_hs_evolution(self, r):
        # Evolve |psi0>(|-> + eta0 |+>) under H_sa stepwise; projecting the
        # ancilla on |-> must reproduce e^{-i H_s t} |psi0> as a ray.
        h = pt_hamiltonian(r)
        grid = TimeGrid(0.0, 2.0, 2001)
        result = dilate(h, cfg(grid))
        eta0 = np.sqrt(result.m0 - 1.0)
        psi0 = np.array([1.0, 0.0], dtype=complex)
        anc = (ANCILLA_MINUS + eta0 * ANCILLA_PLUS) / np.sqrt(1.0 + eta0**2)
        state = np.kron(psi0, anc)
        hmid = (result.hsa_series.data[:-1] + result.hsa_series.data[1:]) / 2.0
        steps = expm(-1j * grid.dt * hmid)
        for k in range(grid.n_nodes - 1):
            state = steps[k] @ state
        proj = state.reshape(2, 2) @ ANCILLA_MINUS.conj()
        ref = expm(-1j * grid.t1 * h) @ psi0
        overlap = abs(np.vdot(proj, ref)) / (
            np.linalg.norm(proj) * np.linalg.norm(ref)
        )
        assert overlap == pytest.approx(1.0, abs=1e-6)


class TestConfigValidation:
    def test_rejects_nonpositive_margin(self):
        with pytest.raises(ValueError):
            DilationConfig(grid=GRID, margin=0.0)

    def test_rejects_bad_substeps(self):
        with pytest.raises(ValueError):
            DilationConfig(grid=GRID, substeps=0)

    def test_explicit_m0_must_exceed_one(self):
        with pytest.raises(ValueError):
            dilate(pt_hamiltonian(0.1), cfg(), m0=0.9)
