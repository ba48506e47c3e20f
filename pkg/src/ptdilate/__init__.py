"""Hermitian dilation of PT-symmetric Hamiltonians with NV-center realization.

Subpackages by stage: ``numkit`` (dense linear-algebra kernels),
``ptmodel`` (the PT family and its closed-form evolution), ``dilation``
(metric construction and the dilated Hamiltonian), ``pauli`` (two-qubit
coefficient extraction), ``simulator`` (dilated evolution +
post-selection), ``pulse`` (NV drive synthesis and lab-frame audit),
``readout`` (photoluminescence chain), ``fitkit`` (strength fitting and
the eigenvalue bifurcation), and ``cli`` (command-line orchestration).
"""

__version__ = "0.1.0"

__all__ = ["__version__"]
