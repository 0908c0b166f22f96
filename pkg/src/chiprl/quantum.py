"""Closed-system quantum kinematics for small mode arrays.

Everything here is a pure function over numpy arrays: Hermitian matrices in,
unitaries and probability vectors out. Dimensions are generic, although the
rest of the package only ever uses n = 2.
"""

import numpy as np

HERMITIAN_TOL = 1e-12
UNITARY_TOL = 1e-10
NORM_TOL = 1e-10
PROB_TOL = 1e-12


def require_hermitian(h, tol=HERMITIAN_TOL):
    """Validate and return a square Hermitian complex matrix."""
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {h.shape}")
    if not np.allclose(h, h.conj().T, rtol=0.0, atol=tol):
        raise ValueError(f"matrix is not Hermitian within {tol}")
    return h


def require_state(psi, tol=NORM_TOL):
    """Validate and return a unit-norm complex amplitude vector."""
    psi = np.asarray(psi, dtype=complex)
    if psi.ndim != 1:
        raise ValueError(f"expected a 1-d amplitude vector, got shape {psi.shape}")
    norm = np.linalg.norm(psi)
    if abs(norm - 1.0) > tol:
        raise ValueError(f"state norm {norm} deviates from 1 by more than {tol}")
    return psi


def require_distribution(p, tol=PROB_TOL):
    """Validate and return a probability vector (entries >= 0, sum 1)."""
    p = np.asarray(p, dtype=float)
    if p.ndim != 1:
        raise ValueError(f"expected a 1-d probability vector, got shape {p.shape}")
    if np.any(p < 0.0):
        raise ValueError("probability vector has negative entries")
    total = p.sum()
    if abs(total - 1.0) > tol:
        raise ValueError(f"probabilities sum to {total}, not 1 within {tol}")
    return p


def unitary_from_hamiltonian(h):
    """exp(-i*h) for Hermitian h, computed exactly via eigendecomposition.

    The input is the dimensionless effective Hamiltonian (physical H times
    the transit time over hbar), so no extra time argument appears here.
    """
    h = require_hermitian(h)
    evals, evecs = np.linalg.eigh(h)
    return (evecs * np.exp(-1j * evals)) @ evecs.conj().T


def evolve(u, psi0):
    """Apply a unitary to a state vector; returns the evolved unit vector."""
    u = np.asarray(u, dtype=complex)
    psi0 = require_state(psi0)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {u.shape}")
    if u.shape[1] != psi0.shape[0]:
        raise ValueError(
            f"dimension mismatch: operator {u.shape} vs state {psi0.shape}"
        )
    return u @ psi0


def measure(psi):
    """Born-rule probabilities: componentwise squared moduli of the state."""
    psi = require_state(psi)
    return np.abs(psi) ** 2


def fidelity(achieved, target):
    """Squared Bhattacharyya overlap of two distributions, in percent.

    100.0 means identical distributions, 0.0 means disjoint support.
    """
    achieved = np.asarray(achieved, dtype=float)
    target = np.asarray(target, dtype=float)
    if achieved.shape != target.shape:
        raise ValueError(
            f"length mismatch: {achieved.shape} vs {target.shape}"
        )
    if np.any(achieved < 0.0) or np.any(target < 0.0):
        raise ValueError("distributions must be non-negative")
    return float(np.sum(np.sqrt(achieved) * np.sqrt(target)) ** 2 * 100.0)


def fidelity_from_alpha(alpha, target_alpha):
    """Vectorized two-mode fidelity of [alpha, 1-alpha] against a target.

    `alpha` may be a scalar or an array of first-mode powers in [0, 1];
    returns fidelity percentages of matching shape.
    """
    alpha = np.asarray(alpha, dtype=float)
    root = np.sqrt(alpha * target_alpha) + np.sqrt((1.0 - alpha) * (1.0 - target_alpha))
    return root * root * 100.0
