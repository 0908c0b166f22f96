import numpy as np
import pytest

from chiprl.quantum import (
    evolve,
    fidelity,
    fidelity_from_alpha,
    measure,
    unitary_from_hamiltonian,
)


def expm_series(m, terms=30):
    """Scaling-and-squaring Taylor-series matrix exponential (test oracle).

    Independent of the eigendecomposition path under test.
    """
    m = np.asarray(m, dtype=complex)
    norm = np.linalg.norm(m, ord=2)
    squarings = 0
    if norm > 0.5:
        squarings = int(np.ceil(np.log2(norm / 0.5)))
    a = m / (2.0 ** squarings)
    out = np.eye(m.shape[0], dtype=complex)
    term = np.eye(m.shape[0], dtype=complex)
    for k in range(1, terms + 1):
        term = term @ a / k
        out = out + term
    for _ in range(squarings):
        out = out @ out
    return out


def random_hermitian(rng, n=2, scale=1.0):
    a = rng.uniform(-scale, scale, (n, n)) + 1j * rng.uniform(-scale, scale, (n, n))
    return (a + a.conj().T) / 2.0


class TestUnitaryFromHamiltonian:
    def test_zero_hamiltonian_gives_identity(self):
        u = unitary_from_hamiltonian(np.zeros((2, 2)))
        assert np.allclose(u, np.eye(2), atol=1e-14)

    def test_symmetric_coupler_closed_form(self):
        # exp(-i*theta*sigma_x) = cos(theta)*I - i*sin(theta)*sigma_x
        theta = np.pi / 4
        h = np.array([[0.0, theta], [theta, 0.0]])
        expected = np.array(
            [
                [np.cos(theta), -1j * np.sin(theta)],
                [-1j * np.sin(theta), np.cos(theta)],
            ]
        )
        u = unitary_from_hamiltonian(h)
        assert np.allclose(u, expected, atol=1e-12)
        assert np.allclose(u, expm_series(-1j * h), atol=1e-12)

    def test_random_hermitian_is_unitary(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            u = unitary_from_hamiltonian(random_hermitian(rng))
            assert np.allclose(u.conj().T @ u, np.eye(2), atol=1e-10)

    def test_matches_series_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            h = random_hermitian(rng, scale=5.0)
            u = unitary_from_hamiltonian(h)
            assert np.max(np.abs(u - expm_series(-1j * h))) < 1e-10

    def test_non_hermitian_rejected(self):
        with pytest.raises(ValueError, match="Hermitian"):
            unitary_from_hamiltonian(np.array([[0.0, 1.0], [0.5, 0.0]]))

    def test_non_square_rejected(self):
        with pytest.raises(ValueError, match="square"):
            unitary_from_hamiltonian(np.zeros((2, 3)))


class TestEvolve:
    def test_identity_evolution(self):
        psi = np.array([0.0, 1.0])
        assert np.allclose(evolve(np.eye(2), psi), psi)

    def test_coupler_on_basis_state(self):
        # hand matrix-vector product of the pi/4 coupler acting on [0, 1]
        theta = np.pi / 4
        u = unitary_from_hamiltonian(np.array([[0.0, theta], [theta, 0.0]]))
        out = evolve(u, np.array([0.0, 1.0]))
        expected = np.array([-1j * np.sin(theta), np.cos(theta)])
        assert np.allclose(out, expected, atol=1e-12)

    def test_norm_preserved(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            u = unitary_from_hamiltonian(random_hermitian(rng, scale=3.0))
            psi = rng.normal(size=2) + 1j * rng.normal(size=2)
            psi /= np.linalg.norm(psi)
            assert abs(np.linalg.norm(evolve(u, psi)) - 1.0) < 1e-10

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            evolve(np.eye(3), np.array([0.0, 1.0]))

    def test_unnormalized_state_rejected(self):
        with pytest.raises(ValueError, match="norm"):
            evolve(np.eye(2), np.array([1.0, 1.0]))


class TestMeasure:
    def test_basis_state(self):
        assert np.allclose(measure(np.array([0.0, 1.0])), [0.0, 1.0])

    def test_half_split(self):
        psi = np.array([-1j / np.sqrt(2), 1 / np.sqrt(2)])
        assert np.allclose(measure(psi), [0.5, 0.5], atol=1e-12)

    def test_complex_amplitudes(self):
        # |0.6|^2 = 0.36, |0.8i|^2 = 0.64
        assert np.allclose(measure(np.array([0.6, 0.8j])), [0.36, 0.64], atol=1e-12)

    def test_sums_to_one(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            psi = rng.normal(size=2) + 1j * rng.normal(size=2)
            psi /= np.linalg.norm(psi)
            assert abs(measure(psi).sum() - 1.0) < 1e-12


class TestFidelity:
    def test_identical_distributions(self):
        assert fidelity([0.2, 0.8], [0.2, 0.8]) == pytest.approx(100.0, abs=1e-9)

    def test_orthogonal_distributions(self):
        assert fidelity([0.0, 1.0], [1.0, 0.0]) == pytest.approx(0.0, abs=1e-12)

    def test_half_against_point_mass(self):
        # (sqrt(0.5*1) + sqrt(0.5*0))^2 = 0.5
        assert fidelity([0.5, 0.5], [1.0, 0.0]) == pytest.approx(50.0, abs=1e-9)

    def test_symmetric(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            a = rng.dirichlet([1.0, 1.0])
            b = rng.dirichlet([1.0, 1.0])
            assert fidelity(a, b) == pytest.approx(fidelity(b, a), abs=1e-12)

    def test_equals_100_iff_equal(self):
        rng = np.random.default_rng(13)
        for _ in range(50):
            a = rng.dirichlet([1.0, 1.0])
            b = rng.dirichlet([1.0, 1.0])
            if fidelity(a, b) > 100.0 - 1e-9:
                assert np.allclose(a, b, atol=1e-6)
        assert fidelity([0.3, 0.7], [0.3, 0.7]) > 100.0 - 1e-9

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="length"):
            fidelity([1.0], [0.5, 0.5])

    def test_negative_entries(self):
        with pytest.raises(ValueError, match="negative"):
            fidelity([-0.1, 1.1], [0.5, 0.5])

    def test_vectorized_alpha_form_agrees(self):
        rng = np.random.default_rng(17)
        alphas = rng.uniform(0.0, 1.0, 64)
        target = 0.8
        expected = [fidelity([a, 1.0 - a], [target, 1.0 - target]) for a in alphas]
        assert np.allclose(fidelity_from_alpha(alphas, target), expected, atol=1e-9)


class TestGlobalPhaseInvariance:
    def test_shifting_hamiltonian_trace_leaves_probabilities(self):
        rng = np.random.default_rng(21)
        psi = np.array([0.0, 1.0], dtype=complex)
        for _ in range(100):
            h = random_hermitian(rng, scale=2.0)
            c = rng.uniform(-5.0, 5.0)
            p0 = measure(evolve(unitary_from_hamiltonian(h), psi))
            p1 = measure(evolve(unitary_from_hamiltonian(h + c * np.eye(2)), psi))
            assert np.max(np.abs(p0 - p1)) < 1e-10
