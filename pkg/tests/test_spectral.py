import math

import numpy as np
import pytest
from scipy.linalg import eigh as generalized_eigh

from exit_spectrum import (
    build_chain,
    exit_moments,
    exp_moment_exact,
    full_spectrum,
    kill,
    principal_pair,
    spectral_moments,
)
from exit_spectrum.errors import BetaAtOrAboveLambda0, TooLargeForDense

SQ5 = math.sqrt(5)


def generalized_oracle(kg):
    """Eigenvalues of the generalized problem diag(mu) A v = lam diag(mu) v."""
    W = kg.mu_omega[:, None] * kg.A
    return generalized_eigh(0.5 * (W + W.T), np.diag(kg.mu_omega), eigvals_only=True)


class TestPrincipalPair:
    def test_scalar(self, one_state):
        lam, phi = principal_pair(one_state)
        assert lam == 2.0
        np.testing.assert_allclose(phi, [1.0])

    def test_birth_death(self, birth_death):
        lam, phi = principal_pair(birth_death)
        assert lam == pytest.approx((3 - SQ5) / 2, rel=1e-14)
        assert np.dot(birth_death.mu_omega, phi**2) == pytest.approx(1.0)
        assert np.dot(birth_death.mu_omega, phi) > 0

    def test_brownian_closed_form(self, brownian):
        h = 1 / 1000
        lam, _ = principal_pair(brownian)
        assert lam == pytest.approx(4 / h**2 * math.sin(math.pi * h / 2) ** 2, rel=1e-11)

    def test_random_chain(self, random_chain):
        lam, phi = principal_pair(random_chain)
        assert lam == pytest.approx(generalized_oracle(random_chain)[0], rel=1e-12)
        # positive eigenvector for an irreducible chain
        assert np.all(phi > 0)


class TestFullSpectrum:
    def test_birth_death_eigenvalues(self, birth_death):
        spec = full_spectrum(birth_death)
        np.testing.assert_allclose(spec.lam, [(3 - SQ5) / 2, (3 + SQ5) / 2], rtol=1e-14)
        np.testing.assert_allclose(spec.mass**2, [1.894427191, 0.105572809], rtol=1e-9)

    def test_random_chain_against_generalized(self, random_chain):
        spec = full_spectrum(random_chain)
        np.testing.assert_allclose(spec.lam, generalized_oracle(random_chain), rtol=1e-11)
        gram = (spec.phi * spec.mu[None, :]) @ spec.phi.T
        np.testing.assert_allclose(gram, np.eye(random_chain.n), atol=1e-12)

    def test_parseval(self, chain_fixture):
        spec = full_spectrum(chain_fixture)
        assert np.sum(spec.mass**2) == pytest.approx(chain_fixture.mu_total, rel=1e-12)

    def test_brownian_sine_modes(self, brownian):
        spec = full_spectrum(brownian)
        for i in range(6):
            j = i + 1
            assert spec.lam[i] == pytest.approx((j * math.pi) ** 2, rel=1e-4)
            sine_mass = math.sqrt(2) * (1 - math.cos(j * math.pi)) / (j * math.pi)
            assert spec.mass[i] ** 2 == pytest.approx(sine_mass**2, abs=1e-5)

    def test_degenerate_cluster(self):
        # two disconnected copies of the same state: one double eigenvalue
        g = build_chain([[-1.0, 0.0], [0.0, -1.0]], [1.0, 1.0])
        spec = full_spectrum(kill(g))
        assert spec.cluster.tolist() == [0, 0]
        lam, m2 = spec.cluster_sums()
        np.testing.assert_allclose(lam, [1.0])
        np.testing.assert_allclose(m2, [2.0])

    def test_dense_cap(self, brownian):
        with pytest.raises(TooLargeForDense):
            full_spectrum(brownian, dense_cap=100)


class TestSpectralMoments:
    def test_scalar(self, one_state):
        spec = full_spectrum(one_state)
        for k in range(1, 8):
            assert spectral_moments(spec, k) == pytest.approx(math.factorial(k) / 2**k, rel=1e-15)

    def test_birth_death_k1(self, birth_death):
        spec = full_spectrum(birth_death)
        assert spectral_moments(spec, 1) == pytest.approx(5.0, rel=1e-14)

    def test_brownian_series(self):
        # closed-form sine series for T_1 with 500 odd modes
        series = sum(8 / ((2 * j + 1) ** 4 * math.pi**4) for j in range(500))
        assert series == pytest.approx(1 / 12, abs=1e-6)

    def test_agrees_with_recursion(self, chain_fixture):
        spec = full_spectrum(chain_fixture)
        mt = exit_moments(chain_fixture, 10)
        for k in range(1, 11):
            assert spectral_moments(spec, k) == pytest.approx(mt.T[k], rel=1e-10)

    def test_brownian_recursion(self, brownian):
        spec = full_spectrum(brownian)
        mt = exit_moments(brownian, 3)
        for k in (1, 2, 3):
            assert spectral_moments(spec, k) == pytest.approx(mt.T[k], rel=1e-8)


class TestExpMomentExact:
    def test_beta_zero(self, birth_death):
        spec = full_spectrum(birth_death)
        assert exp_moment_exact(spec, 2.0, 0.0) == 2.0

    def test_exponential(self, one_state):
        assert exp_moment_exact(full_spectrum(one_state), 1.0, 1.0) == pytest.approx(2.0)

    def test_sandwich_half(self, chain_fixture):
        spec = full_spectrum(chain_fixture)
        beta = spec.lambda0 / 2
        v = exp_moment_exact(spec, chain_fixture.mu_total, beta)
        factor = 1 + beta / (spec.lambda0 - beta)
        assert factor * spec.mass0_sq * (1 - 1e-12) <= v <= factor * chain_fixture.mu_total * (1 + 1e-12)

    def test_beta_at_lambda0(self, birth_death):
        spec = full_spectrum(birth_death)
        with pytest.raises(BetaAtOrAboveLambda0):
            exp_moment_exact(spec, 2.0, spec.lambda0)
