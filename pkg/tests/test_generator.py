import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from exit_spectrum import (
    GridSpec,
    build_chain,
    build_diffusion_1d,
    build_fractional_1d,
    build_time_changed_1d,
    principal_pair,
)
from exit_spectrum.errors import (
    AlphaOutOfRange,
    DetailedBalanceViolation,
    DimensionMismatch,
    InvalidGrid,
    NegativeOffDiagonal,
    NonFinitePotential,
    NonpositiveWeight,
    SigmaNonpositive,
)
from exit_spectrum.generator import fractional_constant, fractional_matrix

from conftest import reversible_chain


class TestBuildChain:
    def test_one_way_chain_is_valid(self):
        g = build_chain([[-2.0, 2.0], [0.0, 0.0]], [1.0, 1.0])
        assert g.n == 2
        assert g.L[0, 1] == 2.0
        assert g.absorbing.tolist() == [False, True]

    def test_three_state_birth_death(self):
        L = [[-1, 1, 0], [1, -2, 1], [0, 1, -1]]
        g = build_chain(L, [1, 1, 1])
        assert g.detailed_balance_residual() == 0.0
        np.testing.assert_array_equal(g.killing, [0, 0, 0])

    def test_balance_violation_reports_pair(self):
        with pytest.raises(DetailedBalanceViolation) as err:
            build_chain([[-1.0, 1.0], [1.0, -1.0]], [1.0, 2.0])
        assert set(err.value.pair) == {0, 1}
        assert err.value.module == "generator"

    def test_negative_off_diagonal(self):
        with pytest.raises(NegativeOffDiagonal):
            build_chain([[-1.0, -1.0], [-1.0, -1.0]], [1.0, 1.0])

    def test_positive_row_sum_rejected(self):
        with pytest.raises(NegativeOffDiagonal):
            build_chain([[0.5, 1.0], [1.0, -1.0]], [1.0, 1.0])

    def test_nonpositive_weight(self):
        with pytest.raises(NonpositiveWeight):
            build_chain([[-1.0]], [0.0])

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            build_chain([[-1.0, 0.0], [0.0, -1.0]], [1.0])

    def test_normalize(self):
        L = [[-1, 1, 0], [1, -2, 1], [0, 1, -1]]
        g = build_chain(L, [2, 2, 2])
        assert g.mu_total == 6
        assert math.isclose(g.normalized().mu_total, 1.0)
        np.testing.assert_allclose(build_chain(L, [2, 2, 2], normalize=True).mu, [1 / 3] * 3)

    def test_immutable(self):
        g = build_chain([[-1.0]], [1.0])
        with pytest.raises(ValueError):
            g.L[0, 0] = 3.0

    @settings(max_examples=30, deadline=None)
    @given(st.integers(min_value=2, max_value=15), st.integers(min_value=0, max_value=10_000))
    def test_random_reversible_chains_validate(self, n, seed):
        L, mu = reversible_chain(n, seed)
        g = build_chain(L, mu)
        assert g.detailed_balance_residual() < 1e-12


class TestDiffusion:
    def test_zero_potential_is_standard_stencil(self):
        grid = GridSpec(0.0, 1.0, 9)
        g = build_diffusion_1d(grid, lambda x: 0.0 * x)
        h = grid.h
        np.testing.assert_allclose(np.diag(g.L), -2 / h**2, rtol=1e-14)
        np.testing.assert_allclose(np.diag(g.L, 1), 1 / h**2, rtol=1e-14)
        np.testing.assert_allclose(np.diag(g.L, -1), 1 / h**2, rtol=1e-14)
        assert np.count_nonzero(np.triu(g.L, 2)) == 0

    def test_principal_eigenvalue_closed_form(self, brownian):
        h = 1.0 / 1000
        exact_discrete = 4 / h**2 * math.sin(math.pi * h / 2) ** 2
        lam, _ = principal_pair(brownian)
        assert abs(lam - exact_discrete) / exact_discrete < 1e-10
        assert abs(lam - math.pi**2) / math.pi**2 < 1e-5

    def test_linear_potential_balance(self):
        g = build_diffusion_1d(GridSpec(0.0, 1.0, 200), lambda x: x)
        assert g.detailed_balance_residual() < 1e-14

    def test_boundary_edges_kill(self):
        g = build_diffusion_1d(GridSpec(0.0, 1.0, 5), lambda x: 0.0 * x)
        k = g.killing
        assert k[0] > 0 and k[-1] > 0
        np.testing.assert_allclose(k[1:-1], 0.0, atol=1e-9)

    def test_scalar_only_potential(self):
        g = build_diffusion_1d(GridSpec(0.0, 1.0, 10), lambda x: math.sin(x))
        assert g.n == 10

    def test_nonfinite_potential(self):
        with pytest.raises(NonFinitePotential):
            build_diffusion_1d(GridSpec(0.0, 1.0, 10), lambda x: np.where(x < 0.5, np.inf, 0.0))

    def test_bad_grid(self):
        with pytest.raises(InvalidGrid):
            GridSpec(1.0, 0.0, 10)
        with pytest.raises(InvalidGrid):
            GridSpec(0.0, 1.0, 0)


def _richardson_lambda0(alpha, ns=(500, 1000, 2000)):
    # independent extrapolation: fit lam(h) = lam* + c h^p through three grids
    lams = []
    for n in ns:
        kg = build_fractional_1d(GridSpec(-1.0, 1.0, n), alpha)
        lams.append(np.linalg.eigvalsh(kg.A)[0])
    l1, l2, l3 = lams
    p = math.log2(abs(l1 - l2) / abs(l2 - l3))
    return l3 - (l2 - l3) / (2**p - 1), lams


class TestFractional:
    def test_constant_alpha_one(self):
        assert math.isclose(fractional_constant(1.0), 1 / math.pi, rel_tol=1e-14)

    def test_matrix_is_symmetric_m_matrix(self):
        F = fractional_matrix(GridSpec(-1.0, 1.0, 50), 1.3)
        np.testing.assert_allclose(F, F.T, rtol=0, atol=0)
        off = F - np.diag(np.diag(F))
        assert np.all(off <= 0)
        assert np.all(np.diag(F) > -off.sum(axis=1))

    def test_blm_sandwich_alpha_one(self):
        kg = build_fractional_1d(GridSpec(-1.0, 1.0, 2000), 1.0)
        lam, _ = principal_pair(kg)
        assert 1.0 <= lam <= math.pi / 2

    def test_converged_alpha_one_reference(self):
        ref, lams = _richardson_lambda0(1.0)
        assert abs(ref - 1.1578) / 1.1578 < 2e-3
        assert abs(lams[-1] - ref) / ref < 0.02

    def test_alpha_near_two(self):
        kg = build_fractional_1d(GridSpec(-1.0, 1.0, 2000), 1.99)
        lam, _ = principal_pair(kg)
        assert abs(lam - (math.pi / 2) ** 1.99) / (math.pi / 2) ** 1.99 < 0.05
        assert lam < (math.pi / 2) ** 2

    def test_alpha_out_of_range(self):
        with pytest.raises(AlphaOutOfRange):
            build_fractional_1d(GridSpec(-1.0, 1.0, 10), 2.0)
        with pytest.raises(AlphaOutOfRange):
            build_fractional_1d(GridSpec(-1.0, 1.0, 10), 0.0)

    def test_normalize(self):
        kg = build_fractional_1d(GridSpec(-1.0, 1.0, 20), 1.0, normalize=True)
        assert math.isclose(kg.mu_total, 1.0)


class TestTimeChanged:
    def test_unit_sigma_matches_fractional(self):
        grid = GridSpec(0.0, 10.0, 100)
        a = build_time_changed_1d(grid, 1.5, lambda x: 1.0 + 0.0 * x)
        b = build_fractional_1d(grid, 1.5)
        np.testing.assert_allclose(a.A, b.A, rtol=0, atol=1e-14)
        np.testing.assert_allclose(a.mu_omega, b.mu_omega, rtol=0, atol=1e-14)

    def test_balance(self):
        kg = build_time_changed_1d(GridSpec(0.0, 200.0, 400), 1.5, lambda x: np.sqrt(1 + x**2))
        assert kg.parent.detailed_balance_residual() < 1e-12

    def test_sigma_nonpositive(self):
        with pytest.raises(SigmaNonpositive):
            build_time_changed_1d(GridSpec(0.0, 2.0, 10), 1.5, lambda x: x - 1.0)

    def test_alpha_range(self):
        with pytest.raises(AlphaOutOfRange):
            build_time_changed_1d(GridSpec(0.0, 2.0, 10), 1.0, lambda x: 1.0 + 0 * x)
