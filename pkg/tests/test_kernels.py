import numpy as np
import pytest

from cholsel.exceptions import SingularBlockError
from cholsel.kernels import (
    KernelSpec,
    KernelSource,
    MatrixSource,
    assemble_covariance,
    conditional_oracle,
    kernel_eval,
)


def random_points(rng, n, d=2):
    return rng.uniform(0.0, 1.0, size=(n, d))


class TestKernelEval:
    def test_zero_distance_is_sill(self):
        spec = KernelSpec(nu=0.5)
        assert kernel_eval(spec, [0.3, 0.7], [0.3, 0.7]) == pytest.approx(1.0)

    def test_matern_half_closed_form(self):
        spec = KernelSpec(nu=0.5)
        assert kernel_eval(spec, [0.0], [1.0]) == pytest.approx(np.exp(-1.0))

    def test_matern_three_halves_closed_form(self):
        spec = KernelSpec(nu=1.5)
        expected = (1 + np.sqrt(3)) * np.exp(-np.sqrt(3))
        assert kernel_eval(spec, [0.0], [1.0]) == pytest.approx(expected)
        assert expected == pytest.approx(0.483358, abs=1e-6)

    def test_matern_five_halves_closed_form(self):
        spec = KernelSpec(nu=2.5)
        expected = (1 + np.sqrt(5) + 5 / 3) * np.exp(-np.sqrt(5))
        assert kernel_eval(spec, [0.0], [1.0]) == pytest.approx(expected)

    def test_dimension_mismatch(self):
        spec = KernelSpec()
        with pytest.raises(ValueError):
            kernel_eval(spec, [0.0, 1.0], [0.0])

    def test_symmetry(self):
        rng = np.random.default_rng(0)
        spec = KernelSpec(nu=2.5, length_scale=0.4, variance=2.0)
        for _ in range(50):
            x, y = rng.normal(size=2 * 3).reshape(2, 3)
            assert kernel_eval(spec, x, y) == kernel_eval(spec, y, x)

    def test_diag_includes_nugget(self):
        spec = KernelSpec(nu=0.5, nugget=0.1)
        assert kernel_eval(spec, [0.5], [0.5]) == pytest.approx(1.1)

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            KernelSpec(nu=1.0)
        with pytest.raises(ValueError):
            KernelSpec(length_scale=0.0)
        with pytest.raises(ValueError):
            KernelSpec(variance=-1.0)
        with pytest.raises(ValueError):
            KernelSpec(nugget=-1e-3)


class TestAssemble:
    def test_single_point(self):
        spec = KernelSpec(nu=0.5, variance=1.5, nugget=0.25)
        theta = assemble_covariance(spec, np.zeros((1, 2)))
        np.testing.assert_allclose(theta, [[1.75]])

    def test_identical_slices_symmetric(self):
        rng = np.random.default_rng(1)
        spec = KernelSpec(nu=1.5, nugget=0.05)
        pts = random_points(rng, 12)
        theta = assemble_covariance(spec, pts)
        np.testing.assert_allclose(theta, theta.T)
        np.testing.assert_allclose(np.diag(theta), 1.05)

    def test_exponential_markov_identity(self):
        # three collinear points: far correlation is the product through the middle
        spec = KernelSpec(nu=0.5)
        pts = np.array([[0.0], [1.0], [2.0]])
        theta = assemble_covariance(spec, pts)
        assert theta[0, 2] == pytest.approx(theta[0, 1] * theta[1, 2])
        assert theta[0, 2] == pytest.approx(np.exp(-2.0))

    def test_nugget_uses_index_identity_not_coordinates(self):
        spec = KernelSpec(nu=0.5, nugget=0.5)
        pts = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]])
        theta = assemble_covariance(spec, pts, rows=[0], cols=[1])
        # same coordinates, different stored points: no nugget
        np.testing.assert_allclose(theta, [[1.0]])
        cross = assemble_covariance(spec, pts, rows=[0, 1], cols=[1, 2])
        assert cross[1, 0] == pytest.approx(1.5)  # index 1 against itself
        assert cross[0, 0] == pytest.approx(1.0)

    def test_positive_definite_on_random_sets(self):
        rng = np.random.default_rng(2)
        spec = KernelSpec(nu=2.5, nugget=1e-8)
        for n in (5, 32, 64):
            theta = assemble_covariance(spec, random_points(rng, n))
            np.linalg.cholesky(theta)  # raises if not PD


class TestConditionalOracle:
    def test_empty_conditioning_is_marginal(self):
        rng = np.random.default_rng(3)
        theta = assemble_covariance(KernelSpec(nu=1.5), random_points(rng, 6))
        np.testing.assert_allclose(
            conditional_oracle(theta, [1, 3], [2, 4]), theta[np.ix_([1, 3], [2, 4])]
        )

    def test_bivariate_posterior_variance(self):
        rho = 0.6
        theta = np.array([[1.0, rho], [rho, 1.0]])
        out = conditional_oracle(theta, [0], [0], [[1]])
        assert out[0, 0] == pytest.approx(1 - rho**2)

    def test_quotient_rule_matches_one_shot(self):
        rng = np.random.default_rng(4)
        theta = assemble_covariance(KernelSpec(nu=2.5, nugget=1e-6),
                                    random_points(rng, 6))
        one_shot = conditional_oracle(theta, [0], [1], [[2, 3, 4, 5]])
        nested = conditional_oracle(theta, [0], [1], [[2, 4], [3, 5]])
        np.testing.assert_allclose(nested, one_shot, rtol=1e-10)

    def test_any_partition_agrees(self):
        rng = np.random.default_rng(5)
        theta = assemble_covariance(KernelSpec(nu=0.5), random_points(rng, 8))
        base = conditional_oracle(theta, [0, 1], [0, 1], [[2, 3, 4, 5, 6]])
        for split in ([[2], [3], [4], [5], [6]], [[2, 3], [4, 5, 6]],
                      [[6, 5], [2], [3, 4]]):
            np.testing.assert_allclose(
                conditional_oracle(theta, [0, 1], [0, 1], split), base, rtol=1e-10
            )

    def test_singular_conditioning_block(self):
        theta = np.ones((3, 3))  # rank one
        with pytest.raises(SingularBlockError):
            conditional_oracle(theta, [0], [0], [[1, 2]])


class TestSources:
    def test_kernel_source_matches_assembly(self):
        rng = np.random.default_rng(6)
        spec = KernelSpec(nu=1.5, nugget=0.01)
        pts = random_points(rng, 10)
        src = KernelSource(spec, pts)
        assert len(src) == 10
        np.testing.assert_allclose(src.block([1, 2], [2, 5]),
                                    assemble_covariance(spec, pts, [1, 2], [2, 5]))
        np.testing.assert_allclose(src.diag([0, 4]), 1.01)

    def test_matrix_source_round_trip(self):
        rng = np.random.default_rng(7)
        a = rng.normal(size=(6, 6))
        theta = a @ a.T + 6 * np.eye(6)
        src = MatrixSource(theta)
        np.testing.assert_allclose(src.block([0, 3], [1, 2]),
                                    theta[np.ix_([0, 3], [1, 2])])
        np.testing.assert_allclose(src.diag([5]), theta[5, 5])
