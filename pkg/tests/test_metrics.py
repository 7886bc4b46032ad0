import numpy as np
import pytest
from scipy.stats import norm

from cholsel.exceptions import NotPositiveDefiniteError
from cholsel.factorization import column_entries, entries_for_pattern, factorize
from cholsel.kernels import KernelSpec, assemble_covariance
from cholsel.metrics import (
    MetricReport,
    coverage,
    iou,
    kl_dense,
    kl_factor,
    norm_quantile,
    rmse,
)


def random_spd(rng, n):
    a = rng.normal(size=(n, n))
    return a @ a.T + n * np.eye(n)


class TestKlDense:
    def test_identical_inputs_give_zero(self):
        rng = np.random.default_rng(0)
        theta = random_spd(rng, 8)
        assert kl_dense(theta, theta) == pytest.approx(0.0, abs=1e-12)

    def test_scalar_closed_form(self):
        got = kl_dense(np.array([[1.0]]), np.array([[2.0]]))
        expect = 0.5 * (0.5 + np.log(2.0) - 1.0)
        assert got == pytest.approx(expect)
        assert got == pytest.approx(0.096574, abs=1e-6)

    def test_asymmetry(self):
        rng = np.random.default_rng(1)
        a, b = random_spd(rng, 6), random_spd(rng, 6)
        assert kl_dense(a, b) != pytest.approx(kl_dense(b, a), rel=1e-3)

    def test_nonnegative_on_random_pairs(self):
        rng = np.random.default_rng(2)
        for _ in range(25):
            a, b = random_spd(rng, 5), random_spd(rng, 5)
            assert kl_dense(a, b) >= -1e-10

    def test_rejects_non_spd(self):
        bad = np.array([[1.0, 2.0], [2.0, 1.0]])
        good = np.eye(2)
        with pytest.raises(NotPositiveDefiniteError):
            kl_dense(bad, good)
        with pytest.raises(NotPositiveDefiniteError):
            kl_dense(good, bad)


class TestKlFactor:
    def _factor(self, seed=3, n=30, method="select", rho=1.5):
        rng = np.random.default_rng(seed)
        pts = rng.uniform(size=(n, 2))
        spec = KernelSpec(nu=1.5)
        return pts, spec, factorize(spec, pts, method, rho=rho)

    def test_matches_dense_divergence(self):
        pts, spec, res = self._factor()
        theta = assemble_covariance(spec, pts)
        perm = res.factor.perm
        theta_p = theta[np.ix_(perm, perm)]
        L = res.factor.matrix.toarray()
        dense = kl_dense(theta_p, np.linalg.inv(L @ L.T))
        assert kl_factor(spec, pts, res.factor) == pytest.approx(
            dense, rel=1e-6, abs=1e-10)

    def test_full_pattern_is_zero(self):
        pts, spec, res = self._factor(method="rho_ball", rho=np.inf, n=20)
        assert abs(kl_factor(spec, pts, res.factor)) < 1e-6

    def test_relative_mode_matches_difference(self):
        pts, spec, res = self._factor(seed=4)
        ref = factorize(spec, pts, "rho_ball", rho=np.inf)
        direct = kl_factor(spec, pts, res.factor) - kl_factor(
            spec, pts, ref.factor)
        relative = kl_factor(spec, pts, res.factor, reference=ref.factor)
        assert relative == pytest.approx(direct, rel=1e-6, abs=1e-9)

    def test_size_cap_instructs_relative_mode(self):
        pts, spec, res = self._factor(seed=5, n=12)
        with pytest.raises(ValueError, match="reference"):
            kl_factor(spec, pts, res.factor, max_dense=10)

    def test_invariant_under_tail_order_of_sparsity_set(self):
        # the entries follow the listed set order, but the divergence of the
        # resulting factor does not depend on how the tail was listed
        rng = np.random.default_rng(6)
        pts = rng.uniform(size=(10, 2))
        spec = KernelSpec(nu=1.5)
        res = factorize(spec, pts, "rho_ball", rho=2.0)
        perm = res.factor.perm
        total_sorted, total_shuffled = 0.0, 0.0
        for i, col in enumerate(res.pattern.columns):
            vals = column_entries(spec, pts, perm[col])
            total_sorted += np.log(vals[0])
            tail = col[1:].copy()
            rng.shuffle(tail)
            shuffled = np.concatenate([[col[0]], tail])
            vals2 = column_entries(spec, pts, perm[shuffled])
            total_shuffled += np.log(vals2[0])
        assert total_shuffled == pytest.approx(total_sorted, rel=1e-10)


class TestSimpleMetrics:
    def test_rmse_zero_for_identical(self):
        x = np.arange(5.0)
        assert rmse(x, x) == 0.0

    def test_rmse_value(self):
        assert rmse([0.0, 0.0], [3.0, 4.0]) == pytest.approx(np.sqrt(12.5))

    def test_coverage_perfect_predictions(self):
        x = np.arange(4.0)
        assert coverage(x, np.ones(4), x, level=0.9) == 1.0

    def test_coverage_calibrated_gaussian(self):
        rng = np.random.default_rng(7)
        truth = rng.normal(size=200_000)
        got = coverage(np.zeros_like(truth), np.ones_like(truth), truth, 0.9)
        assert got == pytest.approx(0.9, abs=5e-3)

    def test_coverage_level_validation(self):
        with pytest.raises(ValueError):
            coverage([0.0], [1.0], [0.0], level=1.5)

    def test_iou_identical(self):
        pat = [np.array([0, 2, 3]), np.array([1, 3]), np.array([2]),
               np.array([3])]
        assert iou(pat, pat) == 1.0

    def test_iou_disjoint_offdiagonal(self):
        a = [np.array([0, 1]), np.array([1]), np.array([2])]
        b = [np.array([0, 2]), np.array([1]), np.array([2])]
        assert iou(a, b) == 0.0

    def test_iou_ignores_diagonal(self):
        a = [np.array([0]), np.array([1])]
        b = [np.array([0, 1]), np.array([1])]
        assert iou(a, a) == 1.0
        assert iou(a, b) == 0.0

    def test_metric_report_validation(self):
        with pytest.raises(ValueError):
            MetricReport(iou=1.5)
        MetricReport(kl=0.1, iou=0.5, coverage=0.9, nnz=10)


class TestNormQuantile:
    def test_matches_scipy_everywhere(self):
        qs = np.concatenate([
            np.linspace(1e-9, 1e-3, 50),
            np.linspace(1e-3, 1 - 1e-3, 200),
            np.linspace(1 - 1e-3, 1 - 1e-9, 50),
        ])
        got = norm_quantile(qs)
        expect = norm.ppf(qs)
        assert np.max(np.abs(got - expect)) < 1e-8

    def test_symmetry(self):
        assert norm_quantile(0.975) == pytest.approx(-norm_quantile(0.025))

    def test_bounds(self):
        with pytest.raises(ValueError):
            norm_quantile(0.0)
        with pytest.raises(ValueError):
            norm_quantile(1.0)
