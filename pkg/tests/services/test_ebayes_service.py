import numpy as np
import pytest

from goalplace.core.exceptions import InputError, NumericalError
from goalplace.schemas.density import CellDensityVector
from goalplace.schemas.ebayes import PriorEnsemble, ShrinkageMode, TimingClipSpec
from goalplace.schemas.netlist import TargetVector
from goalplace.services import ebayes_service


def make_prior(mean, std) -> PriorEnsemble:
    mean = np.asarray(mean, dtype=float)
    std = np.broadcast_to(np.asarray(std, dtype=float), mean.shape)
    half = std / np.sqrt(2.0)
    return PriorEnsemble(
        names=[f"c{i}" for i in range(mean.size)],
        samples=np.column_stack([mean - half, mean + half]),
        mean=mean,
        std=std,
    )


def targets_for(prior: PriorEnsemble, values) -> TargetVector:
    return TargetVector(names=prior.names, values=values)


class TestBuildPrior:
    """Test prior ensemble statistics"""

    def test_matches_two_pass_oracle(self):
        rng = np.random.default_rng(0)
        samples = rng.normal(0.5, 0.1, size=(100, 6))
        names = [f"c{i}" for i in range(100)]
        vectors = [CellDensityVector(names=names, values=samples[:, k]) for k in range(6)]

        prior = ebayes_service.build_prior(vectors)

        mean = samples.sum(axis=1) / 6
        var = ((samples - mean[:, None]) ** 2).sum(axis=1) / 5
        np.testing.assert_allclose(prior.mean, mean, atol=1e-12)
        np.testing.assert_allclose(prior.std, np.sqrt(var), atol=1e-12)
        assert prior.k == 6

    def test_needs_two_vectors(self):
        with pytest.raises(InputError, match="at least 2"):
            ebayes_service.build_prior([CellDensityVector(names=["a"], values=[0.5])])

    def test_mismatched_cells(self):
        vectors = [
            CellDensityVector(names=["a", "b"], values=[0.5, 0.5]),
            CellDensityVector(names=["b", "a"], values=[0.5, 0.5]),
        ]

        with pytest.raises(InputError, match="different cells"):
            ebayes_service.build_prior(vectors)


class TestJamesStein:
    def test_shrink_factor(self):
        # Arrange
        prior = make_prior(np.full(5, 0.5), 0.05)
        z = targets_for(prior, [0.6, 0.4, 0.5, 0.7, 0.3])

        # Act
        result = ebayes_service.james_stein(z, prior, sigma0=0.1)

        # Assert
        s = 0.01 + 0.01 + 0.0 + 0.04 + 0.04
        factor = 1.0 - 3 * 0.01 / s
        assert result.S == pytest.approx(s)
        assert result.shrink_factor == pytest.approx(factor)
        np.testing.assert_allclose(result.estimates, 0.5 + factor * (z.values - 0.5))
        assert result.mode == ShrinkageMode.js

    def test_large_residuals_leave_observations(self):
        rng = np.random.default_rng(1)
        prior = make_prior(np.zeros(200), 0.1)
        z = targets_for(prior, rng.normal(0.0, 1.0, 200) * 1e6)

        result = ebayes_service.james_stein(z, prior, sigma0=0.1, floor=1e-3)

        assert result.shrink_factor == pytest.approx(1.0, abs=1e-9)
        np.testing.assert_allclose(result.raw_estimates, z.values, atol=1e-3)

    def test_negative_factor_is_reported(self):
        prior = make_prior(np.full(10, 0.5), 0.05)
        z = targets_for(prior, 0.5 + np.linspace(-0.01, 0.01, 10))

        result = ebayes_service.james_stein(z, prior, sigma0=0.2)

        assert result.shrink_factor < 0
        assert result.sidecar()["B_hat"] == result.shrink_factor

    def test_clamped_to_physical_range(self):
        prior = make_prior(np.full(4, 0.9), 0.05)
        z = targets_for(prior, [1.5, 1.4, 0.9, 0.1])

        result = ebayes_service.james_stein(z, prior, sigma0=0.01)

        assert result.estimates.max() <= 1.0
        assert result.clamped_count == 2
        assert result.raw_estimates.max() > 1.0

    def test_auto_sigma(self):
        prior = make_prior(np.full(4, 0.5), 0.05)
        z = targets_for(prior, [0.2, 0.4, 0.6, 0.8])

        result = ebayes_service.james_stein(z, prior)

        assert result.sigma0 == pytest.approx(np.std(z.values, ddof=1))

    def test_zero_residual(self):
        prior = make_prior(np.full(4, 0.5), 0.05)

        with pytest.raises(NumericalError, match="undefined"):
            ebayes_service.james_stein(targets_for(prior, np.full(4, 0.5)), prior, sigma0=0.1)

    def test_too_few_cells(self):
        prior = make_prior([0.5, 0.5], 0.05)

        with pytest.raises(InputError, match="N >= 3"):
            ebayes_service.james_stein(targets_for(prior, [0.4, 0.6]), prior, sigma0=0.1)


class TestTimingClip:
    """Test the restricted-translation bound"""

    def test_bound_on_random_instances(self):
        rng = np.random.default_rng(7)
        violations = 0
        for _ in range(200):
            n = int(rng.integers(3, 60))
            prior = make_prior(rng.uniform(0.2, 0.8, n), 0.05)
            z = targets_for(prior, rng.uniform(0.0, 1.0, n))
            js = ebayes_service.james_stein(z, prior, sigma0=float(rng.uniform(0.01, 0.5)))
            budgets = rng.integers(1, 11, n).astype(float)
            clip = TimingClipSpec(names=prior.names, budgets=budgets, quantile_count=10)

            jsd = ebayes_service.js_timing_clip(js, z, prior, clip)

            gap = np.abs(jsd.raw_estimates - z.values)
            lo = np.minimum(js.raw_estimates, z.values)
            hi = np.maximum(js.raw_estimates, z.values)
            violations += int(np.sum(gap > budgets * js.sigma0 + 1e-12))
            violations += int(np.sum((jsd.raw_estimates < lo - 1e-12) | (jsd.raw_estimates > hi + 1e-12)))

        assert violations == 0

    def test_mode_and_untouched_cells(self):
        prior = make_prior(np.full(5, 0.5), 0.05)
        z = targets_for(prior, [0.9, 0.1, 0.5, 0.55, 0.45])
        js = ebayes_service.james_stein(z, prior, sigma0=0.3)
        clip = TimingClipSpec(names=prior.names, budgets=[1.0, np.inf, 10.0, 10.0, 10.0])

        jsd = ebayes_service.js_timing_clip(js, z, prior, clip)

        assert jsd.mode == ShrinkageMode.jsd
        assert jsd.raw_estimates[0] == pytest.approx(0.9 - 0.3)
        assert jsd.raw_estimates[1] == js.raw_estimates[1]

    def test_requires_js_result(self):
        prior = make_prior(np.full(5, 0.5), 0.05)
        z = targets_for(prior, [0.9, 0.1, 0.5, 0.55, 0.45])
        jsd = ebayes_service.js_timing_clip(
            ebayes_service.james_stein(z, prior, sigma0=0.3), z, prior,
            TimingClipSpec(names=prior.names, budgets=np.ones(5)),
        )

        with pytest.raises(InputError, match="James-Stein"):
            ebayes_service.js_timing_clip(jsd, z, prior, TimingClipSpec(names=prior.names, budgets=np.ones(5)))


class TestSlackToBudget:
    def test_buckets_are_balanced(self):
        slacks = np.random.default_rng(3).normal(0, 1, 997)
        names = [f"c{i}" for i in range(997)]

        spec = ebayes_service.slack_to_budget(slacks, names, quantile_count=10)

        sizes = np.bincount(spec.budgets.astype(int))[1:]
        assert sizes.size == 10
        assert sizes.max() - sizes.min() <= 1
        assert spec.budgets[np.argmin(slacks)] == 1
        assert spec.budgets[np.argmax(slacks)] == 10

    def test_missing_slack_is_non_critical(self):
        spec = ebayes_service.slack_to_budget(np.array([-1.0, np.nan, 1.0]), ["a", "b", "c"], quantile_count=4)

        assert spec.budgets[1] == 4
        assert spec.budgets[0] == 1

    def test_constant_slack(self):
        spec = ebayes_service.slack_to_budget(np.zeros(5), list("abcde"), quantile_count=3)

        np.testing.assert_array_equal(spec.budgets, 3)


class TestHeteroShrink:
    """Test per-cell shrinkage"""

    def test_equal_variances_reduce_to_james_stein(self):
        rng = np.random.default_rng(11)
        n = 10_000
        prior = make_prior(np.full(n, 0.5), 0.1)
        z = targets_for(prior, 0.5 + rng.normal(0.0, np.sqrt(0.03), n))

        hetero = ebayes_service.hetero_shrink(z, prior)
        js = ebayes_service.james_stein(z, prior, sigma0=0.1)

        factors = hetero.shrink_factor
        assert factors.max() - factors.min() <= 1e-6
        assert abs(float(factors.mean()) - js.shrink_factor) <= 1e-2
        np.testing.assert_allclose(hetero.d_star, n + 2, rtol=1e-6)

    def test_fixed_point_is_self_consistent(self):
        rng = np.random.default_rng(5)
        n = 1500
        std = rng.uniform(0.03, 0.15, n)
        prior = make_prior(rng.uniform(0.3, 0.7, n), std)
        z = targets_for(prior, prior.mean + rng.normal(0.0, np.sqrt(0.02 + std**2)))

        result = ebayes_service.hetero_shrink(z, prior)

        mapped = ebayes_service.hetero_fixed_point_map(result.fixed_point, z, prior)
        np.testing.assert_allclose(mapped, result.fixed_point, atol=1e-9)
        assert result.mode == ShrinkageMode.js_hetero
        assert np.all((result.shrink_factor > 0) & (result.shrink_factor < 1))

    def test_noisier_cells_shrink_more(self):
        rng = np.random.default_rng(9)
        n = 400
        std = np.where(np.arange(n) % 2 == 0, 0.02, 0.2)
        prior = make_prior(np.full(n, 0.5), std)
        z = targets_for(prior, 0.5 + rng.normal(0.0, np.sqrt(0.01 + std**2)))

        factors = ebayes_service.hetero_shrink(z, prior).shrink_factor

        assert factors[::2].mean() > factors[1::2].mean()

    def test_zero_prior_variance(self):
        prior = make_prior(np.full(6, 0.5), [0.1, 0.1, 0.0, 0.1, 0.1, 0.1])

        with pytest.raises(InputError, match="c2"):
            ebayes_service.hetero_shrink(targets_for(prior, np.linspace(0.2, 0.8, 6)), prior)

    def test_non_convergence(self):
        rng = np.random.default_rng(2)
        prior = make_prior(np.full(50, 0.5), rng.uniform(0.05, 0.2, 50))
        z = targets_for(prior, rng.uniform(0.0, 1.0, 50))

        with pytest.raises(NumericalError) as exc_info:
            ebayes_service.hetero_shrink(z, prior, max_iter=1, tol=1e-30)

        assert "iterations" in exc_info.value.diagnostics


class TestRisk:
    """Test the Monte Carlo risk comparison"""

    @pytest.mark.slow
    def test_js_close_to_bayes(self):
        report = ebayes_service.risk_report(trials=1000, N=1000, A=0.04, sigma0=0.2, seed=0)

        assert report.js_win_fraction >= 0.99
        assert report.theoretical_ratio == pytest.approx(1.002)
        assert abs(report.ratio_JS_Bayes - report.theoretical_ratio) <= 0.1 * report.theoretical_ratio
        assert report.R_JS < report.R_MLE

    def test_flat_prior_gives_no_gain(self):
        report = ebayes_service.risk_report(trials=200, N=500, A=1e6 * 0.04, sigma0=0.2, seed=1)

        assert report.ratio_JS_MLE == pytest.approx(1.0, abs=0.01)

    def test_deterministic_across_threads(self):
        one = ebayes_service.risk_report(trials=300, N=50, A=0.04, sigma0=0.2, seed=4, threads=1)
        two = ebayes_service.risk_report(trials=300, N=50, A=0.04, sigma0=0.2, seed=4, threads=2)

        assert one == two

    @pytest.mark.parametrize("kwargs, message", [
        ({"N": 2}, "N >= 3"),
        ({"trials": 10}, "100 trials"),
        ({"A": 0.0}, "positive"),
    ])
    def test_invalid_parameters(self, kwargs, message):
        params = {"trials": 100, "N": 10, "A": 0.04, "sigma0": 0.2, "seed": 0} | kwargs

        with pytest.raises(InputError, match=message):
            ebayes_service.risk_report(**params)


class TestNormality:
    def test_gaussian_ensemble_mostly_passes(self):
        rng = np.random.default_rng(0)
        samples = rng.normal(0.5, 0.05, size=(200, 30))
        prior = PriorEnsemble(
            names=[f"c{i}" for i in range(200)], samples=samples,
            mean=samples.mean(axis=1), std=samples.std(axis=1, ddof=1),
        )

        report = ebayes_service.normality_check(prior)

        assert report.tested == 200
        assert report.pass_fraction > 0.85

    def test_constant_cells_skipped(self):
        samples = np.vstack([np.full(8, 0.5), np.linspace(0.1, 0.9, 8)])
        prior = PriorEnsemble(names=["flat", "ramp"], samples=samples,
                              mean=samples.mean(axis=1), std=samples.std(axis=1, ddof=1))

        report = ebayes_service.normality_check(prior)

        assert report.skipped == ["flat"]
        assert report.tested == 1

    def test_needs_eight_samples(self):
        with pytest.raises(InputError, match="K >= 8"):
            ebayes_service.normality_check(make_prior(np.full(3, 0.5), 0.1))
