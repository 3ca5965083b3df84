import numpy as np
import pytest
from scipy.stats import norm

from bvm_lab.diagnostics import (
    contraction_probe,
    coverage_for_model,
    credible_coverage,
    moment_gap,
    tail_mass_probe,
    tv_grid,
    tv_grid_for_density,
    tv_importance,
    tv_importance_for_density,
)
from bvm_lab.forward import Bounds, GridSpec, MediumField, ProblemData
from bvm_lab.gaussian import FrozenGaussian, gaussian_ball_tail, gaussian_box_mass
from bvm_lab.models import LinearForwardModel
from bvm_lab.posterior import UniformPrior, gaussian_approx, synthesize_data
from bvm_lab.samplers import ChainConfig, SampleSet, run_rwm
from bvm_lab.sweep import default_truth

BOUNDS = Bounds(0.1, 10.0)


def scalar_spec(noise_n=1e4, seed=7):
    grid = GridSpec(2)
    data = ProblemData.constant(grid)
    q0 = MediumField(np.array([1.0]), BOUNDS)
    return synthesize_data(grid, data, q0, noise_n, seed)


def d4_spec(noise_n=1e6, seed=21):
    grid = GridSpec(3)
    data = ProblemData.constant(grid)
    return synthesize_data(grid, data, default_truth(grid), noise_n, seed)


class TestGaussianHelpers:
    def test_box_mass_1d(self):
        mass = gaussian_box_mass(np.array([1.0]), np.array([[4.0]]), 0.0, 3.0)
        expected = norm.cdf(1.0) - norm.cdf(-0.5)
        assert mass == pytest.approx(expected, abs=1e-12)

    def test_box_mass_2d_matches_monte_carlo(self):
        mean = np.array([0.5, 0.2])
        cov = np.array([[1.0, 0.3], [0.3, 0.5]])
        mass = gaussian_box_mass(mean, cov, -0.5, 1.2)
        rng = np.random.default_rng(1)
        draws = rng.multivariate_normal(mean, cov, 500_000)
        mc = np.mean(np.all((draws >= -0.5) & (draws <= 1.2), axis=1))
        assert mass == pytest.approx(mc, abs=3e-3)

    def test_ball_tail_1d_closed_form(self):
        mean, var, r = 0.4, 2.0, 1.7
        tail = gaussian_ball_tail(np.array([mean]), np.array([[var]]), r)
        s = np.sqrt(var)
        expected = 1.0 - (norm.cdf((r - mean) / s) - norm.cdf((-r - mean) / s))
        assert tail == pytest.approx(expected, abs=1e-12)

    def test_ball_tail_matches_monte_carlo(self):
        mean = np.array([0.3, -1.0, 2.0, 0.5])
        cov = np.diag([1.0, 4.0, 0.25, 9.0])
        cov[0, 1] = cov[1, 0] = 0.7
        tail = gaussian_ball_tail(mean, cov, 4.0)
        rng = np.random.default_rng(0)
        draws = rng.multivariate_normal(mean, cov, 400_000)
        mc = np.mean(np.linalg.norm(draws, axis=1) > 4.0)
        assert tail == pytest.approx(mc, abs=3e-3)

    def test_frozen_gaussian_logpdf(self):
        from scipy.stats import multivariate_normal

        mean = np.array([1.0, -2.0])
        cov = np.array([[2.0, 0.4], [0.4, 1.0]])
        g = FrozenGaussian(mean, cov)
        x = np.array([[0.0, 0.0], [1.5, -1.0]])
        np.testing.assert_allclose(
            g.logpdf(x), multivariate_normal(mean, cov).logpdf(x), rtol=1e-12
        )


class TestTvGrid:
    def test_gaussian_against_itself(self):
        g = FrozenGaussian(np.array([0.0]), np.array([[1.0]]))
        value = tv_grid_for_density(g.logpdf, -30.0, 30.0, g, 2000)
        assert value <= 1e-3

    def test_disjoint_supports(self):
        # Target uniform on [0, 1]; Gaussian far away with tiny variance.
        g = FrozenGaussian(np.array([100.0]), np.array([[1e-4]]))
        value = tv_grid_for_density(
            lambda q: 0.0 if 0.0 <= q[0] <= 1.0 else -np.inf, 0.0, 1.0, g, 400
        )
        assert value >= 0.999

    def test_decreasing_in_noise(self):
        values = []
        for n in (1e2, 1e6):
            spec = scalar_spec(noise_n=n, seed=0)
            approx = gaussian_approx(spec)
            values.append(tv_grid(spec, approx, 1000).value)
        assert values[1] < values[0]

    def test_scaling_invariance(self):
        spec = scalar_spec()
        approx = gaussian_approx(spec)
        from bvm_lab.posterior import log_posterior_unnorm

        base = tv_grid_for_density(
            lambda q: log_posterior_unnorm(spec, q),
            BOUNDS.lo, BOUNDS.hi, approx.orig_gaussian, 500,
        )
        for log_c in (-7.0, 13.0):
            scaled = tv_grid_for_density(
                lambda q: log_posterior_unnorm(spec, q) + log_c,
                BOUNDS.lo, BOUNDS.hi, approx.orig_gaussian, 500,
            )
            assert scaled == pytest.approx(base, abs=1e-12)

    def test_rejects_high_dimension(self):
        spec = d4_spec()
        approx = gaussian_approx(spec)
        with pytest.raises(ValueError, match="d <= 2"):
            tv_grid(spec, approx, 100)

    def test_warns_on_coarse_lattice(self):
        spec = scalar_spec()
        approx = gaussian_approx(spec)
        with pytest.warns(UserWarning, match="cells"):
            tv_grid(spec, approx, 40)

    def test_value_in_unit_interval(self):
        spec = scalar_spec(noise_n=1e2, seed=5)
        approx = gaussian_approx(spec)
        est = tv_grid(spec, approx, 800)
        assert 0.0 <= est.value <= 1.0

    def test_invariant_under_local_rescaling(self):
        # TV is the same whether computed in original coordinates against
        # N(center, cov) or in u = sqrt(n)(q - q0) against N(shift, Sigma).
        from bvm_lab.posterior import log_posterior_unnorm

        spec = scalar_spec(noise_n=1e4, seed=3)
        approx = gaussian_approx(spec)
        original = tv_grid(spec, approx, 2000).value
        root_n = np.sqrt(spec.noise_n)
        lo_u = root_n * (BOUNDS.lo - spec.q0[0])
        hi_u = root_n * (BOUNDS.hi - spec.q0[0])
        local = tv_grid_for_density(
            lambda u: log_posterior_unnorm(spec, spec.local_to_orig(u)),
            lo_u, hi_u, approx.local_gaussian, 2000,
        )
        assert local == pytest.approx(original, abs=1e-3)


class TestTvImportance:
    def test_scaling_invariance(self):
        g = FrozenGaussian(np.zeros(2), np.eye(2))
        values = [
            tv_importance_for_density(
                lambda q: g.logpdf(q) + log_c, g, 20_000, seed=4
            ).value
            for log_c in (-5.0, 0.0, 9.0)
        ]
        assert values[0] == pytest.approx(values[1], abs=1e-12)
        assert values[2] == pytest.approx(values[1], abs=1e-12)
        assert values[1] <= 0.02  # identical distributions

    def test_agrees_with_quadrature_on_scalar_problem(self):
        spec = scalar_spec(noise_n=1e4, seed=2)
        approx = gaussian_approx(spec)
        grid_est = tv_grid(spec, approx, 2000)
        is_est = tv_importance(spec, approx, 20_000, seed=3)
        combined = np.hypot(grid_est.std_err, is_est.std_err)
        assert abs(grid_est.value - is_est.value) <= 3.0 * combined

    def test_all_proposals_outside_support(self):
        g = FrozenGaussian(np.array([50.0]), np.array([[1e-4]]))
        with pytest.raises(RuntimeError, match="zero posterior density"):
            tv_importance_for_density(
                lambda q: 0.0 if 0.0 <= q[0] <= 1.0 else -np.inf, g, 20_000, seed=0
            )

    def test_minimum_draws_enforced(self):
        spec = scalar_spec()
        approx = gaussian_approx(spec)
        with pytest.raises(ValueError, match="1e4"):
            tv_importance(spec, approx, 500, seed=0)

    def test_deterministic(self):
        spec = scalar_spec()
        approx = gaussian_approx(spec)
        a = tv_importance(spec, approx, 20_000, seed=9)
        b = tv_importance(spec, approx, 20_000, seed=9)
        assert a == b

    def test_decreasing_in_noise_at_d4(self):
        values = []
        for n in (1e3, 1e5, 1e7):
            spec = d4_spec(noise_n=n, seed=9)
            approx = gaussian_approx(spec)
            est = tv_importance(spec, approx, 20_000, seed=10)
            assert 0.0 <= est.value <= 1.0
            values.append(est.value)
        assert values[0] > values[1] > values[2]


class TestMomentGap:
    def test_gaussian_samples_have_small_gaps(self):
        spec = d4_spec(noise_n=1e6, seed=21)
        approx = gaussian_approx(spec)
        rng = np.random.default_rng(0)
        draws = approx.orig_gaussian.rvs(rng, 20_000)
        fake = SampleSet(draws, 1.0, np.zeros(1), ChainConfig())
        report = moment_gap(fake, approx)
        assert report.mean_gap_rel <= 0.05
        assert report.cov_gap_rel <= 0.05

    def test_insufficient_ess_rejected(self):
        spec = d4_spec()
        approx = gaussian_approx(spec)
        constant = SampleSet(np.ones((1000, 4)), 1.0, np.zeros(1), ChainConfig())
        with pytest.raises(ValueError, match="effective sample size"):
            moment_gap(constant, approx)

    def test_noise_free_scalar_mean_near_truth(self):
        grid = GridSpec(2)
        data = ProblemData.constant(grid)
        q0 = MediumField(np.array([1.0]), BOUNDS)
        spec = synthesize_data(grid, data, q0, 1e6, 0)
        object.__setattr__(spec, "eta", np.zeros(1))
        object.__setattr__(spec, "y", spec.g_at_truth.copy())
        approx = gaussian_approx(spec)
        chain = run_rwm(spec, ChainConfig(n_steps=30_000, seed=3), approx=approx)
        report = moment_gap(chain, approx)
        assert report.mean_gap_rel <= 0.1

    def test_mean_gap_shrinks_with_noise(self):
        gaps = []
        for n in (1e3, 1e5, 1e7):
            spec = scalar_spec(noise_n=n, seed=5)
            approx = gaussian_approx(spec)
            chain = run_rwm(spec, ChainConfig(n_steps=30_000, seed=6), approx=approx)
            gaps.append(moment_gap(chain, approx).mean_gap)
        assert gaps[0] > gaps[1] > gaps[2]


class TestCoverage:
    def test_linear_oracle_hits_nominal(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((3, 3)) + 3.0 * np.eye(3)
        bounds = Bounds(0.0, 1e9)
        model = LinearForwardModel(a, bounds=bounds)
        prior = UniformPrior(bounds)
        for alpha in (0.1, 0.5, 0.9):
            result = coverage_for_model(model, prior, np.full(3, 5.0), 1e4,
                                        alpha, 400, seed=9)
            assert abs(result.coverage - (1.0 - alpha)) <= 2.0 * result.ci_halfwidth

    def test_medium_problem_large_noise_parameter(self):
        grid = GridSpec(3)
        data = ProblemData.constant(grid)
        result = credible_coverage(grid, data, default_truth(grid), 1e6,
                                   alpha=0.1, n_reps=300, seed=42)
        assert abs(result.coverage - 0.9) <= 0.06

    @pytest.mark.filterwarnings("ignore:fewer than 100 replications:UserWarning")
    def test_hpd_method_scalar(self):
        grid = GridSpec(2)
        data = ProblemData.constant(grid)
        q0 = MediumField(np.array([1.0]), BOUNDS)
        result = credible_coverage(
            grid, data, q0, 1e4, alpha=0.5, n_reps=60, seed=3,
            method="mcmc-hpd",
            chain=ChainConfig(n_steps=3000, step_scale=40.0),
        )
        assert 0.25 <= result.coverage <= 0.75

    def test_invalid_alpha(self):
        grid = GridSpec(2)
        data = ProblemData.constant(grid)
        q0 = MediumField(np.array([1.0]), BOUNDS)
        with pytest.raises(ValueError, match="alpha"):
            credible_coverage(grid, data, q0, 1e4, alpha=1.5, n_reps=100, seed=0)

    def test_tiny_noise_parameter_recorded_without_assertion(self):
        # Far outside the asymptotic regime the coverage is whatever it is;
        # the machinery must still return a well-formed result.
        grid = GridSpec(2)
        data = ProblemData.constant(grid)
        q0 = MediumField(np.array([1.0]), BOUNDS)
        result = credible_coverage(grid, data, q0, 1.0, alpha=0.1, n_reps=100, seed=0)
        assert 0.0 <= result.coverage <= 1.0


class TestContraction:
    def _chain(self, noise_n, seed=2):
        spec = d4_spec(noise_n=noise_n)
        approx = gaussian_approx(spec)
        return run_rwm(spec, ChainConfig(n_steps=8000, seed=seed), approx=approx)

    def test_huge_factor_has_zero_mass(self):
        chain = self._chain(1e6)
        grid = GridSpec(3)
        q0 = default_truth(grid).values
        result = contraction_probe(chain, q0, 1e6, 1.0, (1e6,))[0]
        assert result.mass_outside == 0.0

    def test_mass_non_increasing_in_factor(self):
        chain = self._chain(1e4)
        q0 = default_truth(GridSpec(3)).values
        results = contraction_probe(chain, q0, 1e4, 4.0, (0.5, 1.0, 2.0, 5.0, 1e6))
        masses = [r.mass_outside for r in results]
        assert all(a >= b for a, b in zip(masses, masses[1:]))

    def test_radius_formula(self):
        from bvm_lab.posterior import ball_radius

        chain = self._chain(1e4)
        q0 = default_truth(GridSpec(3)).values
        result = contraction_probe(chain, q0, 1e4, 2.0, (1.0,))[0]
        assert result.eps_n == pytest.approx(ball_radius(4, 2.0) / 100.0)


class TestTailMass:
    def test_scalar_gaussian_tail_is_two_sided_normal(self):
        spec = scalar_spec(noise_n=1e4, seed=1)
        approx = gaussian_approx(spec)
        chain = run_rwm(spec, ChainConfig(n_steps=3000, seed=0), approx=approx)
        with pytest.warns(UserWarning, match="degenerate"):
            # d=1 ball radius degenerates (log 1 = 0): everything is outside.
            out = tail_mass_probe(chain, approx, spec.q0, spec.noise_n,
                                  ball_constant=5.0)
        assert out["posterior_tail"] == 1.0
        assert out["gaussian_tail"] == 1.0

    def test_doubling_constant_shrinks_tails(self):
        spec = d4_spec(noise_n=1e6)
        approx = gaussian_approx(spec)
        chain = run_rwm(spec, ChainConfig(n_steps=20_000, seed=5), approx=approx)
        small = tail_mass_probe(chain, approx, spec.q0, spec.noise_n, 10.0)
        large = tail_mass_probe(chain, approx, spec.q0, spec.noise_n, 20.0)
        assert large["posterior_tail"] <= small["posterior_tail"]
        assert large["gaussian_tail"] <= small["gaussian_tail"]

    def test_admissible_regime_tails_are_small(self):
        # delta_n (cubic rate) = 0.089 < 0.1 at d=4, n=1e6.
        spec = d4_spec(noise_n=1e6)
        approx = gaussian_approx(spec)
        chain = run_rwm(spec, ChainConfig(n_steps=20_000, seed=5), approx=approx)
        out = tail_mass_probe(chain, approx, spec.q0, spec.noise_n, ball_constant=20.0)
        assert out["posterior_tail"] <= 0.01
        assert out["gaussian_tail"] <= 0.01

    def test_outputs_are_probabilities(self):
        spec = d4_spec(noise_n=1e4)
        approx = gaussian_approx(spec)
        chain = run_rwm(spec, ChainConfig(n_steps=2000, seed=1), approx=approx)
        out = tail_mass_probe(chain, approx, spec.q0, spec.noise_n, 3.0)
        assert 0.0 <= out["posterior_tail"] <= 1.0
        assert 0.0 <= out["gaussian_tail"] <= 1.0
