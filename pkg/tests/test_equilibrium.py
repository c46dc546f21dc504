import numpy as np
import pytest

from eblab import equilibrium as eq
from eblab.equilibrium import DiscreteDensity


class TestDiscreteDensity:
    def test_validation(self):
        with pytest.raises(ValueError):
            DiscreteDensity(np.array([0.5, 0.6]))
        with pytest.raises(ValueError):
            DiscreteDensity(np.array([-0.1, 1.1]))
        with pytest.raises(ValueError):
            DiscreteDensity(np.array([]))

    def test_uniform_and_random(self):
        u = DiscreteDensity.uniform(4)
        assert abs(u.probs.sum() - 1.0) <= 1e-12
        r = DiscreteDensity.random(np.random.default_rng(0), 7)
        assert r.k == 7 and np.all(r.probs > 0)


class TestScalarMinimizer:
    def test_below_case_reaches_margin(self):
        assert eq.hinge_affine_min(1.0, 2.0, 10.0) == (10.0, 10.0, True)

    def test_above_case_reaches_zero(self):
        assert eq.hinge_affine_min(2.0, 1.0, 10.0) == (0.0, 10.0, True)

    def test_tie_flagged_non_unique(self):
        y, value, unique = eq.hinge_affine_min(1.0, 1.0, 10.0)
        assert (y, value) == (0.0, 10.0) and not unique

    def test_zero_slope_flagged_non_unique(self):
        y, value, unique = eq.hinge_affine_min(0.0, 1.0, 10.0)
        assert (y, value) == (10.0, 0.0) and not unique

    def test_input_validation(self):
        with pytest.raises(ValueError):
            eq.hinge_affine_min(-1.0, 1.0, 10.0)
        with pytest.raises(ValueError):
            eq.hinge_affine_min(1.0, 1.0, 0.0)

    def test_against_dense_grid(self):
        report = eq.sweep_scalar_minimizer(trials=100, seed=5)
        assert report.passed and report.worst_gap < 1e-9


class TestDiscreteObjectives:
    def test_zero_discriminator_gives_margin(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            p = DiscreteDensity.random(rng, 6)
            q = DiscreteDensity.random(rng, 6)
            v = eq.discriminator_objective(p, q, np.zeros(6), 10.0)
            assert abs(v - 10.0) <= 1e-12

    def test_constant_discriminator_at_matched_densities(self):
        rng = np.random.default_rng(2)
        p = DiscreteDensity.random(rng, 5)
        for c in (0.0, 3.7, 10.0):
            v = eq.discriminator_objective(p, p, np.full(5, c), 10.0)
            assert abs(v - 10.0) <= 1e-12

    def test_hand_evaluated_separated_pair(self):
        v = eq.discriminator_objective(
            np.array([1.0, 0.0]), np.array([0.0, 1.0]), np.array([0.0, 10.0]), 10.0
        )
        assert v == 0.0

    def test_generator_objective(self):
        u = eq.generator_objective(np.array([0.25, 0.75]), np.array([4.0, 8.0]))
        assert u == 0.25 * 4.0 + 0.75 * 8.0

    def test_negative_d_rejected(self):
        with pytest.raises(ValueError):
            eq.discriminator_objective(
                DiscreteDensity.uniform(2), DiscreteDensity.uniform(2), [-1.0, 0.0], 10.0
            )


class TestBestResponse:
    def test_matched_densities_tie_to_zero(self):
        p = DiscreteDensity.uniform(4)
        np.testing.assert_array_equal(eq.best_response(p, p, 10.0), np.zeros(4))

    def test_pointwise_rule(self):
        d = eq.best_response(np.array([0.6, 0.4]), np.array([0.4, 0.6]), 10.0)
        np.testing.assert_array_equal(d, [0.0, 10.0])

    def test_values_live_on_the_two_branches(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            k = int(rng.integers(2, 9))
            d = eq.best_response(
                DiscreteDensity.random(rng, k), DiscreteDensity.random(rng, k), 10.0
            )
            assert set(np.unique(d)).issubset({0.0, 10.0})
            assert np.all(d <= 10.0)

    def test_matches_brute_force_on_random_pairs(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            k = int(rng.integers(2, 7))
            p = DiscreteDensity.random(rng, k)
            q = DiscreteDensity.random(rng, k)
            v_brute, _ = eq.brute_force_min_v(p, q, 10.0, 1e-2, confirm_separability=False)
            v_star = eq.discriminator_objective(p, q, eq.best_response(p, q, 10.0), 10.0)
            assert abs(v_star - v_brute) <= 1e-2 * 2.0 * k


class TestBruteForce:
    def test_matched_density_minimum_is_margin(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            p = DiscreteDensity.random(rng, 4)
            v, _ = eq.brute_force_min_v(p, p, 10.0, 0.05)
            assert abs(v - 10.0) <= 1e-12

    def test_unequal_densities_fall_strictly_below(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            p = DiscreteDensity.random(rng, 4)
            q = DiscreteDensity.random(rng, 4)
            v, _ = eq.brute_force_min_v(p, q, 10.0, 0.05)
            assert v < 10.0

    def test_minimum_never_exceeds_margin(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            k = int(rng.integers(2, 8))
            v, _ = eq.brute_force_min_v(
                DiscreteDensity.random(rng, k),
                DiscreteDensity.random(rng, k),
                10.0,
                0.1,
                confirm_separability=False,
            )
            assert v <= 10.0 + 1e-12

    def test_separability_confirmation_cap(self):
        p = DiscreteDensity.uniform(5)
        with pytest.raises(ValueError):
            eq.brute_force_min_v(p, p, 10.0, 0.5, confirm_separability=True)

    def test_argmin_attains_the_minimum(self):
        rng = np.random.default_rng(8)
        p = DiscreteDensity.random(rng, 4)
        q = DiscreteDensity.random(rng, 4)
        v, d = eq.brute_force_min_v(p, q, 10.0, 0.01)
        assert abs(eq.discriminator_objective(p, q, d, 10.0) - v) <= 1e-12

    def test_bad_grid_step(self):
        with pytest.raises(ValueError):
            eq.brute_force_min_v(
                DiscreteDensity.uniform(2), DiscreteDensity.uniform(2), 10.0, 0.0
            )


class TestDensityComparison:
    def test_equal_uniform(self):
        p = DiscreteDensity.uniform(5)
        assert eq.compare_densities(p, p) == (0, 0, True)

    def test_swapped_pair(self):
        below, differ, consistent = eq.compare_densities(
            np.array([0.6, 0.4]), np.array([0.4, 0.6])
        )
        assert below == 1 and differ == 2 and consistent

    def test_random_sweep_consistent(self):
        report = eq.sweep_density_comparison(trials=2000, seed=9)
        assert report.passed

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            eq.compare_densities(np.array([1.0]), np.array([0.5, 0.5]))


class TestCertifications:
    def test_matched_uniform_certified(self):
        p = DiscreteDensity.uniform(4)
        report = eq.check_equilibrium_value(p, p, 10.0)
        assert report.value_identity_certified
        assert abs(report.v_value - 10.0) <= 1e-12
        assert report.details["densities_equal"] and report.details["v_equals_m"]

    def test_unequal_pair_equality_direction_not_certified(self):
        rng = np.random.default_rng(10)
        p = DiscreteDensity.random(rng, 5)
        q = DiscreteDensity.random(rng, 5)
        report = eq.check_equilibrium_value(p, q, 10.0)
        assert report.value_identity_certified  # the biconditional still holds
        assert not report.details["v_equals_m"]
        assert not report.details["densities_equal"]

    def test_flat_optimum_uniform(self):
        report = eq.check_flat_optimum(DiscreteDensity.uniform(4), 10.0)
        assert report.flat_optimum_certified and report.constant_gamma_ok
        assert report.details["gammas"][0] == 0.0
        assert report.details["gammas"][-1] == 10.0

    def test_flat_optimum_ignores_zero_density_points(self):
        p = DiscreteDensity(np.array([0.5, 0.5, 0.0, 0.0]))
        report = eq.check_flat_optimum(p, 10.0)
        assert report.flat_optimum_certified

    def test_generator_indifference_tolerance(self):
        report = eq.check_flat_optimum(DiscreteDensity.uniform(6), 10.0, perturbations=50)
        assert report.details["worst_u_gap"] <= 1e-12

    def test_k_cap(self):
        with pytest.raises(ValueError):
            eq.check_flat_optimum(DiscreteDensity.uniform(17), 10.0)

    def test_sweeps_pass(self):
        assert eq.sweep_equilibrium_value(trials_equal=20, trials_unequal=20, seed=11).passed
        assert eq.sweep_flat_optimum(trials=5, seed=12).passed
