import math
import unittest
import numpy as np
import minimax_design_lib as design

from minimax_design_lib import criteria
from numpy.testing import assert_allclose

kGridSquares = 21320 / 1521


def basis_for(points, degree, *, intercept=True):
    space = design.DesignSpace(points)
    F = design.evaluate_regressors(
        design.RegressorSpec.polynomial(degree, intercept=intercept), space
    )
    return F, design.orthonormalize(F)


def straight_line():
    return basis_for(design.build_grid_space([-1, 1], 40).points, 1)


def quadratic_twelve():
    return basis_for(design.build_grid_space([-1, 1], 12).points, 2)


def symmetric_origin_design(alpha):
    return design.DesignMeasure([alpha, 1 - 2 * alpha, alpha])


class TestMoments(unittest.TestCase):
    def test_uniform_gives_identity(self):
        _, Q = quadratic_twelve()
        bundle = criteria.moments(Q, design.DesignMeasure.uniform(12))
        assert_allclose(bundle.R, np.eye(3) / 12, atol=1e-15)
        assert_allclose(bundle.S, np.eye(3) / 144, atol=1e-15)
        assert_allclose(bundle.U, np.eye(3), atol=1e-12)
        self.assertFalse(bundle.unique_top)

    def test_two_point_design(self):
        _, Q = straight_line()
        xi = design.DesignMeasure.point_masses(40, [0, 39])
        bundle = criteria.moments(Q, xi)
        assert_allclose(bundle.R, np.diag([1 / 40, 1 / kGridSquares]), atol=1e-14)
        assert_allclose(bundle.U, np.diag([20, kGridSquares / 2]), rtol=1e-12, atol=1e-11)
        assert_allclose(np.abs(bundle.v_max), [1.0, 0.0], atol=1e-12)
        self.assertTrue(bundle.unique_top)

    def test_origin_family(self):
        _, Q = basis_for([-1.0, 0.0, 1.0], 1, intercept=False)
        for alpha in (0.1, 0.25, 0.5):
            bundle = criteria.moments(Q, symmetric_origin_design(alpha))
            assert_allclose(bundle.R, [[alpha]], rtol=1e-14)
            assert_allclose(bundle.S, [[alpha * alpha]], rtol=1e-14)
            assert_allclose(bundle.U, [[1.0]], rtol=1e-13)
            self.assertEqual(bundle.eigen_gap, math.inf)

    def test_eigenvector_sign_is_fixed(self):
        _, Q = quadratic_twelve()
        rng = np.random.default_rng(3)
        for xi in criteria.random_designs(12, 20, rng):
            v = criteria.moments(Q, xi).v_max
            self.assertGreater(v[np.argmax(np.abs(v))], 0)
            self.assertAlmostEqual(float(np.linalg.norm(v)), 1.0, places=12)

    def test_inadmissible_design(self):
        _, Q = straight_line()
        with self.assertRaises(design.InadmissibleDesignException):
            criteria.moments(Q, design.DesignMeasure.point_masses(40, [7]))

    def test_ill_conditioned_design(self):
        _, Q = straight_line()
        weights = np.zeros(40)
        weights[19] = 1 - 1e-15
        weights[20] = 1e-15
        with self.assertRaises(design.SingularMomentException):
            criteria.moments(Q, design.DesignMeasure(weights))


class TestCriteria(unittest.TestCase):
    def test_uniform_endpoint(self):
        _, Q = straight_line()
        var, bias = criteria.evaluate(Q, design.DesignMeasure.uniform(40))
        self.assertAlmostEqual(var, 80.0, delta=1e-9)
        self.assertAlmostEqual(bias, 1.0, delta=1e-9)
        self.assertAlmostEqual(criteria.cmb_value(var, bias), 0.1118, places=4)

    def test_two_point_endpoint(self):
        _, Q = straight_line()
        var, bias = criteria.evaluate(Q, design.DesignMeasure.point_masses(40, [0, 39]))
        self.assertAlmostEqual(bias, 20.0, delta=1e-9)
        self.assertAlmostEqual(var, 40 + kGridSquares, delta=1e-8)
        self.assertAlmostEqual(criteria.cmb_value(var, bias), 0.6085, places=4)

    def test_origin_family(self):
        _, Q = basis_for([-1.0, 0.0, 1.0], 1, intercept=False)
        for alpha in (0.1, 0.25, 0.5):
            var, bias = criteria.evaluate(Q, symmetric_origin_design(alpha))
            self.assertAlmostEqual(var, 1 / alpha, delta=1e-12)
            self.assertAlmostEqual(bias, 1.0, delta=1e-12)

    def test_origin_family_minimized_at_half(self):
        _, Q = basis_for([-1.0, 0.0, 1.0], 1, intercept=False)
        alphas = np.linspace(0.05, 0.5, 10)
        for nu in (0.0, 0.5, 1.0):
            losses = [
                criteria.loss(nu, *criteria.evaluate(Q, symmetric_origin_design(a)))
                for a in alphas
            ]
            self.assertAlmostEqual(min(losses), losses[-1], delta=1e-12)
            self.assertAlmostEqual(losses[-1], 2 - nu, delta=1e-12)

    def test_maxbias_at_least_one(self):
        _, Q = quadratic_twelve()
        rng = np.random.default_rng(11)
        for xi in criteria.random_designs(12, 200, rng):
            if not Q.is_admissible(xi):
                continue
            self.assertGreaterEqual(criteria.evaluate(Q, xi)[1], 1 - 1e-10)

    def test_permutation_equivariance(self):
        points = design.build_grid_space([-1, 1], 12).points[:, 0]
        _, Q = quadratic_twelve()
        rng = np.random.default_rng(5)
        order = rng.permutation(12)
        _, permuted = basis_for(points[order], 2)
        for xi in criteria.random_designs(12, 10, rng):
            moved = design.DesignMeasure(xi.weights[order])
            var, bias = criteria.evaluate(Q, xi)
            var_p, bias_p = criteria.evaluate(permuted, moved)
            self.assertLessEqual(abs(var - var_p), 1e-12 * var)
            self.assertLessEqual(abs(bias - bias_p), 1e-12 * bias)
            self.assertLessEqual(
                abs(criteria.loss(0.3, var, bias) - criteria.loss(0.3, var_p, bias_p)),
                1e-12 * (var + bias),
            )


class TestScale(unittest.TestCase):
    def test_loss_endpoints(self):
        self.assertEqual(criteria.loss(0, 3.0, 7.0), 3.0)
        self.assertEqual(criteria.loss(1, 3.0, 7.0), 7.0)
        with self.assertRaises(ValueError):
            criteria.loss(1.5, 3.0, 7.0)
        with self.assertRaises(ValueError):
            criteria.loss(-0.1, 3.0, 7.0)

    def test_nu_from_scale(self):
        self.assertEqual(criteria.nu_from_scale(1, 1), 0.5)
        self.assertEqual(criteria.nu_from_scale(1, 0), 0.0)
        self.assertEqual(criteria.nu_from_scale(0, 4), 1.0)
        with self.assertRaises(ValueError):
            criteria.nu_from_scale(0, 0)
        with self.assertRaises(ValueError):
            criteria.nu_from_scale(-1, 2)

    def test_imse_scale(self):
        self.assertAlmostEqual(
            criteria.imse_scale(1.5, criteria.LossScale(1.0, 1.0, 4)), 0.75
        )
        self.assertAlmostEqual(
            criteria.imse_scale(2.5, criteria.LossScale(3.0, 7.0, 10)), 2.5
        )
        self.assertAlmostEqual(
            criteria.imse_scale(2 - 0.5, criteria.LossScale(1.0, 1.0, 10)), 0.3
        )

    def test_loss_scale(self):
        self.assertEqual(criteria.LossScale(3.0, 1.0, 5).nu, 0.25)
        with self.assertRaises(ValueError):
            criteria.LossScale(1.0, 1.0, 0)
        with self.assertRaises(ValueError):
            criteria.LossScale(0.0, 0.0, 4)

    def test_cmb_ratio_one(self):
        self.assertEqual(criteria.cmb_value(4.0, 4.0), 1.0)
        with self.assertRaises(ValueError):
            criteria.cmb_value(0.0, 1.0)


class TestOracle(unittest.TestCase):
    def test_uniform_attains_one(self):
        _, Q = quadratic_twelve()
        worst = criteria.worst_case_psi(Q, design.DesignMeasure.uniform(12))
        self.assertAlmostEqual(worst.attained_bias, 1.0, delta=1e-12)
        self.assertAlmostEqual(float(np.linalg.norm(worst.psi0)), 1.0, delta=1e-10)
        self.assertLessEqual(np.max(np.abs(Q.Q.T @ worst.psi0)), 1e-8)

    def test_origin_family_attains_one(self):
        _, Q = basis_for([-1.0, 0.0, 1.0], 1, intercept=False)
        worst = criteria.worst_case_psi(Q, symmetric_origin_design(0.25))
        self.assertAlmostEqual(worst.attained_bias, 1.0, delta=1e-12)

    def test_agrees_with_maxbias_on_random_designs(self):
        F, Q = quadratic_twelve()
        rng = np.random.default_rng(2024)
        for xi in criteria.random_designs(12, 100, rng):
            var, bias = criteria.evaluate(Q, xi)
            worst = criteria.worst_case_psi(Q, xi)
            self.assertLessEqual(abs(bias - worst.attained_bias), 1e-8 * (1 + bias))
            self.assertAlmostEqual(
                criteria.bias_given_psi(Q, xi, worst.psi0), bias, delta=1e-8 * (1 + bias)
            )
            checked = criteria.cross_check_variance(F, xi)
            self.assertLessEqual(abs(var - checked), 1e-8 * checked)

    def test_any_contaminant_is_bounded(self):
        _, Q = quadratic_twelve()
        rng = np.random.default_rng(99)
        complement = np.eye(12) - Q.Q @ Q.Q.T
        for xi in criteria.random_designs(12, 20, rng):
            bias = criteria.evaluate(Q, xi)[1]
            psi = complement @ rng.normal(size=12)
            psi /= np.linalg.norm(psi)
            value = criteria.bias_given_psi(Q, xi, psi)
            self.assertGreaterEqual(value, 1.0)
            self.assertLessEqual(value, bias + 1e-8)

    def test_uniform_bias_for_any_contaminant(self):
        _, Q = quadratic_twelve()
        complement = np.eye(12) - Q.Q @ Q.Q.T
        psi = complement @ np.arange(12.0) ** 3
        psi /= np.linalg.norm(psi)
        value = criteria.bias_given_psi(Q, design.DesignMeasure.uniform(12), psi)
        self.assertAlmostEqual(value, 1.0, delta=1e-12)

    def test_intercept_only_closed_form(self):
        Q = design.orthonormalize(design.RegressorMatrix([1.0, 1.0]))
        psi = np.array([1.0, -1.0]) / np.sqrt(2)
        for alpha in (0.2, 0.5, 0.9):
            xi = design.DesignMeasure([alpha, 1 - alpha])
            expected = 1 + (2 * alpha - 1) ** 2
            self.assertAlmostEqual(criteria.bias_given_psi(Q, xi, psi), expected, places=12)
            self.assertAlmostEqual(criteria.evaluate(Q, xi)[1], expected, places=12)
            self.assertAlmostEqual(
                criteria.worst_case_psi(Q, xi).attained_bias, expected, places=12
            )

    def test_contaminant_preconditions(self):
        _, Q = straight_line()
        xi = design.DesignMeasure.uniform(40)
        with self.assertRaises(ValueError):
            criteria.bias_given_psi(Q, xi, np.ones(40) / np.sqrt(40))
        with self.assertRaises(ValueError):
            criteria.bias_given_psi(Q, xi, np.zeros(40))
        with self.assertRaises(ValueError):
            criteria.bias_given_psi(Q, xi, np.ones(3))

    def test_no_room_for_contaminant(self):
        _, Q = basis_for([-1.0, 1.0], 1)
        with self.assertRaises(design.InadmissibleDesignException):
            criteria.worst_case_psi(Q, design.DesignMeasure.uniform(2))

    def test_cross_check_variance(self):
        F, _ = straight_line()
        self.assertAlmostEqual(
            criteria.cross_check_variance(F, design.DesignMeasure.uniform(40)),
            80.0,
            delta=1e-9,
        )
        self.assertAlmostEqual(
            criteria.cross_check_variance(F, design.DesignMeasure.point_masses(40, [0, 39])),
            40 + kGridSquares,
            delta=1e-8,
        )
        with self.assertRaises(design.SingularMomentException):
            criteria.cross_check_variance(F, design.DesignMeasure.point_masses(40, [3]))

    def test_verify_design(self):
        F, Q = quadratic_twelve()
        rng = np.random.default_rng(8)
        for xi in criteria.random_designs(12, 5, rng):
            var, bias = criteria.verify_design(Q, xi)
            self.assertEqual((var, bias), criteria.evaluate(Q, xi))


if __name__ == "__main__":
    unittest.main()
