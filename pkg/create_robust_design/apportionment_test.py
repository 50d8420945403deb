import math
import unittest
import numpy as np
import minimax_design_lib as minimax

from minimax_design_lib import criteria

from create_robust_design import apportionment, optimizer, settings

kQuickConfig = optimizer.OptimizerConfig(max_iter=2000)


def make_basis(N, degree):
    F = minimax.evaluate_regressors(
        minimax.RegressorSpec.polynomial(degree),
        minimax.build_grid_space([-1, 1], N),
    )
    return minimax.orthonormalize(F)


class TestExactDesign(unittest.TestCase):
    def test_properties(self):
        d = apportionment.ExactDesign([2, 0, 3], method=apportionment.kCeilRemove)
        self.assertEqual(d.n, 5)
        self.assertEqual(d.N, 3)
        self.assertEqual(d.support.tolist(), [0, 2])
        self.assertEqual(d, apportionment.ExactDesign([2, 0, 3], method="ceil_remove"))
        self.assertNotEqual(
            d, apportionment.ExactDesign([2, 0, 3], method="efficient_apportionment")
        )
        with self.assertRaises(ValueError):
            d.allocations[0] = 1

    def test_validation(self):
        with self.assertRaises(ValueError):
            apportionment.ExactDesign([2, -1], method="ceil_remove")
        with self.assertRaises(ValueError):
            apportionment.ExactDesign([1.5, 2], method="ceil_remove")
        with self.assertRaises(ValueError):
            apportionment.ExactDesign([1, 2], method="stochastic")
        with self.assertRaises(ValueError):
            apportionment.ExactDesign([], method="ceil_remove")

    def test_exact_to_measure(self):
        halves = apportionment.exact_to_measure(
            apportionment.ExactDesign([2, 2], method="ceil_remove")
        )
        self.assertEqual(halves.weights.tolist(), [0.5, 0.5])
        single = apportionment.exact_to_measure(
            apportionment.ExactDesign([10, 0, 0], method="ceil_remove")
        )
        self.assertEqual(single.weights.tolist(), [1.0, 0.0, 0.0])
        with self.assertRaises(ValueError):
            apportionment.exact_to_measure(
                apportionment.ExactDesign([0, 0], method="ceil_remove")
            )


class TestCeilThenRemove(unittest.TestCase):
    def setUp(self):
        self.Q = make_basis(40, 1)

    def test_exact_halves(self):
        xi = minimax.DesignMeasure.point_masses(40, [0, 39])
        d = apportionment.ceil_then_remove(self.Q, xi, 4, 0.5)
        self.assertEqual(d.allocations[0], 2)
        self.assertEqual(d.allocations[39], 2)
        self.assertEqual(d.n, 4)
        self.assertEqual(d.method, apportionment.kCeilRemove)
        self.assertTrue(d.admissible)

    def test_rank_is_kept(self):
        xi = minimax.DesignMeasure.point_masses(40, [0, 39], [0.9, 0.1])
        for nu in (0.0, 0.5, 1.0):
            d = apportionment.ceil_then_remove(self.Q, xi, 2, nu)
            self.assertEqual(d.allocations[0], 1)
            self.assertEqual(d.allocations[39], 1)

    def test_tiny_weight_keeps_its_point(self):
        xi = minimax.DesignMeasure.point_masses(40, [0, 39], [1 - 1e-11, 1e-11])
        d = apportionment.ceil_then_remove(self.Q, xi, 10, 0.5)
        self.assertEqual(d.n, 10)
        self.assertEqual(d.support.tolist(), [0, 39])
        self.assertEqual(d.allocations[39], 1)
        self.assertTrue(self.Q.spans(d.support))

    def test_run_size_below_regressor_count(self):
        xi = minimax.DesignMeasure.uniform(40)
        with self.assertRaises(minimax.ApportionmentException):
            apportionment.ceil_then_remove(self.Q, xi, 1, 0.5)
        with self.assertRaises(ValueError):
            apportionment.ceil_then_remove(self.Q, xi, 2.5, 0.5)

    def test_inadmissible_input(self):
        with self.assertRaises(minimax.InadmissibleDesignException):
            apportionment.ceil_then_remove(
                self.Q, minimax.DesignMeasure.point_masses(40, [3]), 5, 0.5
            )

    def test_small_loss_increase(self):
        point = optimizer.solve_nu(self.Q, 0.28)
        d = apportionment.ceil_then_remove(self.Q, point.design, 10, 0.28)
        self.assertEqual(d.n, 10)
        self.assertTrue(np.all(d.allocations >= 0))
        exact_loss = criteria.loss(
            0.28, *criteria.evaluate(self.Q, apportionment.exact_to_measure(d))
        )
        self.assertLessEqual(exact_loss, 1.05 * point.loss_value)

    def test_deterministic(self):
        xi = next(criteria.random_designs(40, 1, np.random.default_rng(3)))
        first = apportionment.ceil_then_remove(self.Q, xi, 12, 0.3)
        second = apportionment.ceil_then_remove(self.Q, xi, 12, 0.3)
        self.assertEqual(first, second)


class TestPukelsheimRieder(unittest.TestCase):
    def test_uniform_on_support(self):
        xi = minimax.DesignMeasure.point_masses(10, [1, 3, 5, 7, 9])
        d = apportionment.pukelsheim_rieder(xi, 5)
        self.assertEqual(d.allocations.tolist(), [0, 1, 0, 1, 0, 1, 0, 1, 0, 1])
        self.assertEqual(d.method, apportionment.kEfficientApportionment)
        self.assertIsNone(d.admissible)

    def test_lowest_index_tie(self):
        xi = minimax.DesignMeasure([0.5, 0.5])
        self.assertEqual(apportionment.pukelsheim_rieder(xi, 5).allocations.tolist(), [3, 2])

    def test_run_size_below_support(self):
        with self.assertRaises(minimax.ApportionmentException):
            apportionment.pukelsheim_rieder(minimax.DesignMeasure.uniform(6), 5)

    def test_admissibility_flag(self):
        Q = make_basis(40, 1)
        ends = minimax.DesignMeasure.point_masses(40, [0, 39])
        self.assertTrue(apportionment.pukelsheim_rieder(ends, 4, Q=Q).admissible)
        single = minimax.DesignMeasure.point_masses(40, [7])
        self.assertFalse(apportionment.pukelsheim_rieder(single, 4, Q=Q).admissible)

    def test_sample_size_monotone(self):
        Q = make_basis(40, 2)
        xi = optimizer.solve_nu(Q, 0.0, kQuickConfig).design
        previous = None
        for n in range(14, 21):
            d = apportionment.pukelsheim_rieder(xi, n)
            self.assertEqual(d.n, n)
            if previous is not None:
                self.assertTrue(np.all(d.allocations >= previous.allocations))
            previous = d


class TestCompareRounding(unittest.TestCase):
    def test_exact_input(self):
        Q = make_basis(40, 1)
        xi = minimax.DesignMeasure.point_masses(40, [0, 39])
        comparison = apportionment.compare_rounding(Q, xi, 4, 0.3)
        self.assertAlmostEqual(comparison.excess_ceil_remove, 0.0, delta=1e-12)
        self.assertAlmostEqual(comparison.excess_efficient_apportionment, 0.0, delta=1e-12)
        self.assertEqual(comparison.n, 4)

    def test_efficient_apportionment_not_applicable(self):
        Q = make_basis(40, 1)
        with self.assertLogs("create_robust_design", level="WARNING"):
            comparison = apportionment.compare_rounding(
                Q, minimax.DesignMeasure.uniform(40), 10, 1.0
            )
        self.assertTrue(math.isnan(comparison.loss_efficient_apportionment))
        self.assertIsNone(comparison.efficient_apportionment)
        self.assertEqual(comparison.ceil_remove.n, 10)
        self.assertTrue(np.isfinite(comparison.excess_ceil_remove))

    def test_efficient_apportionment_can_lose(self):
        Q = make_basis(40, 2)
        found = False
        grid = np.linspace(0.0, 1.0, settings.NU_GRID_POINTS)
        for nu in grid:
            xi = optimizer.solve_nu(Q, float(nu), kQuickConfig).design
            comparison = apportionment.compare_rounding(Q, xi, 14, float(nu))
            if comparison.loss_efficient_apportionment > comparison.loss_ceil_remove:
                found = True
                break
        self.assertTrue(found)


if __name__ == "__main__":
    unittest.main()
