import configparser
import math
import unittest

import numpy as np

import controllers
import optimizer
import scenario


def shifted_square(x):
    return float((x[0] - 3.0) ** 2)


def nan_objective(unused_x):
    return float('nan')


def step_scenario(duration=5.0):
    config = configparser.ConfigParser()
    config.read_dict({
        'SCENARIO': {'NAME': 'tuning-test', 'DURATION': str(duration), 'SEED': '0'},
        'LOAD': {'STEPS': '0:0.2'},
    })
    return scenario.scenario_from_config(config)


def is_non_increasing(curve):
    return all(later <= earlier for earlier, later in zip(curve, curve[1:]))


class UpdateRuleTest(unittest.TestCase):

    def testEncircleUpdate(self):
        best = np.array([1.0])
        positions = np.array([[0.0]])
        a_coef = np.array([[0.5]])
        c_coef = np.array([[1.0]])
        np.testing.assert_allclose(
            optimizer.encircle_update(best, positions, a_coef, c_coef, 1.0), [[0.5]])
        # D = |1 - 0| / 2, then (1 - 0.5 * 0.5) / 2.
        np.testing.assert_allclose(
            optimizer.encircle_update(best, positions, a_coef, c_coef, 2.0), [[0.375]])

    def testExplorationUsesRandomWhale(self):
        random_positions = np.array([[2.0, -1.0]])
        positions = np.array([[1.0, 1.0]])
        a_coef = np.array([[1.5, -1.5]])
        c_coef = np.array([[0.5, 2.0]])
        # D = |C X_rand - X| = (0, 3); X_rand - A D = (2, 3.5).
        np.testing.assert_allclose(
            optimizer.exploration_update(random_positions, positions, a_coef, c_coef, 1.0),
            [[2.0, 3.5]])

    def testSpiralUpdate(self):
        best = np.array([1.0, 2.0])
        positions = np.array([[0.0, 2.0]])
        l_coef = np.array([[0.0]])
        np.testing.assert_allclose(
            optimizer.spiral_update(best, positions, l_coef, 1.0, 1.0), [[2.0, 2.0]])
        np.testing.assert_allclose(
            optimizer.spiral_update(best, positions, l_coef, 1.0, 2.0), [[1.0, 1.0]])
        half_turn = optimizer.spiral_update(best, positions, np.array([[0.5]]), 1.0, 1.0)
        np.testing.assert_allclose(half_turn, [[1.0 - math.exp(0.5), 2.0]])


class ConfigTest(unittest.TestCase):

    def testDefaults(self):
        cfg = optimizer.make_woa_config()
        self.assertEqual(optimizer.validate_woa_config(cfg), [])
        self.assertEqual(cfg.bounds, ((0.0, 10.0),) * 3)
        self.assertEqual(optimizer.correction_factors(cfg), (2.0, 2.0))
        self.assertEqual(optimizer.correction_factors(cfg._replace(variant='canonical')),
                         (1.0, 1.0))

    def testEveryViolationReported(self):
        cfg = optimizer.make_woa_config(variant='hybrid', agents=1, max_iter=0,
                                        bounds=((1.0, 0.0), (0.0, 1.0), (0.0, 1.0)), cf1=0.5,
                                        cf2=float('nan'), seed=1.5)
        violations = optimizer.validate_woa_config(cfg)
        self.assertEqual(len(violations), 7)
        with self.assertRaises(optimizer.WoaConfigError) as context:
            optimizer.woa_run(cfg, optimizer.sphere)
        self.assertEqual(context.exception.violations, violations)

    def testBoundsCountMustMatchDim(self):
        cfg = optimizer.make_woa_config(dim=2, bounds=((0.0, 1.0),))
        self.assertEqual(len(optimizer.validate_woa_config(cfg)), 1)


class WoaRunTest(unittest.TestCase):

    def testUnitCorrectionFactorsMatchCanonical(self):
        bounds = ((-10.0, 10.0),) * 5
        canonical = optimizer.woa_run(
            optimizer.make_woa_config(variant='canonical', agents=30, max_iter=500, dim=5,
                                      bounds=bounds, seed=7), optimizer.sphere)
        modified = optimizer.woa_run(
            optimizer.make_woa_config(variant='modified', agents=30, max_iter=500, dim=5,
                                      bounds=bounds, cf1=1.0, cf2=1.0, seed=7),
            optimizer.sphere)
        self.assertEqual(canonical.convergence_curve, modified.convergence_curve)
        np.testing.assert_array_equal(canonical.best_position, modified.best_position)

    def testSphereConvergesForMostSeeds(self):
        for variant in optimizer.VARIANTS:
            successes = 0
            for seed in range(20):
                cfg = optimizer.make_woa_config(variant=variant, agents=30, max_iter=500, dim=5,
                                                bounds=((-10.0, 10.0),) * 5, seed=seed)
                result = optimizer.woa_run(cfg, optimizer.sphere)
                self.assertEqual(len(result.convergence_curve), 501)
                self.assertTrue(is_non_increasing(result.convergence_curve))
                self.assertEqual(result.convergence_curve[-1], result.best_fitness)
                if result.best_fitness < 1e-2:
                    successes += 1
            self.assertGreaterEqual(successes, 18, msg=variant)

    def testOneDimensionalShiftedMinimum(self):
        cfg = optimizer.make_woa_config(variant='canonical', agents=20, max_iter=100, dim=1,
                                        bounds=((0.0, 10.0),), seed=3)
        result = optimizer.woa_run(cfg, shifted_square)
        self.assertAlmostEqual(result.best_position[0], 3.0, places=3)
        modified = optimizer.woa_run(cfg._replace(variant='modified'), shifted_square)
        self.assertLessEqual(modified.best_fitness, modified.convergence_curve[0])
        self.assertTrue(0.0 <= modified.best_position[0] <= 10.0)

    def testMinimalPopulation(self):
        cfg = optimizer.make_woa_config(agents=2, max_iter=1, dim=2,
                                        bounds=((-1.0, 1.0), (-1.0, 1.0)))
        result = optimizer.woa_run(cfg, optimizer.sphere)
        self.assertEqual(len(result.convergence_curve), 2)
        self.assertLessEqual(result.convergence_curve[1], result.convergence_curve[0])

    def testInvertedBoundsRejected(self):
        cfg = optimizer.make_woa_config(agents=5, max_iter=10, dim=2,
                                        bounds=((2.0, 1.0), (-1.0, 1.0)))
        with self.assertRaises(optimizer.WoaConfigError) as context:
            optimizer.woa_run(cfg, optimizer.sphere)
        self.assertIn('bounds[0]', context.exception.violations[0])

    def testCollapsedDimensionIsPinned(self):
        cfg = optimizer.make_woa_config(agents=5, max_iter=10, dim=2,
                                        bounds=((2.0, 2.0), (-1.0, 1.0)))
        result = optimizer.woa_run(cfg, optimizer.sphere)
        self.assertEqual(result.best_position[0], 2.0)
        self.assertGreaterEqual(result.best_fitness, 4.0)

    def testPositionsStayWithinBounds(self):
        cfg = optimizer.make_woa_config(agents=10, max_iter=20, dim=3,
                                        bounds=((0.0, 1.0), (2.0, 3.0), (-5.0, -4.0)))
        rng = np.random.default_rng(cfg.seed)
        evaluator = optimizer.PopulationEvaluator(optimizer.sphere)
        pop = optimizer.initialize_population(cfg, evaluator, rng)
        while pop.iter < cfg.max_iter:
            pop = optimizer.woa_iteration(pop, cfg, optimizer.sphere, rng)
            bounds = np.asarray(cfg.bounds)
            self.assertTrue(np.all(pop.positions >= bounds[:, 0]))
            self.assertTrue(np.all(pop.positions <= bounds[:, 1]))
        with self.assertRaises(ValueError):
            optimizer.woa_iteration(pop, cfg, optimizer.sphere, rng)

    def testAllNonFiniteInitialFitnessFails(self):
        cfg = optimizer.make_woa_config(agents=4, max_iter=3, seed=11)
        with self.assertRaises(optimizer.OptimizerFailedError) as context:
            optimizer.woa_run(cfg, nan_objective)
        self.assertEqual(context.exception.seed, 11)

    def testSameSeedIsDeterministic(self):
        cfg = optimizer.make_woa_config(agents=8, max_iter=30, dim=4,
                                        bounds=((-30.0, 30.0),) * 4, seed=5)
        first = optimizer.woa_run(cfg, optimizer.rosenbrock)
        second = optimizer.woa_run(cfg, optimizer.rosenbrock)
        self.assertEqual(first.convergence_curve, second.convergence_curve)

    def testParallelEvaluationMatchesSerial(self):
        cfg = optimizer.make_woa_config(agents=8, max_iter=15, dim=3,
                                        bounds=((-5.12, 5.12),) * 3, seed=2)
        serial = optimizer.woa_run(cfg, optimizer.rastrigin)
        parallel = optimizer.woa_run(cfg, optimizer.rastrigin, workers=2)
        self.assertEqual(serial.convergence_curve, parallel.convergence_curve)
        np.testing.assert_array_equal(serial.best_position, parallel.best_position)


class BenchmarkTest(unittest.TestCase):

    def testBenchmarkMinima(self):
        self.assertEqual(optimizer.sphere(np.zeros(4)), 0.0)
        self.assertEqual(optimizer.rosenbrock(np.ones(4)), 0.0)
        self.assertEqual(optimizer.rastrigin(np.zeros(4)), 0.0)
        self.assertAlmostEqual(optimizer.ackley(np.zeros(4)), 0.0, places=12)

    def testBenchmarkVariants(self):
        cfg = optimizer.make_woa_config(agents=10, max_iter=20, dim=3)
        stats = optimizer.benchmark_variants('sphere', cfg, [0, 1, 2])
        self.assertEqual([entry.variant for entry in stats], list(optimizer.VARIANTS))
        for entry in stats:
            self.assertEqual(entry.seeds, [0, 1, 2])
            self.assertEqual(len(entry.final_fitness), 3)
            for final, initial in zip(entry.final_fitness, entry.initial_best):
                self.assertLessEqual(final, initial)
            self.assertEqual(entry.median, float(np.median(entry.final_fitness)))
            self.assertGreaterEqual(entry.iqr, 0.0)

    def testUnknownBenchmark(self):
        with self.assertRaises(optimizer.WoaConfigError):
            optimizer.benchmark_variants('griewank', optimizer.make_woa_config(), [0])


class TunePidTest(unittest.TestCase):

    def setUp(self):
        self.scenario = step_scenario()
        self.cfg = optimizer.make_woa_config(agents=6, max_iter=3, dim=3,
                                             bounds=((0.0, 10.0), (0.0, 10.0), (0.0, 1.0)),
                                             seed=0)

    def testTunedGainsBeatBaseline(self):
        objective = optimizer.PidTuningObjective(self.scenario, 'itae')
        baseline = objective(np.array(controllers.CONVENTIONAL_PID_GAINS))
        result = optimizer.tune_pid(self.scenario, self.cfg, 'itae')
        self.assertLess(result.best_fitness, baseline)
        self.assertEqual(result.best_fitness, objective(np.array(result.gains)))
        self.assertEqual(len(result.convergence_curve), 4)
        self.assertTrue(is_non_increasing(result.convergence_curve))
        self.assertEqual(result.variant, 'modified')

    def testTuningIsDeterministic(self):
        first = optimizer.tune_pid(self.scenario, self.cfg)
        second = optimizer.tune_pid(self.scenario, self.cfg)
        self.assertEqual(first.gains, second.gains)
        self.assertEqual(first.convergence_curve, second.convergence_curve)

    def testRestartsKeepBestSeed(self):
        result = optimizer.tune_pid(self.scenario, self.cfg, restarts=2)
        singles = [optimizer.tune_pid(self.scenario, self.cfg._replace(seed=seed))
                   for seed in (0, 1)]
        self.assertEqual(result.best_fitness, min(single.best_fitness for single in singles))
        self.assertIn(result.seed, (0, 1))
        self.assertEqual(result.restarts, 2)

    def testCollapsedBoundsReturnThatPoint(self):
        cfg = self.cfg._replace(bounds=((1.0, 1.0), (0.5, 0.5), (0.3, 0.3)))
        result = optimizer.tune_pid(self.scenario, cfg)
        self.assertEqual(result.gains, controllers.PidGains(1.0, 0.5, 0.3))
        self.assertTrue(math.isfinite(result.best_fitness))
        self.assertEqual(result.convergence_curve, [result.best_fitness] * 4)

    def testDivergentGainsScoreInfinity(self):
        objective = optimizer.PidTuningObjective(self.scenario, 'ise', divergence_guard=1e-6)
        self.assertEqual(objective(np.array([1.0, 0.5, 0.3])), math.inf)

    def testRejectsNegativeBoundsAndWrongDim(self):
        with self.assertRaises(optimizer.WoaConfigError):
            optimizer.tune_pid(self.scenario, self.cfg._replace(
                bounds=((-1.0, 1.0), (0.0, 1.0), (0.0, 1.0))))
        with self.assertRaises(optimizer.WoaConfigError):
            optimizer.tune_pid(self.scenario, optimizer.make_woa_config(dim=2))
        with self.assertRaises(ValueError):
            optimizer.PidTuningObjective(self.scenario, 'mse')


if __name__ == '__main__':
    unittest.main()
