import math
import unittest
import unittest.mock

import numpy as np

import plant

PLANT_TIME_CONSTANTS = (0.1, 1.2, 1.8, 2.0, 4.0)
ORACLE_CELL = plant.PvCellParams(i_l=3.0, i_0=1e-9, n=1.3, v_t=0.02585, r_s=0.1, r_sh=100.0)


def bisection_oracle(params, v, tolerance=1e-12):
    """Cell current by plain bisection over [-I_L, 2 I_L]; residual decreases in I."""
    def residual(i):
        v_j = v + i * params.r_s
        return (params.i_l - params.i_0 * (math.exp(v_j / (params.n * params.v_t)) - 1.0) -
                v_j / params.r_sh - i)

    lo, hi = -params.i_l, 2.0 * params.i_l
    while hi - lo > tolerance:
        mid = 0.5 * (lo + hi)
        if residual(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def run_open_loop(model, load, seconds, u=0.0):
    state = model.initial_state()
    for _ in range(int(round(seconds / model.params.step_h))):
        state = plant.plant_step(model, state, u, load)
    return state


class FirstOrderBlockTest(unittest.TestCase):

    def testBlockStepMatchesClosedForm(self):
        h = 0.01
        for time_constant in PLANT_TIME_CONSTANTS:
            block = plant.FirstOrderBlock(gain=1.0, time_constant=time_constant)
            for k in range(1, 1001):
                value = plant.block_step(block, 1.0, h)
                expected = 1.0 - math.exp(-k * h / time_constant)
                self.assertLessEqual(abs(value - expected), 1e-12,
                                     msg='T=%r k=%d' % (time_constant, k))

    def testTwoSecondLagAfterTwoSeconds(self):
        block = plant.FirstOrderBlock(gain=1.0, time_constant=2.0)
        for _ in range(200):
            plant.block_step(block, 1.0, 0.01)
        self.assertAlmostEqual(block.state, 1.0 - math.exp(-1.0), places=12)
        self.assertAlmostEqual(block.state, 0.63212, places=5)

    def testRefinedStepAgreesAtCommonPoints(self):
        for time_constant in PLANT_TIME_CONSTANTS:
            coarse = plant.FirstOrderBlock(time_constant=time_constant)
            fine = plant.FirstOrderBlock(time_constant=time_constant)
            for _ in range(200):
                plant.block_step(coarse, 0.7, 0.01)
                for _ in range(10):
                    plant.block_step(fine, 0.7, 0.001)
                self.assertLessEqual(abs(coarse.state - fine.state), 1e-12)

    def testZeroInputStaysZero(self):
        block = plant.FirstOrderBlock(time_constant=1.2)
        for _ in range(500):
            self.assertEqual(plant.block_step(block, 0.0, 0.01), 0.0)

    def testStepResponseNeverOvershoots(self):
        block = plant.FirstOrderBlock(gain=1.0, time_constant=0.1)
        previous = 0.0
        for _ in range(5000):
            value = plant.block_step(block, 0.3, 0.01)
            self.assertGreaterEqual(value, previous - 1e-15)
            self.assertLessEqual(value, 0.3 + 1e-15)
            previous = value
        self.assertAlmostEqual(block.state, 0.3, places=12)

    def testNonFiniteInputAborts(self):
        block = plant.FirstOrderBlock(time_constant=2.0)
        with self.assertRaises(plant.SimulationAbortError):
            plant.block_step(block, float('nan'), 0.01)

    def testNonPositiveTimeConstantRejected(self):
        with self.assertRaises(plant.PlantConfigError):
            plant.FirstOrderBlock(time_constant=0.0)


class NetPowerTest(unittest.TestCase):

    def state(self, **deviations):
        return plant.MicrogridModel().initial_state()._replace(**deviations)

    def testEquilibrium(self):
        self.assertEqual(plant.net_power(self.state(), 0.0), 0.0)

    def testExactBalance(self):
        self.assertEqual(plant.net_power(self.state(dp_mtg=0.1, dp_fc=0.1), 0.2), 0.0)

    def testSignedStorage(self):
        self.assertEqual(plant.net_power(self.state(dp_bess=-0.05), 0.0), -0.05)

    def testSignedSumOfEveryUnit(self):
        deviations = dict(zip(('dp_%s' % unit for unit in plant.UNITS),
                              (0.01, 0.02, 0.03, -0.04, 0.05, 0.06, 0.07)))
        expected = sum(deviations.values()) - 0.15
        self.assertAlmostEqual(plant.net_power(self.state(**deviations), 0.15), expected,
                               places=12)


class PlantStepTest(unittest.TestCase):

    def setUp(self):
        self.model = plant.MicrogridModel(plant.DEFAULT_PARAMS)

    def testEquilibriumInvariance(self):
        state = self.model.initial_state()
        for _ in range(2000):
            state = plant.plant_step(self.model, state, 0.0, 0.0)
        self.assertEqual(state._replace(t=0.0), self.model.initial_state())
        self.assertAlmostEqual(state.t, 20.0, places=9)

    def testOpenLoopDcGain(self):
        params = plant.DEFAULT_PARAMS
        horizon = 50.0 * params.m_inertia / params.d_damping
        state = run_open_loop(self.model, 0.2, horizon)
        expected = -0.2 / params.d_damping
        self.assertAlmostEqual(expected, -16.667, places=3)
        self.assertLessEqual(abs(state.delta_f - expected), 1e-3 * abs(expected))

    def testUnitRouting(self):
        weights = {unit: 0.0 for unit in plant.CONTROLLABLE_UNITS}
        weights['mtg'] = 1.0
        model = plant.MicrogridModel(plant.DEFAULT_PARAMS._replace(dispatch_weights=weights))
        state = run_open_loop(model, 0.0, 60.0, u=0.1)
        self.assertAlmostEqual(state.dp_mtg, 0.1, places=9)
        for unit in plant.UNITS[1:]:
            self.assertEqual(getattr(state, 'dp_%s' % unit), 0.0)

    def testControlReachesFrequencyWithinOneStep(self):
        state = plant.plant_step(self.model, self.model.initial_state(), 0.5, 0.0)
        gain = plant.one_step_control_gain(self.model)
        self.assertAlmostEqual(gain, 0.0020274, delta=1e-7)
        self.assertAlmostEqual(state.delta_f, 0.5 * gain, places=15)
        load_only = plant.plant_step(self.model, self.model.initial_state(), 0.0, 0.2)
        params = plant.DEFAULT_PARAMS
        a_f = plant.zoh_alpha(params.m_inertia / params.d_damping, params.step_h)
        self.assertAlmostEqual(load_only.delta_f, -(1.0 - a_f) * 0.2 / params.d_damping,
                               places=15)

    def testControlIsClamped(self):
        clamped = plant.plant_step(self.model, self.model.initial_state(), 5.0, 0.0)
        at_limit = plant.plant_step(self.model, self.model.initial_state(), 1.0, 0.0)
        self.assertEqual(clamped, at_limit)

    def testExogenousInputsDriveTheirBlocks(self):
        state = self.model.initial_state()
        for _ in range(3000):
            state = plant.plant_step(self.model, state, 0.0, 0.0, pv_input=0.05,
                                     stpg_input=-0.02)
        self.assertAlmostEqual(state.dp_pv, 0.05, places=6)
        self.assertAlmostEqual(state.dp_stpg, -0.02, places=6)
        self.assertEqual(state.dp_mtg, 0.0)

    def testNonFiniteLoadNamesField(self):
        with self.assertRaises(plant.SimulationAbortError) as context:
            plant.plant_step(self.model, self.model.initial_state(), 0.0, float('inf'))
        self.assertEqual(context.exception.field, 'load')

    def testNonFiniteStateNamesField(self):
        state = self.model.initial_state()._replace(dp_fc=float('nan'))
        with self.assertRaises(plant.SimulationAbortError) as context:
            plant.plant_step(self.model, state, 0.0, 0.0)
        self.assertEqual(context.exception.field, 'delta_f')


class ParamsTest(unittest.TestCase):

    def testDefaultParamsValid(self):
        self.assertEqual(plant.validate_params(plant.DEFAULT_PARAMS), [])

    def testEveryViolationReported(self):
        params = plant.DEFAULT_PARAMS._replace(
            t_mtg=-1.0, d_damping=0.0, step_h=0.05,
            dispatch_weights={'mtg': 0.5, 'deg': 0.2, 'fc': 0.2, 'bess': 0.2, 'fess': 0.2},
            u_limits=(1.0, -1.0))
        violations = plant.validate_params(params)
        joined = ' | '.join(violations)
        for name in ('t_mtg', 'd_damping', 'step_h', 'dispatch_weights', 'u_limits'):
            self.assertIn(name, joined)
        with self.assertRaises(plant.PlantConfigError) as context:
            plant.MicrogridModel(params)
        self.assertEqual(context.exception.violations, violations)

    def testUnknownDispatchUnitRejected(self):
        weights = dict(plant.DEFAULT_PARAMS.dispatch_weights, pv=0.0)
        violations = plant.validate_params(plant.DEFAULT_PARAMS._replace(dispatch_weights=weights))
        self.assertTrue(any('non-controllable' in violation for violation in violations))


class ProfileTest(unittest.TestCase):

    def testLoadStepLookup(self):
        profile = plant.LoadProfile(steps=((0.0, 0.4), (4.0, 0.7)))
        self.assertEqual(plant.load_at(profile, 3.99), 0.4)
        self.assertEqual(plant.load_at(profile, 4.0), 0.7)
        self.assertEqual(plant.load_at(profile, 4.01), 0.7)
        self.assertEqual(plant.load_at(profile, 400 * 0.01), 0.7)

    def testLoadProfileValidation(self):
        self.assertEqual(plant.validate_load_profile(plant.LoadProfile(((0.0, 0.2),))), [])
        self.assertTrue(plant.validate_load_profile(plant.LoadProfile(((1.0, 0.2),))))
        self.assertTrue(plant.validate_load_profile(
            plant.LoadProfile(((0.0, 0.2), (2.0, 0.1), (2.0, 0.3)))))

    def testFluctuationOffIsZero(self):
        levels = plant.fluctuation_levels(plant.ZERO_EXOGENOUS_PROFILE, 20.0, 0.01)
        self.assertEqual(len(levels), 2001)
        self.assertFalse(np.any(levels))

    def testFluctuationSeededAndPiecewiseConstant(self):
        profile = plant.ExogenousProfile(steps=((0.0, 0.0),), fluctuation_amplitude=0.02,
                                         fluctuation_dwell=0.5, seed=7)
        first = plant.fluctuation_levels(profile, 10.0, 0.01)
        second = plant.fluctuation_levels(profile, 10.0, 0.01)
        np.testing.assert_array_equal(first, second)
        self.assertTrue(np.all(np.abs(first) <= 0.02))
        self.assertEqual(len(set(first[:50])), 1)
        self.assertNotEqual(first[0], first[50])


class PvCellTest(unittest.TestCase):

    def testShortCircuitIdentity(self):
        params = ORACLE_CELL._replace(r_s=0.0)
        self.assertEqual(plant.pv_cell_current(params, 0.0), params.i_l)

    def testDarkCellAtZeroBias(self):
        self.assertEqual(plant.pv_cell_current(ORACLE_CELL._replace(i_l=0.0), 0.0), 0.0)

    def testMatchesBisectionOracle(self):
        current = plant.pv_cell_current(ORACLE_CELL, 0.5)
        self.assertLessEqual(abs(current - bisection_oracle(ORACLE_CELL, 0.5)), 1e-9)
        self.assertLessEqual(abs(plant.pv_residual(ORACLE_CELL, 0.5, current)),
                             plant.PV_RESIDUAL_RTOL * ORACLE_CELL.i_l)

    def testMatchesOracleAcrossVoltageGrid(self):
        v_oc = plant.pv_open_circuit_voltage(ORACLE_CELL)
        self.assertLess(abs(bisection_oracle(ORACLE_CELL, v_oc)), 1e-9)
        for v in np.linspace(0.0, v_oc, 20):
            self.assertLessEqual(abs(plant.pv_cell_current(ORACLE_CELL, v) -
                                     bisection_oracle(ORACLE_CELL, v)), 1e-9, msg='V=%r' % v)

    def testIvCurveAndMaximumPowerPoint(self):
        voltages, currents = plant.pv_iv_curve(ORACLE_CELL, points=20)
        self.assertEqual(len(voltages), 20)
        self.assertTrue(np.all(np.diff(currents) < 0))
        self.assertAlmostEqual(currents[-1], 0.0, places=9)
        mpp = plant.pv_max_power_point(ORACLE_CELL)
        self.assertGreaterEqual(mpp.power, np.max(voltages * currents) - 1e-9)
        self.assertAlmostEqual(mpp.power, mpp.voltage * mpp.current, places=12)

    def testNewtonFailureFallsBackToBisection(self):
        with unittest.mock.patch.object(plant, '_pv_newton', return_value=None):
            current = plant.pv_cell_current(ORACLE_CELL, 0.5)
        self.assertLessEqual(abs(current - bisection_oracle(ORACLE_CELL, 0.5)), 1e-9)

    def testNonFiniteVoltageRaises(self):
        with self.assertRaises(plant.RootFindError):
            plant.pv_cell_current(ORACLE_CELL, float('nan'))

    def testInvalidCellParamsRaise(self):
        with self.assertRaises(plant.RootFindError):
            plant.pv_cell_current(ORACLE_CELL._replace(i_0=0.0), 0.1)


if __name__ == '__main__':
    unittest.main()
