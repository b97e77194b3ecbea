"""Discrete-time dynamic model of the PV / solar-thermal hybrid microgrid.

Every generation and storage unit is a unit-gain first-order lag advanced by its
exact zero-order-hold discretization. The frequency deviation obeys
M * d(delta_f)/dt = net_power - D * delta_f, also discretized exactly for a
net power held constant over the step. That net power uses the unit outputs at
the end of the step, so u(k) already moves delta_f(k+1).

Also holds the static single-diode PV cell solver.
"""
import collections
import logging
import math

import numpy as np
from scipy import optimize

UNITS = ('mtg', 'deg', 'fc', 'bess', 'fess', 'pv', 'stpg')
CONTROLLABLE_UNITS = ('mtg', 'deg', 'fc', 'bess', 'fess')
EXOGENOUS_UNITS = ('pv', 'stpg')
STATE_FIELDS = ('delta_f',) + tuple('dp_%s' % unit for unit in UNITS)

DEFAULT_STEP_H = 0.01
DEFAULT_U_LIMITS = (-1.0, 1.0)
# Minimum ratio of smallest time constant to the integration step.
MIN_TIME_CONSTANT_TO_STEP_RATIO = 5.0
NEWTON_MAX_ITERATIONS = 100
NEWTON_MAX_HALVINGS = 60
PV_RESIDUAL_RTOL = 1e-12
# math.exp overflows just above 709.
_MAX_EXP_ARGUMENT = 700.0

MicrogridParams = collections.namedtuple(
    'MicrogridParams',
    ['d_damping',
     'm_inertia',
     't_mtg',
     't_deg',
     't_fc',
     't_bess',
     't_fess',
     't_pv',
     't_stpg',
     'dispatch_weights',
     'u_limits',
     'step_h',
     ])

MicrogridState = collections.namedtuple('MicrogridState', STATE_FIELDS + ('t',))

LoadProfile = collections.namedtuple('LoadProfile', ['steps'])

# Deviation input of an uncontrolled source (PV or STPG). Steps behave like a
# LoadProfile; a non-zero fluctuation_amplitude overlays seeded piecewise-constant
# noise with dwell time fluctuation_dwell.
ExogenousProfile = collections.namedtuple(
    'ExogenousProfile',
    ['steps',
     'fluctuation_amplitude',
     'fluctuation_dwell',
     'seed',
     ])

PvCellParams = collections.namedtuple('PvCellParams',
                                      ['i_l', 'i_0', 'n', 'v_t', 'r_s', 'r_sh'])

PvOperatingPoint = collections.namedtuple('PvOperatingPoint', ['voltage', 'current', 'power'])

DEFAULT_PARAMS = MicrogridParams(
    d_damping=0.012,
    m_inertia=0.2,
    t_mtg=2.0,
    t_deg=2.0,
    t_fc=4.0,
    t_bess=0.1,
    t_fess=0.1,
    t_pv=1.8,
    t_stpg=1.2,
    dispatch_weights={unit: 0.2 for unit in CONTROLLABLE_UNITS},
    u_limits=DEFAULT_U_LIMITS,
    step_h=DEFAULT_STEP_H)

ZERO_EXOGENOUS_PROFILE = ExogenousProfile(steps=((0.0, 0.0),), fluctuation_amplitude=0.0,
                                          fluctuation_dwell=1.0, seed=0)


class Error(Exception):
    """Generic error type for this module."""


class SimulationAbortError(Error):
    """Non-finite input or state. |field| names the first offending quantity."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class SimulationDivergedError(SimulationAbortError):
    """Frequency deviation exceeded the configured divergence guard."""


class RootFindError(Error):
    """PV cell equation could not be solved."""


class PlantConfigError(Error):
    """Invalid microgrid parameters. |violations| lists every problem found."""

    def __init__(self, violations):
        super().__init__('Invalid microgrid parameters: %s' % '; '.join(violations))
        self.violations = list(violations)


def zoh_alpha(time_constant, h):
    """Exact ZOH decay factor exp(-h/T) of a first-order lag."""
    return math.exp(-h / time_constant)


class FirstOrderBlock:
    """gain / (time_constant * s + 1) with internal state (its current output)."""

    def __init__(self, gain=1.0, time_constant=1.0, state=0.0):
        if not time_constant > 0:
            raise PlantConfigError(['time_constant must be > 0, got %r' % time_constant])
        self.gain = gain
        self.time_constant = time_constant
        self.state = state

    def __repr__(self):
        return 'FirstOrderBlock(gain=%r, time_constant=%r, state=%r)' % (
            self.gain, self.time_constant, self.state)

    def step(self, value, h):
        if not h > 0:
            raise ValueError('step size must be > 0, got %r' % h)
        if not math.isfinite(value):
            raise SimulationAbortError('Non-finite block input %r' % value, field='input')
        alpha = zoh_alpha(self.time_constant, h)
        self.state = alpha * self.state + (1.0 - alpha) * self.gain * value
        return self.state


def block_step(block, value, h):
    """Advance |block| by one step of size h with input held at |value|.

    Returns:
        the new block state.
    """
    return block.step(value, h)


def validate_params(params):
    """Return list of str describing every invariant violated by |params|."""
    violations = []
    time_constants = {}
    for unit in UNITS:
        name = 't_%s' % unit
        value = getattr(params, name)
        time_constants[name] = value
        if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
            violations.append('%s must be finite and > 0, got %r' % (name, value))
    if not params.d_damping > 0:
        violations.append('d_damping must be > 0, got %r' % params.d_damping)
    if not params.m_inertia > 0:
        violations.append('m_inertia must be > 0, got %r' % params.m_inertia)
    if not params.step_h > 0:
        violations.append('step_h must be > 0, got %r' % params.step_h)
    else:
        valid_constants = [t for t in time_constants.values()
                           if isinstance(t, (int, float)) and t > 0]
        if valid_constants:
            limit = min(valid_constants) / MIN_TIME_CONSTANT_TO_STEP_RATIO
            if not params.step_h < limit:
                violations.append(
                    'step_h must be < min(time constants)/%g = %r, got %r' % (
                        MIN_TIME_CONSTANT_TO_STEP_RATIO, limit, params.step_h))

    weights = params.dispatch_weights
    unknown_units = set(weights) - set(CONTROLLABLE_UNITS)
    if unknown_units:
        violations.append('dispatch_weights has non-controllable units %s' %
                          sorted(unknown_units))
    for unit in CONTROLLABLE_UNITS:
        weight = weights.get(unit, 0.0)
        if not weight >= 0:
            violations.append('dispatch weight for %s must be >= 0, got %r' % (unit, weight))
    total_weight = sum(weights.get(unit, 0.0) for unit in CONTROLLABLE_UNITS)
    if not math.isclose(total_weight, 1.0, rel_tol=0.0, abs_tol=1e-9):
        violations.append('dispatch_weights must sum to 1, got %r' % total_weight)

    u_min, u_max = params.u_limits
    if not u_min < u_max:
        violations.append('u_limits must satisfy min < max, got %r' % (params.u_limits,))
    return violations


def validate_load_profile(profile):
    violations = []
    times = [time for time, _ in profile.steps]
    if not times:
        violations.append('load profile needs at least one step')
        return violations
    if times[0] != 0:
        violations.append('first load step must be at t=0, got %r' % times[0])
    for earlier, later in zip(times, times[1:]):
        if not later > earlier:
            violations.append('load step times must be strictly increasing (%r then %r)' %
                              (earlier, later))
    for time, level in profile.steps:
        if not (math.isfinite(time) and math.isfinite(level)):
            violations.append('load step (%r, %r) is not finite' % (time, level))
    return violations


def _step_level(steps, t):
    level = steps[0][1]
    for step_time, step_level in steps:
        # Tolerate accumulated rounding in t so a step at 4.0 s is seen at t = 4.0.
        if step_time <= t + 1e-9:
            level = step_level
        else:
            break
    return level


def load_at(profile, t):
    """Load level (pu) at time t for a LoadProfile."""
    return _step_level(profile.steps, t)


def fluctuation_levels(profile, duration, h):
    """Seeded piecewise-constant fluctuation samples for an ExogenousProfile.

    Returns:
        numpy array of length round(duration/h) + 1, zeros if amplitude is 0.
    """
    num_samples = int(round(duration / h)) + 1
    levels = np.zeros(num_samples)
    if not profile.fluctuation_amplitude:
        return levels
    rng = np.random.default_rng(profile.seed)
    dwell_samples = max(1, int(round(profile.fluctuation_dwell / h)))
    for start in range(0, num_samples, dwell_samples):
        levels[start:start + dwell_samples] = rng.uniform(-profile.fluctuation_amplitude,
                                                          profile.fluctuation_amplitude)
    return levels


def exogenous_at(profile, t):
    """Deterministic (step) part of an ExogenousProfile at time t."""
    return _step_level(profile.steps, t)


class MicrogridModel:
    """Validated parameters, unit block templates and cached ZOH coefficients."""

    def __init__(self, params=DEFAULT_PARAMS):
        violations = validate_params(params)
        if violations:
            raise PlantConfigError(violations)
        self.params = params
        self.blocks = {unit: FirstOrderBlock(gain=1.0,
                                             time_constant=getattr(params, 't_%s' % unit))
                       for unit in UNITS}
        self.weights = tuple(params.dispatch_weights.get(unit, 0.0)
                             for unit in CONTROLLABLE_UNITS)
        self._coefficients = {}

    def coefficients(self, h):
        """(unit alphas in UNITS order, frequency alpha) for step size h."""
        if h not in self._coefficients:
            unit_alphas = tuple(zoh_alpha(self.blocks[unit].time_constant, h) for unit in UNITS)
            frequency_alpha = zoh_alpha(self.params.m_inertia / self.params.d_damping, h)
            self._coefficients[h] = (unit_alphas, frequency_alpha)
        return self._coefficients[h]

    def clamp(self, u):
        u_min, u_max = self.params.u_limits
        return min(max(u, u_min), u_max)

    def initial_state(self):
        return MicrogridState(*([0.0] * len(STATE_FIELDS)), t=0.0)


def net_power(state, load):
    """Net power surplus (pu) of generation and storage over |load|.

    BESS and FESS deviations are signed; negative means charging.
    """
    return (state.dp_mtg + state.dp_deg + state.dp_fc + state.dp_pv + state.dp_stpg +
            state.dp_bess + state.dp_fess - load)


def check_state_finite(state):
    """Raise SimulationAbortError naming the first non-finite field of |state|."""
    for field in MicrogridState._fields:
        value = getattr(state, field)
        if not math.isfinite(value):
            raise SimulationAbortError(
                'Non-finite %s=%r at t=%r' % (field, value, state.t), field=field)


def plant_step(model, state, u, load, h=None, pv_input=0.0, stpg_input=0.0):
    """Advance the microgrid by one step of size h.

    Args:
        model: MicrogridModel.
        state: MicrogridState at the start of the step.
        u: control signal (pu), clamped to the model's u_limits.
        load: load deviation (pu) held over the step.
        h: step size, defaults to params.step_h.
        pv_input, stpg_input: exogenous deviation inputs of the PV and STPG blocks.
    Returns:
        MicrogridState at the end of the step.
    Raises:
        SimulationAbortError on any non-finite input or resulting state.
    """
    if h is None:
        h = model.params.step_h
    for name, value in (('u', u), ('load', load), ('pv_input', pv_input),
                        ('stpg_input', stpg_input)):
        if not math.isfinite(value):
            raise SimulationAbortError('Non-finite %s=%r at t=%r' % (name, value, state.t),
                                       field=name)
    u = model.clamp(u)
    (a_mtg, a_deg, a_fc, a_bess, a_fess, a_pv, a_stpg), a_f = model.coefficients(h)
    w_mtg, w_deg, w_fc, w_bess, w_fess = model.weights

    dp_mtg = a_mtg * state.dp_mtg + (1.0 - a_mtg) * w_mtg * u
    dp_deg = a_deg * state.dp_deg + (1.0 - a_deg) * w_deg * u
    dp_fc = a_fc * state.dp_fc + (1.0 - a_fc) * w_fc * u
    dp_bess = a_bess * state.dp_bess + (1.0 - a_bess) * w_bess * u
    dp_fess = a_fess * state.dp_fess + (1.0 - a_fess) * w_fess * u
    dp_pv = a_pv * state.dp_pv + (1.0 - a_pv) * pv_input
    dp_stpg = a_stpg * state.dp_stpg + (1.0 - a_stpg) * stpg_input

    surplus = dp_mtg + dp_deg + dp_fc + dp_pv + dp_stpg + dp_bess + dp_fess - load
    # delta_f relaxes towards surplus / D with time constant M / D.
    delta_f = a_f * state.delta_f + (1.0 - a_f) * surplus / model.params.d_damping

    new_state = MicrogridState(delta_f=delta_f, dp_mtg=dp_mtg, dp_deg=dp_deg, dp_fc=dp_fc,
                               dp_bess=dp_bess, dp_fess=dp_fess, dp_pv=dp_pv, dp_stpg=dp_stpg,
                               t=state.t + h)
    check_state_finite(new_state)
    return new_state


def one_step_control_gain(model, h=None):
    """d delta_f(k+1) / d u(k) from a single step, in Hz per pu of control."""
    if h is None:
        h = model.params.step_h
    unit_alphas, a_f = model.coefficients(h)
    units = sum(weight * (1.0 - alpha)
                for weight, alpha in zip(model.weights, unit_alphas[:len(CONTROLLABLE_UNITS)]))
    return (1.0 - a_f) * units / model.params.d_damping


def _safe_exp(argument):
    return math.exp(min(argument, _MAX_EXP_ARGUMENT))


def pv_residual(params, v, i):
    """I_L - I_D - I_SH - I of the single-diode equation."""
    v_j = v + i * params.r_s
    diode_current = params.i_0 * (_safe_exp(v_j / (params.n * params.v_t)) - 1.0)
    shunt_current = v_j / params.r_sh
    return params.i_l - diode_current - shunt_current - i


def _pv_residual_derivative(params, v, i):
    n_v_t = params.n * params.v_t
    v_j = v + i * params.r_s
    return (-params.i_0 * params.r_s / n_v_t * _safe_exp(v_j / n_v_t)
            - params.r_s / params.r_sh - 1.0)


def validate_pv_params(params):
    violations = []
    if not params.i_0 > 0:
        violations.append('i_0 must be > 0, got %r' % params.i_0)
    if not params.v_t > 0:
        violations.append('v_t must be > 0, got %r' % params.v_t)
    if not params.n > 0:
        violations.append('n must be > 0, got %r' % params.n)
    if not params.r_s >= 0:
        violations.append('r_s must be >= 0, got %r' % params.r_s)
    if not params.r_sh > 0:
        violations.append('r_sh must be > 0, got %r' % params.r_sh)
    return violations


def _pv_newton(params, v, tolerance):
    current = params.i_l
    residual = pv_residual(params, v, current)
    for iteration in range(NEWTON_MAX_ITERATIONS):
        if abs(residual) <= tolerance:
            logging.debug('PV Newton converged in %d iterations', iteration)
            return current
        derivative = _pv_residual_derivative(params, v, current)
        step = -residual / derivative
        # Damping: halve the step until the residual magnitude decreases.
        for _ in range(NEWTON_MAX_HALVINGS):
            candidate = current + step
            candidate_residual = pv_residual(params, v, candidate)
            if math.isfinite(candidate_residual) and abs(candidate_residual) < abs(residual):
                break
            step *= 0.5
        else:
            return None
        current, residual = candidate, candidate_residual
    if abs(residual) <= tolerance:
        return current
    return None


def _pv_bracket(params, v):
    """Interval [lo, hi] with residual(lo) >= 0 >= residual(hi); residual decreases in I."""
    span = max(abs(params.i_l), 1.0)
    lo, hi = -span, 2.0 * span
    for _ in range(200):
        if pv_residual(params, v, lo) >= 0:
            break
        lo *= 2.0
    for _ in range(200):
        if pv_residual(params, v, hi) <= 0:
            break
        hi *= 2.0
    return lo, hi


def pv_cell_current(params, v):
    """Net cell current I(V) from the implicit single-diode equation.

    Damped Newton from I = I_L; falls back to bisection on a bracketing interval.

    Raises:
        RootFindError if no solution meeting the residual tolerance is found.
    """
    if not math.isfinite(v):
        raise RootFindError('PV cell voltage must be finite, got %r' % v)
    violations = validate_pv_params(params)
    if violations:
        raise RootFindError('Invalid PV cell parameters: %s' % '; '.join(violations))
    tolerance = PV_RESIDUAL_RTOL * max(1.0, abs(params.i_l))
    current = _pv_newton(params, v, tolerance)
    if current is not None:
        return current

    logging.info('PV Newton did not converge at V=%r, falling back to bisection', v)
    lo, hi = _pv_bracket(params, v)
    if pv_residual(params, v, lo) < 0 or pv_residual(params, v, hi) > 0:
        raise RootFindError('Unable to bracket PV cell current at V=%r' % v)
    current = optimize.bisect(lambda i: pv_residual(params, v, i), lo, hi,
                              xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    if abs(pv_residual(params, v, current)) > tolerance:
        raise RootFindError('PV cell current residual %r above tolerance %r at V=%r' % (
            pv_residual(params, v, current), tolerance, v))
    return current


def pv_open_circuit_voltage(params):
    """Voltage at which the cell current is zero."""
    violations = validate_pv_params(params)
    if violations:
        raise RootFindError('Invalid PV cell parameters: %s' % '; '.join(violations))
    if params.i_l <= 0:
        return 0.0
    # Ignoring the shunt gives an upper bound on V_oc.
    upper = params.n * params.v_t * math.log(params.i_l / params.i_0 + 1.0)
    return optimize.brentq(lambda v: pv_residual(params, v, 0.0), 0.0, upper,
                           xtol=1e-15, rtol=4 * np.finfo(float).eps)


def pv_iv_curve(params, points=20):
    """Voltages from 0 to V_oc and the matching cell currents, as numpy arrays."""
    voltages = np.linspace(0.0, pv_open_circuit_voltage(params), points)
    currents = np.array([pv_cell_current(params, v) for v in voltages])
    return voltages, currents


def pv_max_power_point(params):
    """PvOperatingPoint maximising V * I between 0 and V_oc."""
    v_oc = pv_open_circuit_voltage(params)
    if v_oc <= 0:
        return PvOperatingPoint(voltage=0.0, current=pv_cell_current(params, 0.0), power=0.0)
    result = optimize.minimize_scalar(lambda v: -v * pv_cell_current(params, v),
                                      bounds=(0.0, v_oc), method='bounded',
                                      options={'xatol': 1e-10})
    voltage = float(result.x)
    current = pv_cell_current(params, voltage)
    return PvOperatingPoint(voltage=voltage, current=current, power=voltage * current)
