"""Controller abstraction and the PID load-frequency controller.

Every controller maps a frequency deviation measurement (Hz) and the step size
to a control signal u (pu) for the dispatchable units. The regulation target is
delta_f = 0, so the control error is e = -delta_f.
"""
import collections
import logging
import math

PidGains = collections.namedtuple('PidGains', ['kp', 'ki', 'kd'])
PidState = collections.namedtuple('PidState',
                                  ['integral', 'last_measurement', 'filtered_derivative'])

# Untuned baseline ("conventional PID"); not tuned for this plant.
CONVENTIONAL_PID_GAINS = PidGains(kp=1.0, ki=0.5, kd=0.3)
DEFAULT_DERIVATIVE_FILTER_N = 100.0
ZERO_PID_STATE = PidState(integral=0.0, last_measurement=0.0, filtered_derivative=0.0)


class Error(Exception):
    """Generic error type for this module."""


def validate_gains(gains):
    violations = []
    for name in PidGains._fields:
        value = getattr(gains, name)
        if not (math.isfinite(value) and value >= 0):
            violations.append('%s must be finite and >= 0, got %r' % (name, value))
    return violations


def pid_step(gains, state, error, h, u_limits, derivative_filter_n=DEFAULT_DERIVATIVE_FILTER_N):
    """One step of a parallel PID with derivative on measurement.

    Args:
        gains: PidGains.
        state: PidState from the previous step.
        error: control error e = 0 - delta_f (Hz).
        h: step size (s), > 0.
        u_limits: (u_min, u_max) actuator limits (pu).
        derivative_filter_n: first-order derivative filter coefficient N (1/s).
    Returns:
        (u, PidState) with u clamped to u_limits.
    """
    if not h > 0:
        raise ValueError('step size must be > 0, got %r' % h)
    u_min, u_max = u_limits
    measurement = -error
    raw_derivative = (measurement - state.last_measurement) / h
    beta = math.exp(-derivative_filter_n * h)
    filtered_derivative = beta * state.filtered_derivative + (1.0 - beta) * raw_derivative

    proportional = gains.kp * error
    derivative_term = -gains.kd * filtered_derivative
    integral = state.integral + error * h
    u = proportional + gains.ki * integral + derivative_term

    # Conditional integration: do not integrate further into a saturated output.
    if (u > u_max and error > 0) or (u < u_min and error < 0):
        integral = state.integral
        u = proportional + gains.ki * integral + derivative_term

    u = min(max(u, u_min), u_max)
    return u, PidState(integral=integral, last_measurement=measurement,
                       filtered_derivative=filtered_derivative)


class Controller:
    """Interface of a load-frequency controller instance (one per simulation)."""

    kind = None

    def reset(self):
        """Zero all internal state and return the fresh state."""
        raise NotImplementedError

    def control(self, delta_f, h):
        """Return the control signal u (pu) for the measured delta_f (Hz)."""
        raise NotImplementedError


class OpenLoopController(Controller):
    """u = 0 always; the uncontrolled reference."""

    kind = 'open-loop'

    def reset(self):
        return None

    def control(self, delta_f, h):
        return 0.0


class PidController(Controller):

    kind = 'pid'

    def __init__(self, gains, u_limits, derivative_filter_n=DEFAULT_DERIVATIVE_FILTER_N,
                 kind='pid'):
        violations = validate_gains(gains)
        if violations:
            raise ValueError('Invalid PID gains: %s' % '; '.join(violations))
        self.gains = gains
        self.u_limits = u_limits
        self.derivative_filter_n = derivative_filter_n
        self.kind = kind
        self.state = ZERO_PID_STATE

    def __repr__(self):
        return 'PidController(kind=%r, gains=%r)' % (self.kind, self.gains)

    def reset(self):
        self.state = ZERO_PID_STATE
        return self.state

    def control(self, delta_f, h):
        u, self.state = pid_step(self.gains, self.state, -delta_f, h, self.u_limits,
                                 self.derivative_filter_n)
        return u


def controller_reset(controller):
    """Zero the controller's internal state; returns the fresh state. Idempotent."""
    state = controller.reset()
    logging.debug('Reset %s controller', controller.kind)
    return state
