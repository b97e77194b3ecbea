"""Closed-loop fixed-step simulation of a controller driving the microgrid."""
import logging
import math

import controllers
import metrics
import narma
import plant

CONTROLLER_KINDS = ('open-loop', 'pid', 'woa-pid', 'mwoa-pid', 'narma')
PID_KINDS = ('pid', 'woa-pid', 'mwoa-pid')
# |delta_f| beyond which a run is treated as diverged.
DEFAULT_DIVERGENCE_GUARD = 100.0


def num_samples(duration, h):
    return int(round(duration / h)) + 1


def run_closed_loop(model, controller, load_profile, duration, pv_profile=None,
                    stpg_profile=None, divergence_guard=None):
    """Simulate |controller| on |model| from equilibrium for |duration| seconds.

    Row k of the returned Trace holds the state at t_k = k*h, the load at t_k and the
    control issued at t_k, which is held over [t_k, t_k+1).

    Raises:
        plant.SimulationDivergedError if |delta_f| exceeds divergence_guard.
        plant.SimulationAbortError on non-finite values.
    """
    h = model.params.step_h
    rows = num_samples(duration, h)
    pv_profile = pv_profile or plant.ZERO_EXOGENOUS_PROFILE
    stpg_profile = stpg_profile or plant.ZERO_EXOGENOUS_PROFILE
    pv_fluctuation = plant.fluctuation_levels(pv_profile, duration, h)
    stpg_fluctuation = plant.fluctuation_levels(stpg_profile, duration, h)

    controller.reset()
    state = model.initial_state()
    columns = {name: [] for name in metrics.TRACE_COLUMNS}
    for k in range(rows):
        t = k * h
        load = plant.load_at(load_profile, t)
        if divergence_guard is not None and abs(state.delta_f) > divergence_guard:
            raise plant.SimulationDivergedError(
                'delta_f=%r exceeded divergence guard %r at t=%r' % (
                    state.delta_f, divergence_guard, t), field='delta_f')
        u = model.clamp(controller.control(state.delta_f, h))
        if not math.isfinite(u):
            raise plant.SimulationAbortError('Controller %s issued non-finite u at t=%r' % (
                controller.kind, t), field='u')

        columns['t'].append(t)
        for field in plant.STATE_FIELDS:
            columns[field].append(getattr(state, field))
        columns['load'].append(load)
        columns['u'].append(u)

        if k < rows - 1:
            pv_input = plant.exogenous_at(pv_profile, t) + pv_fluctuation[k]
            stpg_input = plant.exogenous_at(stpg_profile, t) + stpg_fluctuation[k]
            state = plant.plant_step(model, state, u, load, h, pv_input, stpg_input)
    return metrics.make_trace(h, columns)


def make_controller(kind, settings, params):
    """Build a controller instance.

    Args:
        kind: one of CONTROLLER_KINDS.
        settings: scenario.ControllerSettings (gains, filter, loaded artifacts).
        params: plant.MicrogridParams, for the actuator limits.
    """
    if kind == 'open-loop':
        return controllers.OpenLoopController()
    if kind in PID_KINDS:
        gains = settings.pid_gains if kind == 'pid' else settings.tuned_gains.get(kind)
        if gains is None:
            raise ValueError('No tuned gains available for %s controller' % kind)
        return controllers.PidController(gains, params.u_limits, settings.derivative_filter_n,
                                         kind=kind)
    if kind == 'narma':
        if settings.narma_net is None:
            raise ValueError('No trained NARMA-L2 network available')
        return narma.NarmaL2Controller(settings.narma_net, params.u_limits,
                                       g_epsilon=settings.g_epsilon,
                                       reference_pole=settings.reference_pole,
                                       y_ref=settings.y_ref)
    raise ValueError('Unknown controller kind %r, expected one of %s' % (kind,
                                                                          CONTROLLER_KINDS))


def simulate_scenario(scenario, controller_kind=None, divergence_guard=None):
    """Run the scenario's closed loop; controller_kind overrides the scenario's choice."""
    kind = controller_kind or scenario.controller.kind
    model = plant.MicrogridModel(scenario.params)
    controller = make_controller(kind, scenario.controller, scenario.params)
    logging.info('Simulating scenario %s with %s controller for %r s', scenario.name, kind,
                 scenario.duration)
    return run_closed_loop(model, controller, scenario.load_profile, scenario.duration,
                           scenario.pv_profile, scenario.stpg_profile, divergence_guard)
