"""Scenario files: plant, disturbances, controller choice, metrics and tuning settings.

A scenario is one .cfg document. Every section but [SCENARIO] and [LOAD] is
optional; missing keys take the module defaults and per-section SEED keys fall
back to [SCENARIO] SEED. See scenarios/EXAMPLE.cfg for every key.
"""
import collections
import configparser
import logging
import math
import os.path

import config_utils
import controllers
import metrics
import narma
import optimizer
import plant
import results_io
import simulation

SCHEMA_VERSION = 1
DEFAULT_DURATION = 20.0

ControllerSettings = collections.namedtuple(
    'ControllerSettings',
    ['kind',
     'pid_gains',
     'derivative_filter_n',
     'gains_files',
     'weights_file',
     'g_epsilon',
     'reference_pole',
     'y_ref',
     # Loaded by load_artifacts: controller kind -> PidGains, and the NARMA-L2 net.
     'tuned_gains',
     'narma_net',
     ])

MetricsSettings = collections.namedtuple(
    'MetricsSettings',
    ['band', 'band_mode', 'band_percent', 'window', 't_disturbance', 'fitness_index'])

Scenario = collections.namedtuple(
    'Scenario',
    ['name',
     'schema_version',
     'duration',
     'seed',
     'params',
     'load_profile',
     'pv_profile',
     'stpg_profile',
     'controller',
     'metrics',
     'woa',
     'restarts',
     'narma',
     'slack_url',
     ])


class Error(Exception):
    """Generic error type for this module."""


class ScenarioValidationError(Error):
    """Invalid scenario. |violations| names every bad field."""

    def __init__(self, violations):
        super().__init__('Invalid scenario: %s' % '; '.join(violations))
        self.violations = list(violations)


class _SectionReader:
    """Typed reads from a ConfigParser that record, instead of raise, bad values."""

    def __init__(self, config):
        self.config = config
        self.violations = []

    def _read(self, section, key, fallback, convert):
        text = self.config.get(section, key, fallback=None)
        if text is None or not text.strip():
            return fallback
        try:
            return convert(text.strip())
        except ValueError as err:
            self.violations.append('%s.%s: cannot parse %r (%s)' % (section, key, text, err))
            return fallback

    def getfloat(self, section, key, fallback):
        return self._read(section, key, fallback, float)

    def getint(self, section, key, fallback):
        return self._read(section, key, fallback, int)

    def get(self, section, key, fallback):
        return self._read(section, key, fallback, str)

    def getpairs(self, section, key, fallback):
        return self._read(section, key, fallback,
                          lambda text: tuple(config_utils.parse_pairs(text)))

    def getfloats(self, section, key, fallback):
        return self._read(section, key, fallback,
                          lambda text: tuple(config_utils.parse_float_list(text)))

    def getpaths(self, section, key, base_dir):
        text = self.config.get(section, key, fallback='')
        return tuple(_resolve(token.strip(), base_dir)
                     for token in text.split(config_utils.LIST_SEPARATOR) if token.strip())


def _resolve(path, base_dir):
    if not path:
        return ''
    return path if os.path.isabs(path) else os.path.normpath(os.path.join(base_dir, path))


def _read_params(reader):
    defaults = plant.DEFAULT_PARAMS
    values = {}
    for field in ('d_damping', 'm_inertia') + tuple('t_%s' % unit for unit in plant.UNITS):
        values[field] = reader.getfloat('PLANT', field.upper(), getattr(defaults, field))
    default_weights = tuple(defaults.dispatch_weights[unit] for unit in
                            plant.CONTROLLABLE_UNITS)
    weights = reader.getfloats('PLANT', 'DISPATCH_WEIGHTS', default_weights)
    if len(weights) != len(plant.CONTROLLABLE_UNITS):
        reader.violations.append('PLANT.DISPATCH_WEIGHTS: expected %d weights (%s), got %d' % (
            len(plant.CONTROLLABLE_UNITS), ','.join(plant.CONTROLLABLE_UNITS), len(weights)))
        weights = default_weights
    return plant.MicrogridParams(
        dispatch_weights=dict(zip(plant.CONTROLLABLE_UNITS, weights)),
        u_limits=(reader.getfloat('PLANT', 'U_MIN', defaults.u_limits[0]),
                  reader.getfloat('PLANT', 'U_MAX', defaults.u_limits[1])),
        step_h=reader.getfloat('PLANT', 'STEP_H', defaults.step_h),
        **values)


def _read_exogenous(reader, section, seed):
    default = plant.ZERO_EXOGENOUS_PROFILE
    return plant.ExogenousProfile(
        steps=reader.getpairs(section, 'STEPS', default.steps),
        fluctuation_amplitude=reader.getfloat(section, 'FLUCTUATION_AMPLITUDE',
                                           default.fluctuation_amplitude),
        fluctuation_dwell=reader.getfloat(section, 'FLUCTUATION_DWELL', default.fluctuation_dwell),
        seed=reader.getint(section, 'SEED', seed))


def _read_controller(reader, base_dir):
    baseline = controllers.CONVENTIONAL_PID_GAINS
    return ControllerSettings(
        kind=reader.get('CONTROLLER', 'KIND', 'pid'),
        pid_gains=controllers.PidGains(kp=reader.getfloat('CONTROLLER', 'KP', baseline.kp),
                                       ki=reader.getfloat('CONTROLLER', 'KI', baseline.ki),
                                       kd=reader.getfloat('CONTROLLER', 'KD', baseline.kd)),
        derivative_filter_n=reader.getfloat('CONTROLLER', 'DERIVATIVE_FILTER_N',
                                         controllers.DEFAULT_DERIVATIVE_FILTER_N),
        gains_files=reader.getpaths('CONTROLLER', 'GAINS_FILE', base_dir),
        weights_file=_resolve(reader.get('CONTROLLER', 'WEIGHTS_FILE', ''), base_dir),
        g_epsilon=reader.getfloat('CONTROLLER', 'G_EPSILON', narma.DEFAULT_NARMA_CONFIG.g_epsilon),
        reference_pole=reader.getfloat('CONTROLLER', 'REFERENCE_POLE',
                                    narma.DEFAULT_NARMA_CONFIG.reference_pole),
        y_ref=reader.getfloat('CONTROLLER', 'Y_REF', 0.0),
        tuned_gains={},
        narma_net=None)


def _read_metrics(reader):
    window = reader.getpairs('METRICS', 'WINDOW', ())
    return MetricsSettings(
        band=reader.getfloat('METRICS', 'BAND', metrics.DEFAULT_BAND),
        band_mode=reader.get('METRICS', 'BAND_MODE', 'absolute'),
        band_percent=reader.getfloat('METRICS', 'BAND_PERCENT', metrics.DEFAULT_BAND_PERCENT),
        window=window[0] if window else None,
        t_disturbance=reader.getfloat('METRICS', 'T_DISTURBANCE', 0.0),
        fitness_index=reader.get('METRICS', 'FITNESS_INDEX', 'itae'))


def _read_woa(reader, seed):
    bounds = reader.getpairs('WOA', 'BOUNDS', tuple(optimizer.DEFAULT_GAIN_BOUNDS for _ in range(3)))
    return optimizer.make_woa_config(
        variant=reader.get('WOA', 'VARIANT', 'modified'),
        agents=reader.getint('WOA', 'AGENTS', optimizer.DEFAULT_AGENTS),
        max_iter=reader.getint('WOA', 'MAX_ITER', optimizer.DEFAULT_MAX_ITER),
        dim=len(bounds),
        bounds=bounds,
        b_spiral=reader.getfloat('WOA', 'B_SPIRAL', optimizer.DEFAULT_B_SPIRAL),
        cf1=reader.getfloat('WOA', 'CF1', optimizer.DEFAULT_CORRECTION_FACTOR),
        cf2=reader.getfloat('WOA', 'CF2', optimizer.DEFAULT_CORRECTION_FACTOR),
        seed=reader.getint('WOA', 'SEED', seed))


def _read_narma(reader, seed, step_h):
    defaults = narma.DEFAULT_NARMA_CONFIG
    return narma.make_narma_config(
        n_delays_y=reader.getint('NARMA', 'N_DELAYS_Y', defaults.n_delays_y),
        n_delays_u=reader.getint('NARMA', 'N_DELAYS_U', defaults.n_delays_u),
        hidden=reader.getint('NARMA', 'HIDDEN', defaults.hidden),
        samples=reader.getint('NARMA', 'SAMPLES', defaults.samples),
        h=step_h,
        amp_lo=reader.getfloat('NARMA', 'AMP_LO', defaults.amp_lo),
        amp_hi=reader.getfloat('NARMA', 'AMP_HI', defaults.amp_hi),
        dwell_lo=reader.getfloat('NARMA', 'DWELL_LO', defaults.dwell_lo),
        dwell_hi=reader.getfloat('NARMA', 'DWELL_HI', defaults.dwell_hi),
        split=reader.getfloats('NARMA', 'SPLIT', defaults.split),
        lambda0=reader.getfloat('NARMA', 'LAMBDA0', defaults.lambda0),
        lambda_up=reader.getfloat('NARMA', 'LAMBDA_UP', defaults.lambda_up),
        lambda_down=reader.getfloat('NARMA', 'LAMBDA_DOWN', defaults.lambda_down),
        max_epochs=reader.getint('NARMA', 'MAX_EPOCHS', defaults.max_epochs),
        patience=reader.getint('NARMA', 'PATIENCE', defaults.patience),
        g_epsilon=reader.getfloat('NARMA', 'G_EPSILON', defaults.g_epsilon),
        seed=reader.getint('NARMA', 'SEED', seed),
        target_mode=reader.get('NARMA', 'TARGET_MODE', defaults.target_mode),
        reference_pole=reader.getfloat('NARMA', 'REFERENCE_POLE', defaults.reference_pole),
        divergence_guard=reader.getfloat('NARMA', 'DIVERGENCE_GUARD', defaults.divergence_guard))


def scenario_from_config(config, base_dir='.'):
    """Build a Scenario from a ConfigParser; relative paths resolve against base_dir.

    Raises:
        ScenarioValidationError listing every unparsable or invalid field.
    """
    reader = _SectionReader(config)
    for section in ('SCENARIO', 'LOAD'):
        if not config.has_section(section):
            reader.violations.append('missing required section [%s]' % section)
    if reader.violations:
        raise ScenarioValidationError(reader.violations)

    seed = reader.getint('SCENARIO', 'SEED', 0)
    params = _read_params(reader)
    result = Scenario(
        name=reader.get('SCENARIO', 'NAME', 'unnamed'),
        schema_version=reader.getint('SCENARIO', 'SCHEMA_VERSION', SCHEMA_VERSION),
        duration=reader.getfloat('SCENARIO', 'DURATION', DEFAULT_DURATION),
        seed=seed,
        params=params,
        load_profile=plant.LoadProfile(steps=reader.getpairs('LOAD', 'STEPS', ())),
        pv_profile=_read_exogenous(reader, 'PV', seed),
        stpg_profile=_read_exogenous(reader, 'STPG', seed),
        controller=_read_controller(reader, base_dir),
        metrics=_read_metrics(reader),
        woa=_read_woa(reader, seed),
        restarts=reader.getint('WOA', 'RESTARTS', 1),
        narma=_read_narma(reader, seed, params.step_h),
        slack_url=config.get('LOGGING', 'SLACK_URL', fallback=''))
    violations = reader.violations + validate_scenario(result)
    if violations:
        raise ScenarioValidationError(violations)
    return result


def _validate_exogenous(name, profile):
    violations = ['%s: %s' % (name, message)
                  for message in plant.validate_load_profile(plant.LoadProfile(profile.steps))]
    if not (math.isfinite(profile.fluctuation_amplitude) and profile.fluctuation_amplitude >= 0):
        violations.append('%s.FLUCTUATION_AMPLITUDE must be finite and >= 0, got %r' % (
            name, profile.fluctuation_amplitude))
    if not profile.fluctuation_dwell > 0:
        violations.append('%s.FLUCTUATION_DWELL must be > 0, got %r' % (
            name, profile.fluctuation_dwell))
    return violations


def validate_scenario(scenario):
    """Return list of str naming every invalid field of |scenario|."""
    violations = []
    if scenario.schema_version != SCHEMA_VERSION:
        violations.append('SCENARIO.SCHEMA_VERSION must be %d, got %r' % (
            SCHEMA_VERSION, scenario.schema_version))
    if not (math.isfinite(scenario.duration) and scenario.duration > 0):
        violations.append('SCENARIO.DURATION must be finite and > 0, got %r' % scenario.duration)
    violations += ['PLANT: %s' % message for message in plant.validate_params(scenario.params)]
    violations += ['LOAD: %s' % message
                   for message in plant.validate_load_profile(scenario.load_profile)]
    if scenario.load_profile.steps:
        last_step = scenario.load_profile.steps[-1][0]
        if not scenario.duration > last_step:
            violations.append('SCENARIO.DURATION %r must exceed the last load step time %r' % (
                scenario.duration, last_step))
    violations += _validate_exogenous('PV', scenario.pv_profile)
    violations += _validate_exogenous('STPG', scenario.stpg_profile)

    settings = scenario.controller
    if settings.kind not in simulation.CONTROLLER_KINDS:
        violations.append('CONTROLLER.KIND must be one of %s, got %r' % (
            simulation.CONTROLLER_KINDS, settings.kind))
    violations += ['CONTROLLER: %s' % message
                   for message in controllers.validate_gains(settings.pid_gains)]
    if not settings.derivative_filter_n > 0:
        violations.append('CONTROLLER.DERIVATIVE_FILTER_N must be > 0, got %r' %
                          settings.derivative_filter_n)
    if not settings.g_epsilon > 0:
        violations.append('CONTROLLER.G_EPSILON must be > 0, got %r' % settings.g_epsilon)
    if not 0 <= settings.reference_pole < 1:
        violations.append('CONTROLLER.REFERENCE_POLE must be in [0, 1), got %r' %
                          settings.reference_pole)
    settings = scenario.metrics
    if settings.band_mode not in metrics.BAND_MODES:
        violations.append('METRICS.BAND_MODE must be one of %s, got %r' % (
            metrics.BAND_MODES, settings.band_mode))
    if not settings.band > 0:
        violations.append('METRICS.BAND must be > 0, got %r' % settings.band)
    if not 0 < settings.band_percent < 100:
        violations.append('METRICS.BAND_PERCENT must be in (0, 100), got %r' %
                          settings.band_percent)
    if settings.window is not None:
        t_start, t_end = settings.window
        if not 0 <= t_start < t_end <= scenario.duration:
            violations.append('METRICS.WINDOW must satisfy 0 <= start < end <= duration, got '
                              '%r' % (settings.window,))
    if not 0 <= settings.t_disturbance < scenario.duration:
        violations.append('METRICS.T_DISTURBANCE must be in [0, duration), got %r' %
                          settings.t_disturbance)
    if settings.fitness_index not in metrics.FITNESS_INDICES:
        violations.append('METRICS.FITNESS_INDEX must be one of %s, got %r' % (
            metrics.FITNESS_INDICES, settings.fitness_index))

    violations += ['WOA: %s' % message
                   for message in optimizer.validate_woa_config(scenario.woa)]
    if not (isinstance(scenario.restarts, int) and scenario.restarts >= 1):
        violations.append('WOA.RESTARTS must be an integer >= 1, got %r' % scenario.restarts)
    violations += ['NARMA: %s' % message
                   for message in narma.validate_narma_config(scenario.narma)]
    return violations


def _artifact_violations(scenario, kind):
    settings = scenario.controller
    if kind in ('woa-pid', 'mwoa-pid'):
        if not settings.gains_files:
            return ['CONTROLLER.GAINS_FILE is required for a %s controller' % kind]
        return ['CONTROLLER.GAINS_FILE %s does not exist' % path
                for path in settings.gains_files if not os.path.isfile(path)]
    if kind == 'narma':
        if not settings.weights_file:
            return ['CONTROLLER.WEIGHTS_FILE is required for a narma controller']
        if not os.path.isfile(settings.weights_file):
            return ['CONTROLLER.WEIGHTS_FILE %s does not exist' % settings.weights_file]
    return []


def load_artifacts(scenario, kinds=None):
    """Return |scenario| with tuned gains and NARMA weights needed by |kinds| loaded.

    Raises:
        ScenarioValidationError if a needed artifact is missing or lacks a kind.
        narma.WeightsFileError if the weights file is malformed.
    """
    kinds = kinds or (scenario.controller.kind,)
    violations = []
    for kind in kinds:
        violations += _artifact_violations(scenario, kind)
    if violations:
        raise ScenarioValidationError(violations)

    settings = scenario.controller
    tuned_gains = dict(settings.tuned_gains)
    narma_net = settings.narma_net
    if any(kind in ('woa-pid', 'mwoa-pid') for kind in kinds):
        for path in settings.gains_files:
            record = results_io.read_gains(path)
            tuned_gains[record.kind] = record.gains
        violations += ['no tuned gains for %s in CONTROLLER.GAINS_FILE' % kind for kind in kinds
                       if kind in ('woa-pid', 'mwoa-pid') and kind not in tuned_gains]
    if 'narma' in kinds and narma_net is None:
        narma_net = narma.load_weights(settings.weights_file)
        if not math.isclose(narma_net.h, scenario.params.step_h, rel_tol=1e-9):
            violations.append('NARMA-L2 weights trained at h=%r, scenario STEP_H is %r' % (
                narma_net.h, scenario.params.step_h))
    if violations:
        raise ScenarioValidationError(violations)
    return scenario._replace(controller=settings._replace(tuned_gains=tuned_gains,
                                                          narma_net=narma_net))


def load_scenario(path, artifacts=False):
    """Read and validate the scenario at |path|, optionally loading its controller artifacts."""
    try:
        config = config_utils.get_config(path)
    except (FileNotFoundError, configparser.Error) as err:
        raise ScenarioValidationError(['cannot read scenario file %s: %s' % (path, err)]) from err
    result = scenario_from_config(config, os.path.dirname(os.path.abspath(path)))
    logging.info('Loaded scenario %s from %s', result.name, path)
    if artifacts:
        result = load_artifacts(result)
    return result


def with_seed(scenario, seed):
    """Override the scenario seed and every per-section seed."""
    return scenario._replace(
        seed=seed,
        pv_profile=scenario.pv_profile._replace(seed=seed),
        stpg_profile=scenario.stpg_profile._replace(seed=seed),
        woa=scenario.woa._replace(seed=seed),
        narma=scenario.narma._replace(seed=seed))


def _float(value):
    return config_utils.format_float(value)


def scenario_to_config(scenario):
    """ConfigParser holding every field of |scenario| (artifacts excluded)."""
    config = configparser.ConfigParser()
    config['SCENARIO'] = {
        'SCHEMA_VERSION': str(scenario.schema_version),
        'NAME': scenario.name,
        'DURATION': _float(scenario.duration),
        'SEED': str(scenario.seed),
    }
    params = scenario.params
    plant_section = {field.upper(): _float(getattr(params, field))
                     for field in ('d_damping', 'm_inertia') +
                     tuple('t_%s' % unit for unit in plant.UNITS)}
    plant_section['DISPATCH_WEIGHTS'] = config_utils.format_float_list(
        params.dispatch_weights.get(unit, 0.0) for unit in plant.CONTROLLABLE_UNITS)
    plant_section['U_MIN'] = _float(params.u_limits[0])
    plant_section['U_MAX'] = _float(params.u_limits[1])
    plant_section['STEP_H'] = _float(params.step_h)
    config['PLANT'] = plant_section
    config['LOAD'] = {'STEPS': config_utils.format_pairs(scenario.load_profile.steps)}
    for section, profile in (('PV', scenario.pv_profile), ('STPG', scenario.stpg_profile)):
        config[section] = {
            'STEPS': config_utils.format_pairs(profile.steps),
            'FLUCTUATION_AMPLITUDE': _float(profile.fluctuation_amplitude),
            'FLUCTUATION_DWELL': _float(profile.fluctuation_dwell),
            'SEED': str(profile.seed),
        }
    settings = scenario.controller
    config['CONTROLLER'] = {
        'KIND': settings.kind,
        'KP': _float(settings.pid_gains.kp),
        'KI': _float(settings.pid_gains.ki),
        'KD': _float(settings.pid_gains.kd),
        'DERIVATIVE_FILTER_N': _float(settings.derivative_filter_n),
        'GAINS_FILE': config_utils.LIST_SEPARATOR.join(settings.gains_files),
        'WEIGHTS_FILE': settings.weights_file,
        'G_EPSILON': _float(settings.g_epsilon),
        'REFERENCE_POLE': _float(settings.reference_pole),
        'Y_REF': _float(settings.y_ref),
    }
    settings = scenario.metrics
    config['METRICS'] = {
        'BAND': _float(settings.band),
        'BAND_MODE': settings.band_mode,
        'BAND_PERCENT': _float(settings.band_percent),
        'WINDOW': config_utils.format_pairs([settings.window]) if settings.window else '',
        'T_DISTURBANCE': _float(settings.t_disturbance),
        'FITNESS_INDEX': settings.fitness_index,
    }
    woa = scenario.woa
    config['WOA'] = {
        'VARIANT': woa.variant,
        'AGENTS': str(woa.agents),
        'MAX_ITER': str(woa.max_iter),
        'BOUNDS': config_utils.format_pairs(woa.bounds),
        'B_SPIRAL': _float(woa.b_spiral),
        'CF1': _float(woa.cf1),
        'CF2': _float(woa.cf2),
        'SEED': str(woa.seed),
        'RESTARTS': str(scenario.restarts),
    }
    cfg = scenario.narma
    config['NARMA'] = {
        'N_DELAYS_Y': str(cfg.n_delays_y),
        'N_DELAYS_U': str(cfg.n_delays_u),
        'HIDDEN': str(cfg.hidden),
        'SAMPLES': str(cfg.samples),
        'AMP_LO': _float(cfg.amp_lo),
        'AMP_HI': _float(cfg.amp_hi),
        'DWELL_LO': _float(cfg.dwell_lo),
        'DWELL_HI': _float(cfg.dwell_hi),
        'SPLIT': config_utils.format_float_list(cfg.split),
        'LAMBDA0': _float(cfg.lambda0),
        'LAMBDA_UP': _float(cfg.lambda_up),
        'LAMBDA_DOWN': _float(cfg.lambda_down),
        'MAX_EPOCHS': str(cfg.max_epochs),
        'PATIENCE': str(cfg.patience),
        'G_EPSILON': _float(cfg.g_epsilon),
        'SEED': str(cfg.seed),
        'TARGET_MODE': cfg.target_mode,
        'REFERENCE_POLE': _float(cfg.reference_pole),
        'DIVERGENCE_GUARD': _float(cfg.divergence_guard),
    }
    config['LOGGING'] = {'SLACK_URL': scenario.slack_url}
    return config


def save_scenario(scenario, path):
    config_utils.write_config(scenario_to_config(scenario), path)
    logging.info('Wrote scenario snapshot %s to %s', scenario.name, path)


def apply_overrides(scenario, config_path, sections):
    """Re-read |scenario| with |sections| replaced by those of another .cfg file.

    Used for --woa-config / --narma-config.
    """
    overrides = config_utils.get_config(config_path)
    config = scenario_to_config(scenario)
    for section in sections:
        if overrides.has_section(section):
            for key, value in overrides[section].items():
                config[section][key] = value
    updated = scenario_from_config(config)
    return updated._replace(controller=updated.controller._replace(
        tuned_gains=scenario.controller.tuned_gains, narma_net=scenario.controller.narma_net))
