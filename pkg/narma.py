"""NARMA-L2 identification of the microgrid and the feedback-linearizing controller.

Two single-hidden-layer perceptrons f and g over the regression vector
x(k) = [y(k) .. y(k-n_y+1), u(k-1) .. u(k-n_u+1)] model the one-step-ahead
frequency deviation as

    level mode:      y(k+1) = mean + scale * (f(x) + g(x) * u(k))
    increment mode:  y(k+1) = y(k) + mean + scale * (f(x) + g(x) * u(k))

The nets see y(k) and its backward differences instead of the raw output lags,
which at a 10 ms step are nearly collinear, followed by the raw past controls.
These features are normalised with training-split statistics; u stays in pu so
the model remains exactly affine in u. Both nets are trained jointly by
Levenberg-Marquardt on the one-step residual.
"""
import collections
import configparser
import logging
import math

import numpy as np
import tenacity

import config_utils
import controllers
import plant

LOGGER = logging.getLogger(__name__)

WEIGHTS_FILE_VERSION = 2
TARGET_MODES = ('increment', 'level')
SPLIT_SEGMENTS = ('train', 'val', 'test')
# Damping above this ends training.
LAMBDA_LIMIT = 1e10
LAMBDA_FLOOR = 1e-15
LOG_EVERY_N_EPOCHS = 10
INIT_WEIGHT_SCALE = 0.5

NarmaConfig = collections.namedtuple(
    'NarmaConfig',
    ['n_delays_y',
     'n_delays_u',
     'hidden',
     'samples',
     'h',
     'amp_lo',
     'amp_hi',
     'dwell_lo',
     'dwell_hi',
     'split',
     'lambda0',
     'lambda_up',
     'lambda_down',
     'max_epochs',
     'patience',
     'g_epsilon',
     'seed',
     'target_mode',
     'reference_pole',
     'divergence_guard',
     ])

DEFAULT_NARMA_CONFIG = NarmaConfig(
    n_delays_y=4,
    n_delays_u=3,
    hidden=10,
    samples=10000,
    h=plant.DEFAULT_STEP_H,
    amp_lo=-0.5,
    amp_hi=0.5,
    dwell_lo=0.5,
    dwell_hi=2.0,
    split=(0.70, 0.15, 0.15),
    lambda0=1e-3,
    lambda_up=10.0,
    lambda_down=0.1,
    max_epochs=300,
    patience=6,
    g_epsilon=1e-3,
    seed=0,
    target_mode='increment',
    reference_pole=0.0,
    divergence_guard=100.0)

# Open-loop excitation record; y[k] is measured before u[k] is applied.
IdDataset = collections.namedtuple('IdDataset', ['u', 'y', 'h', 'split_indices'])

Regression = collections.namedtuple('Regression', ['k', 'x', 'u', 'y_now', 'y_next'])

Perceptron = collections.namedtuple('Perceptron', ['w1', 'b1', 'w2', 'b2'])

NarmaL2Net = collections.namedtuple(
    'NarmaL2Net',
    ['n_delays_y',
     'n_delays_u',
     'hidden',
     'target_mode',
     'h',
     'x_mean',
     'x_scale',
     't_mean',
     't_scale',
     'f_net',
     'g_net',
     ])

# stalled marks the final row when the damping limit, not early stopping, ended training.
HistoryRow = collections.namedtuple('HistoryRow',
                                    ['epoch', 'train_mse', 'val_mse', 'lam', 'stalled'])

PhaseSeries = collections.namedtuple('PhaseSeries', ['k', 'y', 'y_hat', 'error'])

IdentificationReport = collections.namedtuple('IdentificationReport',
                                              ['rmse', 'output_std', 'series'])


class Error(Exception):
    """Generic error type for this module."""


class ExcitationAmplitudeError(Error):
    """Open-loop plant diverged under the excitation signal."""


class TrainingStalledError(Error):
    """LM damping exceeded its limit before any step was accepted."""


class WeightsFileError(Error):
    """Weights file missing, malformed or of an unsupported version."""


def make_narma_config(**overrides):
    return DEFAULT_NARMA_CONFIG._replace(**overrides)


def validate_narma_config(cfg):
    """Return list of str describing every invariant violated by |cfg|."""
    violations = []
    for name, minimum in (('n_delays_y', 1), ('n_delays_u', 1), ('hidden', 1),
                          ('samples', 100), ('max_epochs', 1), ('patience', 1)):
        value = getattr(cfg, name)
        if not (isinstance(value, int) and value >= minimum):
            violations.append('%s must be an integer >= %d, got %r' % (name, minimum, value))
    if not cfg.h > 0:
        violations.append('h must be > 0, got %r' % cfg.h)
    if not cfg.amp_lo <= cfg.amp_hi:
        violations.append('amp_lo must be <= amp_hi, got %r > %r' % (cfg.amp_lo, cfg.amp_hi))
    if not 0 < cfg.dwell_lo <= cfg.dwell_hi:
        violations.append('dwell times must satisfy 0 < dwell_lo <= dwell_hi, got %r, %r' % (
            cfg.dwell_lo, cfg.dwell_hi))
    if len(cfg.split) != 3 or any(not fraction > 0 for fraction in cfg.split):
        violations.append('split must be three fractions > 0, got %r' % (cfg.split,))
    elif not math.isclose(sum(cfg.split), 1.0, rel_tol=0.0, abs_tol=1e-9):
        violations.append('split fractions must sum to 1, got %r' % sum(cfg.split))
    if not cfg.lambda0 > 0:
        violations.append('lambda0 must be > 0, got %r' % cfg.lambda0)
    if not cfg.lambda_up > 1:
        violations.append('lambda_up must be > 1, got %r' % cfg.lambda_up)
    if not 0 < cfg.lambda_down < 1:
        violations.append('lambda_down must be in (0, 1), got %r' % cfg.lambda_down)
    if not cfg.g_epsilon > 0:
        violations.append('g_epsilon must be > 0, got %r' % cfg.g_epsilon)
    if cfg.target_mode not in TARGET_MODES:
        violations.append('target_mode must be one of %s, got %r' % (TARGET_MODES,
                                                                     cfg.target_mode))
    if not 0 <= cfg.reference_pole < 1:
        violations.append('reference_pole must be in [0, 1), got %r' % cfg.reference_pole)
    if not cfg.divergence_guard > 0:
        violations.append('divergence_guard must be > 0, got %r' % cfg.divergence_guard)
    return violations


def _check_config(cfg):
    violations = validate_narma_config(cfg)
    if violations:
        raise ValueError('Invalid NARMA config: %s' % '; '.join(violations))


def regression_width(n_delays_y, n_delays_u):
    return n_delays_y + n_delays_u - 1


def difference_matrix(n):
    """Maps newest-first samples v0..v(n-1) to v0 and its backward differences.

    Row j holds the coefficients of the j-th difference, e.g. v0 - 2*v1 + v2 for j=2.
    """
    matrix = np.zeros((n, n))
    for order in range(n):
        for lag in range(order + 1):
            matrix[order, lag] = (-1) ** lag * math.comb(order, lag)
    return matrix


def feature_matrix(n_delays_y, n_delays_u):
    """Linear map from a regression vector to the network features.

    Output lags become y(k) and its differences; past controls pass through.
    """
    matrix = np.eye(regression_width(n_delays_y, n_delays_u))
    matrix[:n_delays_y, :n_delays_y] = difference_matrix(n_delays_y)
    return matrix


def network_features(n_delays_y, n_delays_u, x):
    return np.atleast_2d(np.asarray(x, dtype=float)) @ feature_matrix(n_delays_y,
                                                                       n_delays_u).T


def split_indices(samples, split):
    """(end of train, end of validation) sample indices for chronological split."""
    train_end = int(round(samples * split[0]))
    val_end = train_end + int(round(samples * split[1]))
    return train_end, val_end


def generate_excitation(model, cfg):
    """Drive the open-loop plant from equilibrium with a random staircase u.

    Amplitudes are uniform in [amp_lo, amp_hi], dwell times uniform in
    [dwell_lo, dwell_hi]; the load is held at zero.

    Raises:
        ExcitationAmplitudeError if |delta_f| exceeds cfg.divergence_guard.
    """
    _check_config(cfg)
    rng = np.random.default_rng(cfg.seed)
    u = np.empty(cfg.samples)
    start = 0
    while start < cfg.samples:
        level = rng.uniform(cfg.amp_lo, cfg.amp_hi)
        dwell = max(1, int(round(rng.uniform(cfg.dwell_lo, cfg.dwell_hi) / cfg.h)))
        u[start:start + dwell] = level
        start += dwell
    # Record what the actuator actually applies.
    u = np.clip(u, *model.params.u_limits)

    y = np.empty(cfg.samples)
    state = model.initial_state()
    for k in range(cfg.samples):
        y[k] = state.delta_f
        if abs(state.delta_f) > cfg.divergence_guard:
            raise ExcitationAmplitudeError(
                'Open-loop delta_f reached %r Hz at sample %d; reduce the excitation '
                'amplitude (amp_lo=%r, amp_hi=%r)' % (state.delta_f, k, cfg.amp_lo, cfg.amp_hi))
        try:
            state = plant.plant_step(model, state, u[k], 0.0, cfg.h)
        except plant.SimulationAbortError as err:
            raise ExcitationAmplitudeError('Open-loop plant failed at sample %d (%s); reduce '
                                           'the excitation amplitude' % (k, err)) from err
        if (k + 1) % 2000 == 0:
            logging.debug('Excitation: %d/%d samples', k + 1, cfg.samples)
    logging.info('Generated %d excitation samples, |y| max %r Hz', cfg.samples,
                 float(np.max(np.abs(y))))
    return IdDataset(u=u, y=y, h=cfg.h, split_indices=split_indices(cfg.samples, cfg.split))


def _segment_bounds(dataset, segment):
    train_end, val_end = dataset.split_indices
    bounds = {'train': (0, train_end), 'val': (train_end, val_end),
              'test': (val_end, len(dataset.y))}
    if segment not in bounds:
        raise ValueError('Unknown segment %r, expected one of %s' % (segment, SPLIT_SEGMENTS))
    return bounds[segment]


def build_regression(dataset, cfg, segment):
    """Regression rows whose whole history and next output lie inside |segment|."""
    start, end = _segment_bounds(dataset, segment)
    first = start + max(cfg.n_delays_y - 1, cfg.n_delays_u - 1)
    k = np.arange(first, end - 1)
    columns = [dataset.y[k - lag] for lag in range(cfg.n_delays_y)]
    columns += [dataset.u[k - lag] for lag in range(1, cfg.n_delays_u)]
    x = np.column_stack(columns) if k.size else np.empty((0, len(columns)))
    return Regression(k=k, x=x, u=dataset.u[k], y_now=dataset.y[k], y_next=dataset.y[k + 1])


def _target_offset(target_mode, y_now):
    return y_now if target_mode == 'increment' else np.zeros_like(y_now)


def _scale_of(values):
    scale = np.std(values, axis=0)
    return np.where(scale > 0, scale, 1.0)


def init_net(dataset, cfg):
    """Untrained net with normalisation statistics from the training split."""
    _check_config(cfg)
    train = build_regression(dataset, cfg, 'train')
    if not train.k.size:
        raise ValueError('Training split holds no complete regression rows')
    target = train.y_next - _target_offset(cfg.target_mode, train.y_now)
    features = network_features(cfg.n_delays_y, cfg.n_delays_u, train.x)
    width = regression_width(cfg.n_delays_y, cfg.n_delays_u)
    rng = np.random.default_rng([cfg.seed, 1])

    def perceptron():
        return Perceptron(
            w1=rng.uniform(-INIT_WEIGHT_SCALE, INIT_WEIGHT_SCALE, (cfg.hidden, width)),
            b1=rng.uniform(-INIT_WEIGHT_SCALE, INIT_WEIGHT_SCALE, cfg.hidden),
            w2=rng.uniform(-INIT_WEIGHT_SCALE, INIT_WEIGHT_SCALE, cfg.hidden) / cfg.hidden,
            b2=0.0)

    return NarmaL2Net(n_delays_y=cfg.n_delays_y, n_delays_u=cfg.n_delays_u, hidden=cfg.hidden,
                      target_mode=cfg.target_mode, h=dataset.h,
                      x_mean=np.mean(features, axis=0), x_scale=_scale_of(features),
                      t_mean=float(np.mean(target)), t_scale=float(_scale_of(target)),
                      f_net=perceptron(), g_net=perceptron())


def pack_weights(net):
    """Flat parameter vector: f then g, each w1 (row-major), b1, w2, b2."""
    parts = []
    for layer in (net.f_net, net.g_net):
        parts += [np.ravel(layer.w1), layer.b1, layer.w2, [layer.b2]]
    return np.concatenate(parts).astype(float)


def unpack_weights(net, theta):
    hidden = net.hidden
    width = regression_width(net.n_delays_y, net.n_delays_u)
    size = hidden * (width + 2) + 1
    if len(theta) != 2 * size:
        raise ValueError('Expected %d weights, got %d' % (2 * size, len(theta)))

    def layer(block):
        w1_end = hidden * width
        return Perceptron(w1=block[:w1_end].reshape(hidden, width),
                          b1=block[w1_end:w1_end + hidden],
                          w2=block[w1_end + hidden:w1_end + 2 * hidden],
                          b2=float(block[-1]))

    theta = np.array(theta, dtype=float)
    return net._replace(f_net=layer(theta[:size]), g_net=layer(theta[size:]))


def _normalize(net, x):
    return (network_features(net.n_delays_y, net.n_delays_u, x) - net.x_mean) / net.x_scale


def _forward(layer, x_norm):
    hidden = np.tanh(x_norm @ layer.w1.T + layer.b1)
    return hidden @ layer.w2 + layer.b2, hidden


def model_terms(net, x):
    """Denormalised (f, g) so that the predicted y(k+1) is f + g * u.

    Accepts one regression vector or a matrix of rows; returns floats or arrays.
    """
    x = np.asarray(x, dtype=float)
    x_norm = _normalize(net, x)
    f_out, _ = _forward(net.f_net, x_norm)
    g_out, _ = _forward(net.g_net, x_norm)
    y_now = np.atleast_2d(x)[:, 0]
    f = _target_offset(net.target_mode, y_now) + net.t_mean + net.t_scale * f_out
    g = net.t_scale * g_out
    if x.ndim == 1:
        return float(f[0]), float(g[0])
    return f, g


def narma_predict(net, x, u):
    """One-step-ahead prediction f(x) + g(x) * u in Hz."""
    f, g = model_terms(net, x)
    return f + g * u


def regression_residuals(net, regression):
    """Normalised one-step residuals (prediction - target) over the rows."""
    x_norm = _normalize(net, regression.x)
    f_out, _ = _forward(net.f_net, x_norm)
    g_out, _ = _forward(net.g_net, x_norm)
    target = (regression.y_next - _target_offset(net.target_mode, regression.y_now) -
              net.t_mean) / net.t_scale
    return f_out + g_out * regression.u - target


def _layer_jacobian(layer, x_norm, multiplier):
    _, hidden = _forward(layer, x_norm)
    multiplier = multiplier[:, np.newaxis]
    d_b1 = layer.w2 * (1.0 - hidden * hidden) * multiplier
    d_w1 = (d_b1[:, :, np.newaxis] * x_norm[:, np.newaxis, :]).reshape(len(x_norm), -1)
    return np.hstack([d_w1, d_b1, hidden * multiplier, multiplier])


def residual_jacobian(net, regression):
    """Analytic Jacobian of regression_residuals w.r.t. pack_weights(net).

    Returns:
        (residuals, jacobian) with jacobian of shape (rows, weights).
    """
    x_norm = _normalize(net, regression.x)
    ones = np.ones(len(x_norm))
    jacobian = np.hstack([_layer_jacobian(net.f_net, x_norm, ones),
                          _layer_jacobian(net.g_net, x_norm, np.asarray(regression.u, float))])
    return regression_residuals(net, regression), jacobian


def _mse(net, regression):
    residuals = regression_residuals(net, regression)
    return float(np.mean(residuals * residuals))


def _to_hz2(net, mse):
    return mse * net.t_scale * net.t_scale


class _Damping:
    """Mutable LM damping raised after every singular solve."""

    def __init__(self, value, factor):
        self.value = value
        self.factor = factor

    def raise_after_failure(self, unused_retry_state):
        self.value *= self.factor

    def exceeded(self, unused_retry_state=None):
        return self.value > LAMBDA_LIMIT


def _damped_step(normal_matrix, gradient, damping):
    """Solve (J'J + lambda I) step = -J'r, raising lambda on a singular system."""
    retrying = tenacity.Retrying(
        retry=tenacity.retry_if_exception_type(np.linalg.LinAlgError),
        stop=damping.exceeded,
        after=damping.raise_after_failure,
        before_sleep=tenacity.before_sleep_log(LOGGER, logging.DEBUG),
        reraise=True)
    identity = np.eye(len(gradient))
    return retrying(lambda: np.linalg.solve(normal_matrix + damping.value * identity,
                                            -gradient))


def train_lm(net, dataset, cfg):
    """Train f and g jointly by Levenberg-Marquardt with early stopping.

    Args:
        net: initial NarmaL2Net (see init_net).
        dataset: IdDataset.
        cfg: NarmaConfig.
    Returns:
        (best-validation NarmaL2Net, list of HistoryRow; row 0 is the initial net).
        MSEs are in Hz^2. If the damping exceeds its limit after some accepted
        steps, the last row repeats the previous errors with stalled=True.
    Raises:
        TrainingStalledError if the damping exceeds its limit before any step is
        accepted.
    """
    _check_config(cfg)
    train = build_regression(dataset, cfg, 'train')
    val = build_regression(dataset, cfg, 'val')
    theta = pack_weights(net)
    train_mse = _mse(net, train)
    best_val = _mse(net, val)
    best_net = net
    damping = _Damping(cfg.lambda0, cfg.lambda_up)
    history = [HistoryRow(epoch=0, train_mse=_to_hz2(net, train_mse),
                          val_mse=_to_hz2(net, best_val), lam=damping.value, stalled=False)]
    stale_epochs = 0
    accepted_any = False

    for epoch in range(1, cfg.max_epochs + 1):
        residuals, jacobian = residual_jacobian(unpack_weights(net, theta), train)
        normal_matrix = jacobian.T @ jacobian
        gradient = jacobian.T @ residuals
        accepted = False
        while not damping.exceeded():
            try:
                step = _damped_step(normal_matrix, gradient, damping)
            except np.linalg.LinAlgError:
                break
            candidate = theta + step
            candidate_mse = _mse(unpack_weights(net, candidate), train)
            if math.isfinite(candidate_mse) and candidate_mse < train_mse:
                theta, train_mse = candidate, candidate_mse
                damping.value = max(damping.value * cfg.lambda_down, LAMBDA_FLOOR)
                accepted = True
                break
            damping.value *= cfg.lambda_up
        if not accepted:
            if not accepted_any:
                raise TrainingStalledError('LM damping exceeded %g without an accepted step' %
                                           LAMBDA_LIMIT)
            logging.warning('LM stalled at epoch %d: damping exceeded %g, keeping the best '
                            'validation net so far', epoch, LAMBDA_LIMIT)
            history.append(history[-1]._replace(epoch=epoch, lam=damping.value, stalled=True))
            break
        accepted_any = True

        trained = unpack_weights(net, theta)
        val_mse = _mse(trained, val)
        history.append(HistoryRow(epoch=epoch, train_mse=_to_hz2(net, train_mse),
                                  val_mse=_to_hz2(net, val_mse), lam=damping.value,
                                  stalled=False))
        logging.debug('LM epoch %d: train %r val %r lambda %r', epoch, train_mse, val_mse,
                      damping.value)
        if epoch % LOG_EVERY_N_EPOCHS == 0:
            logging.info('LM epoch %d/%d: train MSE %r, val MSE %r', epoch, cfg.max_epochs,
                         history[-1].train_mse, history[-1].val_mse)
        if val_mse < best_val:
            best_val, best_net = val_mse, trained
            stale_epochs = 0
        else:
            stale_epochs += 1
            if stale_epochs >= cfg.patience:
                logging.info('LM early stop at epoch %d: no validation improvement for %d '
                             'epochs', epoch, cfg.patience)
                break
    return best_net, history


def identification_report(net, dataset, cfg):
    """One-step prediction series and RMSE (Hz) for each split segment."""
    series = {}
    rmse = {}
    for segment in SPLIT_SEGMENTS:
        regression = build_regression(dataset, cfg, segment)
        y_hat = narma_predict(net, regression.x, regression.u) if regression.k.size else \
            np.empty(0)
        error = regression.y_next - y_hat
        series[segment] = PhaseSeries(k=regression.k + 1, y=regression.y_next, y_hat=y_hat,
                                      error=error)
        rmse[segment] = float(np.sqrt(np.mean(error * error))) if error.size else math.nan
    output_std = float(np.std(dataset.y))
    logging.info('Identification RMSE train %r val %r test %r (output std %r)', rmse['train'],
                 rmse['val'], rmse['test'], output_std)
    return IdentificationReport(rmse=rmse, output_std=output_std, series=series)


class TappedDelayLine:
    """Recent measurements y(k), y(k-1), .. and controls u(k-1), u(k-2), .."""

    def __init__(self, n_delays_y, n_delays_u):
        self.n_delays_y = n_delays_y
        self.n_delays_u = n_delays_u
        self.reset()

    def reset(self):
        self.y = collections.deque([0.0] * self.n_delays_y, maxlen=self.n_delays_y)
        self.u = collections.deque([0.0] * (self.n_delays_u - 1), maxlen=self.n_delays_u - 1)

    def push_measurement(self, y):
        self.y.appendleft(float(y))

    def push_control(self, u):
        if self.u.maxlen:
            self.u.appendleft(float(u))

    def regression_vector(self):
        return np.array(list(self.y) + list(self.u))


def g_safe(g, g_epsilon):
    """g with magnitude at least g_epsilon, keeping its sign (0 counts as positive)."""
    if abs(g) >= g_epsilon:
        return g
    return -g_epsilon if g < 0 else g_epsilon


def control_law(f, g, target, g_epsilon):
    """Unclamped inversion u = (target - f) / g_safe(g)."""
    return (target - f) / g_safe(g, g_epsilon)


def narma_control(net, tdl, y_ref, cfg, u_limits=plant.DEFAULT_U_LIMITS):
    """Control that makes the model's next output hit the one-step target.

    The target is a*y(k) + (1-a)*y_ref with a = cfg.reference_pole. The latest
    measurement must already be in |tdl|; the issued (clamped) u is pushed to it.
    """
    x = tdl.regression_vector()
    f, g = model_terms(net, x)
    target = cfg.reference_pole * x[0] + (1.0 - cfg.reference_pole) * y_ref
    u_min, u_max = u_limits
    u = min(max(control_law(f, g, target, cfg.g_epsilon), u_min), u_max)
    tdl.push_control(u)
    return u


class NarmaL2Controller(controllers.Controller):

    kind = 'narma'

    def __init__(self, net, u_limits, g_epsilon=DEFAULT_NARMA_CONFIG.g_epsilon,
                 reference_pole=DEFAULT_NARMA_CONFIG.reference_pole, y_ref=0.0):
        self.net = net
        self.u_limits = u_limits
        self.y_ref = y_ref
        self.cfg = make_narma_config(n_delays_y=net.n_delays_y, n_delays_u=net.n_delays_u,
                                     hidden=net.hidden, h=net.h, target_mode=net.target_mode,
                                     g_epsilon=g_epsilon, reference_pole=reference_pole)
        self.tdl = TappedDelayLine(net.n_delays_y, net.n_delays_u)

    def __repr__(self):
        return 'NarmaL2Controller(hidden=%r, reference_pole=%r)' % (self.net.hidden,
                                                                     self.cfg.reference_pole)

    def reset(self):
        self.tdl.reset()
        return self.tdl

    def control(self, delta_f, h):
        if not math.isclose(h, self.net.h, rel_tol=1e-9):
            raise ValueError('NARMA-L2 net trained at h=%r used at h=%r' % (self.net.h, h))
        self.tdl.push_measurement(delta_f)
        return narma_control(self.net, self.tdl, self.y_ref, self.cfg, self.u_limits)


def _layer_to_section(layer):
    return {
        'W1': config_utils.format_float_list(np.ravel(layer.w1)),
        'B1': config_utils.format_float_list(layer.b1),
        'W2': config_utils.format_float_list(layer.w2),
        'B2': config_utils.format_float(layer.b2),
    }


def save_weights(net, path):
    """Write |net| as a versioned .cfg document that load_weights reads back exactly."""
    config = configparser.ConfigParser()
    config['LAYOUT'] = {
        'VERSION': str(WEIGHTS_FILE_VERSION),
        'N_DELAYS_Y': str(net.n_delays_y),
        'N_DELAYS_U': str(net.n_delays_u),
        'HIDDEN': str(net.hidden),
        'TARGET_MODE': net.target_mode,
        'H': config_utils.format_float(net.h),
        'X_MEAN': config_utils.format_float_list(net.x_mean),
        'X_SCALE': config_utils.format_float_list(net.x_scale),
        'T_MEAN': config_utils.format_float(net.t_mean),
        'T_SCALE': config_utils.format_float(net.t_scale),
    }
    config['F_NET'] = _layer_to_section(net.f_net)
    config['G_NET'] = _layer_to_section(net.g_net)
    config_utils.write_config(config, path)
    logging.info('Wrote NARMA-L2 weights to %s', path)


def _layer_from_section(section, hidden, width):
    layer = Perceptron(w1=np.array(config_utils.parse_float_list(section['W1'])),
                       b1=np.array(config_utils.parse_float_list(section['B1'])),
                       w2=np.array(config_utils.parse_float_list(section['W2'])),
                       b2=float(section['B2']))
    if layer.w1.size != hidden * width or layer.b1.size != hidden or layer.w2.size != hidden:
        raise WeightsFileError('Weight array sizes do not match hidden=%d, width=%d' % (
            hidden, width))
    return layer._replace(w1=layer.w1.reshape(hidden, width))


def load_weights(path):
    """Read a weights file written by save_weights.

    Raises:
        WeightsFileError if the file is missing, malformed or of another version.
    """
    try:
        config = config_utils.get_config(path)
    except (FileNotFoundError, configparser.Error) as err:
        raise WeightsFileError('Unable to read weights file %s: %s' % (path, err)) from err
    try:
        layout = config['LAYOUT']
        version = layout.getint('VERSION')
        if version != WEIGHTS_FILE_VERSION:
            raise WeightsFileError('Unsupported weights file version %r in %s' % (version, path))
        n_delays_y = layout.getint('N_DELAYS_Y')
        n_delays_u = layout.getint('N_DELAYS_U')
        hidden = layout.getint('HIDDEN')
        width = regression_width(n_delays_y, n_delays_u)
        net = NarmaL2Net(
            n_delays_y=n_delays_y, n_delays_u=n_delays_u, hidden=hidden,
            target_mode=layout['TARGET_MODE'], h=layout.getfloat('H'),
            x_mean=np.array(config_utils.parse_float_list(layout['X_MEAN'])),
            x_scale=np.array(config_utils.parse_float_list(layout['X_SCALE'])),
            t_mean=layout.getfloat('T_MEAN'), t_scale=layout.getfloat('T_SCALE'),
            f_net=_layer_from_section(config['F_NET'], hidden, width),
            g_net=_layer_from_section(config['G_NET'], hidden, width))
    except (KeyError, ValueError) as err:
        raise WeightsFileError('Malformed weights file %s: %r' % (path, err)) from err
    if net.target_mode not in TARGET_MODES:
        raise WeightsFileError('Unknown target mode %r in %s' % (net.target_mode, path))
    if net.x_mean.size != width or net.x_scale.size != width:
        raise WeightsFileError('Normalisation stats in %s do not match width %d' % (path, width))
    if not (np.all(net.x_scale > 0) and net.t_scale > 0):
        raise WeightsFileError('Normalisation scales in %s must be > 0' % path)
    logging.info('Loaded NARMA-L2 weights from %s', path)
    return net
