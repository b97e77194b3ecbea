"""Performance indices over simulated frequency-deviation traces."""
import collections
import logging

import numpy as np

TRACE_COLUMNS = ('t', 'delta_f', 'dp_mtg', 'dp_deg', 'dp_fc', 'dp_bess', 'dp_fess', 'dp_pv',
                 'dp_stpg', 'load', 'u')
FITNESS_INDICES = ('itae', 'ise', 'iae', 'itse')
BAND_MODES = ('absolute', 'percent')
DEFAULT_BAND = 0.0005
DEFAULT_BAND_PERCENT = 5.0
# Final value is the mean over this trailing fraction of the window.
FINAL_VALUE_FRACTION = 0.05

# Uniformly sampled columns, one numpy array per TRACE_COLUMNS entry.
Trace = collections.namedtuple('Trace', ('h',) + TRACE_COLUMNS)

RunMetrics = collections.namedtuple(
    'RunMetrics',
    ['peak_deviation',
     'peak_time',
     'overshoot_above',
     'overshoot_below',
     'final_value',
     'settling_time',
     'settled',
     'itae',
     'ise',
     'iae',
     'itse',
     ])

IntegralIndices = collections.namedtuple('IntegralIndices', FITNESS_INDICES)


class Error(Exception):
    """Generic error type for this module."""


class MetricsWindowError(Error):
    """Window outside the trace or non-positive band."""


def make_trace(h, columns):
    """Build a Trace from a dict of column name -> sequence."""
    arrays = {name: np.asarray(columns[name], dtype=float) for name in TRACE_COLUMNS}
    lengths = {len(array) for array in arrays.values()}
    if len(lengths) != 1:
        raise MetricsWindowError('Trace columns differ in length: %s' % sorted(lengths))
    return Trace(h=h, **arrays)


def trace_duration(trace):
    return trace.t[-1] - trace.t[0]


def _window_slice(trace, window):
    num_samples = len(trace.t)
    if window is None:
        return slice(0, num_samples)
    t_start, t_end = window
    first = int(round((t_start - trace.t[0]) / trace.h))
    last = int(round((t_end - trace.t[0]) / trace.h))
    if first < 0 or last >= num_samples or first > last:
        raise MetricsWindowError('Window %r outside trace [%r, %r]' % (
            window, trace.t[0], trace.t[-1]))
    return slice(first, last + 1)


def integral_indices(trace, t_disturbance=None, window=None):
    """Rectangle-rule ITAE, ISE, IAE, ITSE of delta_f over the window."""
    selected = _window_slice(trace, window)
    t = trace.t[selected]
    delta_f = trace.delta_f[selected]
    if t_disturbance is None:
        t_disturbance = t[0]
    elapsed = np.clip(t - t_disturbance, 0.0, None)
    magnitude = np.abs(delta_f)
    squared = delta_f * delta_f
    h = trace.h
    return IntegralIndices(itae=float(np.sum(elapsed * magnitude) * h),
                           ise=float(np.sum(squared) * h),
                           iae=float(np.sum(magnitude) * h),
                           itse=float(np.sum(elapsed * squared) * h))


def fitness_index(trace, name, t_disturbance=None, window=None):
    if name not in FITNESS_INDICES:
        raise ValueError('Unknown fitness index %r, expected one of %s' % (name, FITNESS_INDICES))
    return getattr(integral_indices(trace, t_disturbance, window), name)


def compute_metrics(trace, band=DEFAULT_BAND, window=None, t_disturbance=None,
                    band_mode='absolute', band_percent=DEFAULT_BAND_PERCENT):
    """Compute RunMetrics of the trace's delta_f column.

    Args:
        trace: Trace.
        band: absolute settling band (Hz), used in 'absolute' mode.
        window: (t_start, t_end) or None for the whole trace.
        t_disturbance: time the disturbance was applied, defaults to window start.
        band_mode: 'absolute' or 'percent' (band is band_percent % of the peak excursion
            from the final value).
        band_percent: percentage for 'percent' mode.
    Returns:
        RunMetrics. peak_time and settling_time are measured from t_disturbance; a trace
        still outside the band at its last sample has settled=False, settling_time=inf.
    """
    if band_mode not in BAND_MODES:
        raise MetricsWindowError('Unknown band mode %r' % band_mode)
    selected = _window_slice(trace, window)
    t = trace.t[selected]
    delta_f = trace.delta_f[selected]
    if t_disturbance is None:
        t_disturbance = t[0]

    tail = max(1, int(round(FINAL_VALUE_FRACTION * len(delta_f))))
    final_value = float(np.mean(delta_f[-tail:]))
    excursion = delta_f - final_value
    if band_mode == 'percent':
        band = band_percent / 100.0 * float(np.max(np.abs(excursion)))
        if band == 0:
            band = np.finfo(float).tiny
    if not band > 0:
        raise MetricsWindowError('Settling band must be > 0, got %r' % band)

    peak_index = int(np.argmax(np.abs(delta_f)))
    outside = np.flatnonzero(np.abs(excursion) > band)
    if outside.size == 0:
        settling_time = 0.0
        settled = True
    elif outside[-1] == len(delta_f) - 1:
        settling_time = float('inf')
        settled = False
        logging.debug('Trace did not settle within band %r', band)
    else:
        settling_time = max(0.0, float(t[outside[-1]] - t_disturbance))
        settled = True

    indices = integral_indices(trace, t_disturbance, window)
    return RunMetrics(peak_deviation=float(abs(delta_f[peak_index])),
                      peak_time=float(t[peak_index] - t_disturbance),
                      overshoot_above=float(max(0.0, np.max(excursion))),
                      overshoot_below=float(max(0.0, -np.min(excursion))),
                      final_value=final_value,
                      settling_time=settling_time,
                      settled=settled,
                      itae=indices.itae,
                      ise=indices.ise,
                      iae=indices.iae,
                      itse=indices.itse)
