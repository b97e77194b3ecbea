"""CSV and .cfg artifacts written and read by the command-line workflows."""
import collections
import configparser
import csv
import hashlib
import logging
import math
import os.path

import config_utils
import controllers
import metrics
import optimizer

FLOAT_FORMAT = '%.17g'
GAINS_FILE_VERSION = 1
RUN_RECORD_VERSION = 1
METRIC_FIELDS = metrics.RunMetrics._fields

GainsRecord = collections.namedtuple(
    'GainsRecord',
    ['kind',
     'variant',
     'gains',
     'fitness_index',
     'best_fitness',
     'seed',
     'restarts',
     'scenario_name',
     ])

RunRecord = collections.namedtuple(
    'RunRecord',
    ['command',
     'tool_version',
     'scenario_name',
     'seed',
     # label -> RunMetrics
     'metrics',
     # artifact name -> path
     'artifacts',
     'trace_sha256',
     ])


class Error(Exception):
    """Generic error type for this module."""


class ArtifactFileError(Error):
    """Artifact file missing or malformed."""


def _format(value):
    return FLOAT_FORMAT % value


def write_trace_csv(trace, path):
    with open(path, 'w', newline='') as csv_file:
        writer = csv.writer(csv_file)
        writer.writerow(metrics.TRACE_COLUMNS)
        columns = [getattr(trace, name) for name in metrics.TRACE_COLUMNS]
        for row in zip(*columns):
            writer.writerow([_format(value) for value in row])
    logging.info('Wrote %d trace rows to %s', len(trace.t), path)


def read_trace_csv(path, h=None):
    """Read a trace CSV; h defaults to the spacing of the first two samples."""
    columns = {name: [] for name in metrics.TRACE_COLUMNS}
    try:
        with open(path, newline='') as csv_file:
            for row in csv.DictReader(csv_file):
                for name in metrics.TRACE_COLUMNS:
                    columns[name].append(float(row[name]))
    except (OSError, KeyError, ValueError) as err:
        raise ArtifactFileError('Unable to read trace %s: %r' % (path, err)) from err
    if h is None:
        times = columns['t']
        h = times[1] - times[0] if len(times) > 1 else 0.0
    return metrics.make_trace(h, columns)


def file_sha256(path):
    digest = hashlib.sha256()
    with open(path, 'rb') as data_file:
        for chunk in iter(lambda: data_file.read(65536), b''):
            digest.update(chunk)
    return digest.hexdigest()


def _metric_text(value):
    if isinstance(value, bool):
        return str(value)
    if math.isinf(value):
        return 'inf'
    return _format(value)


def write_metrics_csv(labelled_metrics, path):
    """One row per (label, RunMetrics) pair."""
    with open(path, 'w', newline='') as csv_file:
        writer = csv.writer(csv_file)
        writer.writerow(('controller',) + METRIC_FIELDS)
        for label, run_metrics in labelled_metrics:
            writer.writerow([label] + [_metric_text(value) for value in run_metrics])


def read_metrics_csv(path):
    rows = []
    with open(path, newline='') as csv_file:
        for row in csv.DictReader(csv_file):
            values = {field: (row[field] == 'True') if field == 'settled' else float(row[field])
                      for field in METRIC_FIELDS}
            rows.append((row['controller'], metrics.RunMetrics(**values)))
    return rows


def format_metrics_report(labelled_metrics):
    """Aligned plain-text table of the metrics rows."""
    header = ('controller',) + METRIC_FIELDS
    rows = [header]
    for label, run_metrics in labelled_metrics:
        cells = [label]
        for value in run_metrics:
            cells.append(str(value) if isinstance(value, bool) else
                         ('inf' if math.isinf(value) else '%.6g' % value))
        rows.append(cells)
    widths = [max(len(row[column]) for row in rows) for column in range(len(header))]
    lines = ['  '.join(cell.ljust(width) for cell, width in zip(row, widths)).rstrip()
             for row in rows]
    return '\n'.join(lines) + '\n'


def write_metrics_report(labelled_metrics, path, extra_lines=()):
    with open(path, 'w') as report_file:
        report_file.write(format_metrics_report(labelled_metrics))
        for line in extra_lines:
            report_file.write(line + '\n')


def write_gains(path, tuning_result, fitness_index, scenario_name):
    config = configparser.ConfigParser()
    config['GAINS'] = {
        'VERSION': str(GAINS_FILE_VERSION),
        'KIND': optimizer.TUNED_CONTROLLER_KINDS[tuning_result.variant],
        'VARIANT': tuning_result.variant,
        'KP': config_utils.format_float(tuning_result.gains.kp),
        'KI': config_utils.format_float(tuning_result.gains.ki),
        'KD': config_utils.format_float(tuning_result.gains.kd),
        'FITNESS_INDEX': fitness_index,
        'BEST_FITNESS': config_utils.format_float(tuning_result.best_fitness),
        'SEED': str(tuning_result.seed),
        'RESTARTS': str(tuning_result.restarts),
        'SCENARIO': scenario_name,
    }
    config_utils.write_config(config, path)
    logging.info('Wrote %s gains %r to %s', tuning_result.variant, tuning_result.gains, path)


def read_gains(path):
    """Read a gains file written by write_gains.

    Raises:
        ArtifactFileError if the file is missing or malformed.
    """
    try:
        section = config_utils.get_config(path)['GAINS']
        if section.getint('VERSION') != GAINS_FILE_VERSION:
            raise ArtifactFileError('Unsupported gains file version in %s' % path)
        record = GainsRecord(
            kind=section['KIND'],
            variant=section['VARIANT'],
            gains=controllers.PidGains(kp=section.getfloat('KP'), ki=section.getfloat('KI'),
                                       kd=section.getfloat('KD')),
            fitness_index=section['FITNESS_INDEX'],
            best_fitness=section.getfloat('BEST_FITNESS'),
            seed=section.getint('SEED'),
            restarts=section.getint('RESTARTS', fallback=1),
            scenario_name=section.get('SCENARIO', fallback=''))
    except (FileNotFoundError, configparser.Error, KeyError, ValueError, TypeError) as err:
        raise ArtifactFileError('Unable to read gains file %s: %r' % (path, err)) from err
    violations = controllers.validate_gains(record.gains)
    if violations:
        raise ArtifactFileError('Invalid gains in %s: %s' % (path, '; '.join(violations)))
    return record


def write_convergence_csv(curve, path):
    with open(path, 'w', newline='') as csv_file:
        writer = csv.writer(csv_file)
        writer.writerow(('iteration', 'best_fitness'))
        for iteration, value in enumerate(curve):
            writer.writerow((iteration, _metric_text(value)))


def write_history_csv(history, path):
    with open(path, 'w', newline='') as csv_file:
        writer = csv.writer(csv_file)
        writer.writerow(('epoch', 'train_mse', 'val_mse', 'lambda', 'stalled'))
        for row in history:
            writer.writerow((row.epoch, _format(row.train_mse), _format(row.val_mse),
                             _format(row.lam), row.stalled))


def write_identification_csvs(report, out_dir):
    """identification_<segment>.csv per split plus identification_summary.csv.

    Returns:
        dict segment -> path, including 'summary'.
    """
    paths = {}
    for segment, series in report.series.items():
        path = os.path.join(out_dir, 'identification_%s.csv' % segment)
        with open(path, 'w', newline='') as csv_file:
            writer = csv.writer(csv_file)
            writer.writerow(('k', 'y', 'y_hat', 'error'))
            for row in zip(series.k, series.y, series.y_hat, series.error):
                writer.writerow([int(row[0])] + [_format(value) for value in row[1:]])
        paths[segment] = path
    path = os.path.join(out_dir, 'identification_summary.csv')
    with open(path, 'w', newline='') as csv_file:
        writer = csv.writer(csv_file)
        writer.writerow(('segment', 'rmse', 'output_std', 'rmse_to_std'))
        for segment, rmse in report.rmse.items():
            writer.writerow((segment, _format(rmse), _format(report.output_std),
                             _format(rmse / report.output_std) if report.output_std else 'nan'))
    paths['summary'] = path
    return paths


def write_compare_csv(labelled_traces, path):
    """Side-by-side t, load, then delta_f and u of every (label, Trace) pair."""
    first = labelled_traces[0][1]
    header = ['t', 'load']
    columns = [first.t, first.load]
    for label, trace in labelled_traces:
        if len(trace.t) != len(first.t):
            raise ArtifactFileError('Traces to compare differ in length')
        header += ['delta_f_%s' % label, 'u_%s' % label]
        columns += [trace.delta_f, trace.u]
    with open(path, 'w', newline='') as csv_file:
        writer = csv.writer(csv_file)
        writer.writerow(header)
        for row in zip(*columns):
            writer.writerow([_format(value) for value in row])


def write_bench_csv(function_name, stats, path):
    """Per-seed final fitness for each variant, then median and IQR rows."""
    with open(path, 'w', newline='') as csv_file:
        writer = csv.writer(csv_file)
        writer.writerow(('function', 'variant', 'seed', 'final_fitness', 'initial_best'))
        for variant_stats in stats:
            for seed, final, initial in zip(variant_stats.seeds, variant_stats.final_fitness,
                                            variant_stats.initial_best):
                writer.writerow((function_name, variant_stats.variant, seed, _metric_text(final),
                                 _metric_text(initial)))
        for variant_stats in stats:
            writer.writerow((function_name, variant_stats.variant, 'median',
                             _metric_text(variant_stats.median), ''))
            writer.writerow((function_name, variant_stats.variant, 'iqr',
                             _metric_text(variant_stats.iqr), ''))


def write_run_record(record, path):
    config = configparser.ConfigParser()
    config['RUN'] = {
        'VERSION': str(RUN_RECORD_VERSION),
        'COMMAND': record.command,
        'TOOL_VERSION': record.tool_version,
        'SCENARIO': record.scenario_name,
        'SEED': str(record.seed),
        'TRACE_SHA256': record.trace_sha256,
    }
    config['ARTIFACTS'] = dict(record.artifacts)
    for label, run_metrics in record.metrics.items():
        config['METRICS %s' % label] = {field.upper(): _metric_text(value)
                                        for field, value in zip(METRIC_FIELDS, run_metrics)}
    config_utils.write_config(config, path)


def read_run_record(path):
    try:
        config = config_utils.get_config(path)
        run = config['RUN']
        run_metrics = {}
        for section in config.sections():
            if section.startswith('METRICS '):
                values = {field: (config[section][field] == 'True') if field == 'settled' else
                          float(config[section][field]) for field in METRIC_FIELDS}
                run_metrics[section[len('METRICS '):]] = metrics.RunMetrics(**values)
        return RunRecord(command=run['COMMAND'], tool_version=run['TOOL_VERSION'],
                         scenario_name=run['SCENARIO'], seed=run.getint('SEED'),
                         metrics=run_metrics,
                         artifacts={key: value for key, value in config['ARTIFACTS'].items()},
                         trace_sha256=run.get('TRACE_SHA256', fallback=''))
    except (FileNotFoundError, configparser.Error, KeyError, ValueError) as err:
        raise ArtifactFileError('Unable to read run record %s: %r' % (path, err)) from err
