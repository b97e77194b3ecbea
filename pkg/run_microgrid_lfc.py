"""Command-line workflows: simulate, tune, train, compare, bench-optimizer, replay.

Exit codes: 0 success, 2 invalid input (scenario, parameters, config or artifact
files), 3 numerical failure.
"""
import argparse
import concurrent.futures
import configparser
import logging
import os
import sys
import time

import config_utils
import controllers
import metrics
import narma
import optimizer
import plant
import results_io
import scenario as scenario_lib
import simulation
from slack_notifier import notify_run_completion

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3

VALIDATION_ERRORS = (scenario_lib.ScenarioValidationError, plant.PlantConfigError,
                     optimizer.WoaConfigError, narma.WeightsFileError,
                     results_io.ArtifactFileError, configparser.Error, FileNotFoundError)
NUMERICAL_ERRORS = (plant.Error, optimizer.Error, narma.Error, metrics.Error)

DEFAULT_BENCH_DIM = 5
DEFAULT_BENCH_MAX_ITER = 500
DEFAULT_BENCH_SEEDS = '0-19'
# Controllers whose metrics must be ordered best to worst for the headline claim.
ORDERED_CONTROLLERS = ('narma', 'mwoa-pid', 'pid')

TRACE_FILE = 'trace.csv'
METRICS_FILE = 'metrics.csv'
REPORT_FILE = 'metrics.txt'
SNAPSHOT_FILE = 'scenario_snapshot.cfg'
RUN_RECORD_FILE = 'run_record.cfg'
GAINS_FILE = 'gains.cfg'
CONVERGENCE_FILE = 'convergence.csv'
WEIGHTS_FILE = 'weights.cfg'
HISTORY_FILE = 'history.csv'
COMPARE_FILE = 'compare.csv'
BENCH_FILE = 'bench.csv'


def _load(scenario_path, seed=None):
    loaded = scenario_lib.load_scenario(scenario_path)
    if seed is not None:
        loaded = scenario_lib.with_seed(loaded, seed)
    return loaded


def run_metrics(scen, trace):
    settings = scen.metrics
    return metrics.compute_metrics(trace, band=settings.band, window=settings.window,
                                   t_disturbance=settings.t_disturbance,
                                   band_mode=settings.band_mode,
                                   band_percent=settings.band_percent)


def _write_record(out_dir, command, scen, labelled_metrics, artifacts, trace_path=None):
    snapshot_path = os.path.join(out_dir, SNAPSHOT_FILE)
    scenario_lib.save_scenario(scen, snapshot_path)
    artifacts = dict(artifacts, scenario_snapshot=snapshot_path)
    record = results_io.RunRecord(
        command=command, tool_version=config_utils.TOOL_VERSION, scenario_name=scen.name,
        seed=scen.seed, metrics=dict(labelled_metrics), artifacts=artifacts,
        trace_sha256=results_io.file_sha256(trace_path) if trace_path else '')
    results_io.write_run_record(record, os.path.join(out_dir, RUN_RECORD_FILE))
    return record


def cmd_simulate(scenario_path, out_dir, seed=None, controller_kind=None):
    """Simulate one controller; writes trace, metrics, snapshot and run record.

    Returns:
        RunRecord.
    """
    scen = _load(scenario_path, seed)
    kind = controller_kind or scen.controller.kind
    # The snapshot must replay the controller actually simulated.
    scen = scen._replace(controller=scen.controller._replace(kind=kind))
    scen = scenario_lib.load_artifacts(scen, (kind,))
    os.makedirs(out_dir, exist_ok=True)
    trace = simulation.simulate_scenario(scen, kind)
    run = run_metrics(scen, trace)
    trace_path = os.path.join(out_dir, TRACE_FILE)
    results_io.write_trace_csv(trace, trace_path)
    labelled = [(kind, run)]
    results_io.write_metrics_csv(labelled, os.path.join(out_dir, METRICS_FILE))
    results_io.write_metrics_report(labelled, os.path.join(out_dir, REPORT_FILE))
    logging.info('%s on %s: peak %r Hz, settling %r s, ITAE %r', kind, scen.name,
                 run.peak_deviation, run.settling_time, run.itae)
    return _write_record(out_dir, 'simulate', scen, labelled, {'trace': trace_path}, trace_path)


def cmd_tune(scenario_path, out_dir, seed=None, woa_config_path=None, workers=1):
    """Tune PID gains on the scenario; writes gains file and convergence CSV.

    Returns:
        optimizer.TuningResult.
    """
    scen = _load(scenario_path, seed)
    if woa_config_path:
        scen = scenario_lib.apply_overrides(scen, woa_config_path, ('WOA',))
    os.makedirs(out_dir, exist_ok=True)
    index_name = scen.metrics.fitness_index
    result = optimizer.tune_pid(scen, scen.woa, index_name, scen.restarts, workers)
    baseline = optimizer.PidTuningObjective(scen, index_name)(
        list(controllers.CONVENTIONAL_PID_GAINS))
    logging.info('Tuned %s %r vs conventional baseline %r', index_name, result.best_fitness,
                 baseline)
    gains_path = os.path.join(out_dir, GAINS_FILE)
    convergence_path = os.path.join(out_dir, CONVERGENCE_FILE)
    results_io.write_gains(gains_path, result, index_name, scen.name)
    results_io.write_convergence_csv(result.convergence_curve, convergence_path)
    _write_record(out_dir, 'tune', scen, [], {'gains': gains_path,
                                              'convergence': convergence_path})
    return result


def cmd_train(scenario_path, out_dir, seed=None, narma_config_path=None):
    """Identify the plant with NARMA-L2; writes weights, history and identification CSVs.

    Returns:
        (NarmaL2Net, history, narma.IdentificationReport).
    """
    scen = _load(scenario_path, seed)
    if narma_config_path:
        scen = scenario_lib.apply_overrides(scen, narma_config_path, ('NARMA',))
    os.makedirs(out_dir, exist_ok=True)
    cfg = scen.narma
    dataset = narma.generate_excitation(plant.MicrogridModel(scen.params), cfg)
    net, history = narma.train_lm(narma.init_net(dataset, cfg), dataset, cfg)
    report = narma.identification_report(net, dataset, cfg)
    weights_path = os.path.join(out_dir, WEIGHTS_FILE)
    history_path = os.path.join(out_dir, HISTORY_FILE)
    narma.save_weights(net, weights_path)
    results_io.write_history_csv(history, history_path)
    artifacts = {'weights': weights_path, 'history': history_path}
    artifacts.update(('identification_%s' % segment, path) for segment, path in
                     results_io.write_identification_csvs(report, out_dir).items())
    _write_record(out_dir, 'train', scen, [], artifacts)
    return net, history, report


def compare_labels(kinds):
    """Unique labels: a repeated kind gets a _2, _3 .. suffix."""
    seen = {}
    labels = []
    for kind in kinds:
        seen[kind] = seen.get(kind, 0) + 1
        labels.append(kind if seen[kind] == 1 else '%s_%d' % (kind, seen[kind]))
    return labels


def _simulate_kind(args):
    scen, kind = args
    return simulation.simulate_scenario(scen, kind)


def ordering_report(labelled_metrics):
    """Lines stating whether narma <= mwoa-pid <= pid holds for settling time and peak."""
    by_label = dict(labelled_metrics)
    if not all(kind in by_label for kind in ORDERED_CONTROLLERS):
        return ['ordering check skipped: needs controllers %s' % ', '.join(ORDERED_CONTROLLERS)]
    lines = []
    for field in ('settling_time', 'peak_deviation'):
        values = [getattr(by_label[kind], field) for kind in ORDERED_CONTROLLERS]
        holds = values[0] <= values[1] <= values[2]
        lines.append('%s ordering %s: %s' % (
            field, ' <= '.join(ORDERED_CONTROLLERS), 'holds' if holds else 'does not hold'))
    return lines


def cmd_compare(scenario_path, kinds, out_dir, seed=None, workers=1):
    """Simulate several controllers on one scenario side by side.

    Returns:
        list of (label, RunMetrics) in the order of |kinds|.
    """
    scen = _load(scenario_path, seed)
    kinds = list(kinds) or list(ORDERED_CONTROLLERS)
    scen = scenario_lib.load_artifacts(scen, tuple(kinds))
    os.makedirs(out_dir, exist_ok=True)
    jobs = [(scen, kind) for kind in kinds]
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as executor:
            traces = list(executor.map(_simulate_kind, jobs))
    else:
        traces = [_simulate_kind(job) for job in jobs]
    labels = compare_labels(kinds)
    labelled_metrics = [(label, run_metrics(scen, trace)) for label, trace in zip(labels, traces)]
    compare_path = os.path.join(out_dir, COMPARE_FILE)
    results_io.write_compare_csv(list(zip(labels, traces)), compare_path)
    results_io.write_metrics_csv(labelled_metrics, os.path.join(out_dir, METRICS_FILE))
    ordering = ordering_report(labelled_metrics)
    results_io.write_metrics_report(labelled_metrics, os.path.join(out_dir, REPORT_FILE),
                                    ordering)
    for line in ordering:
        logging.info('%s: %s', scen.name, line)
    _write_record(out_dir, 'compare', scen, labelled_metrics, {'compare': compare_path},
                  compare_path)
    return labelled_metrics


def parse_seeds(text):
    """'0-19' or '1,5,9' to a list of ints."""
    text = text.strip()
    if '-' in text and ',' not in text:
        first, last = text.split('-')
        return list(range(int(first), int(last) + 1))
    return [int(token) for token in text.split(',') if token.strip()]


def bench_config(woa_config_path=None):
    """WoaConfig for benchmarking plus optional (lo, hi) bounds from a [WOA] section."""
    cfg = optimizer.make_woa_config(dim=DEFAULT_BENCH_DIM, max_iter=DEFAULT_BENCH_MAX_ITER,
                                    bounds=())
    bounds = None
    if woa_config_path:
        section = config_utils.get_config(woa_config_path)['WOA']
        cfg = cfg._replace(
            agents=section.getint('AGENTS', fallback=cfg.agents),
            max_iter=section.getint('MAX_ITER', fallback=cfg.max_iter),
            dim=section.getint('DIM', fallback=cfg.dim),
            b_spiral=section.getfloat('B_SPIRAL', fallback=cfg.b_spiral),
            cf1=section.getfloat('CF1', fallback=cfg.cf1),
            cf2=section.getfloat('CF2', fallback=cfg.cf2))
        if section.get('BOUNDS'):
            bounds = config_utils.parse_pairs(section['BOUNDS'])[0]
    return cfg, bounds


def cmd_bench_optimizer(function_name, out_dir, seeds, woa_config_path=None):
    """WOA vs MWOA final fitness statistics on a benchmark function."""
    cfg, bounds = bench_config(woa_config_path)
    os.makedirs(out_dir, exist_ok=True)
    stats = optimizer.benchmark_variants(function_name, cfg, seeds, bounds)
    results_io.write_bench_csv(function_name, stats, os.path.join(out_dir, BENCH_FILE))
    return stats


def cmd_replay(record_path, out_dir):
    """Re-simulate a run record's scenario snapshot and compare trace hashes.

    Returns:
        True if the replayed trace is byte-identical.
    """
    record = results_io.read_run_record(record_path)
    if record.command != 'simulate':
        raise results_io.ArtifactFileError('Only simulate records replay, got %r' %
                                           record.command)
    replayed = cmd_simulate(record.artifacts['scenario_snapshot'], out_dir)
    identical = replayed.trace_sha256 == record.trace_sha256
    logging.info('Replay of %s %s', record_path, 'is byte-identical' if identical else 'DIFFERS')
    return identical


def make_parser():
    parser = argparse.ArgumentParser(description='Microgrid load-frequency control simulator')
    subparsers = parser.add_subparsers(dest='command', required=True)

    def add_common(subparser, scenario_required=True):
        subparser.add_argument('--scenario', dest='scenario', required=scenario_required,
                               help='Scenario .cfg file path')
        subparser.add_argument('--out', dest='out', required=True, help='Output directory')
        subparser.add_argument('--seed', dest='seed', type=int, default=None,
                               help='Overrides every seed of the scenario file')

    simulate = subparsers.add_parser('simulate', help='Simulate one controller')
    add_common(simulate)
    simulate.add_argument('--controller', dest='controller', default=None,
                          choices=simulation.CONTROLLER_KINDS,
                          help='Overrides the scenario controller kind')

    tune = subparsers.add_parser('tune', help='Tune PID gains with WOA/MWOA')
    add_common(tune)
    tune.add_argument('--woa-config', dest='woa_config', default=None,
                      help='.cfg whose [WOA] section overrides the scenario')
    tune.add_argument('--workers', dest='workers', type=int, default=1)

    train = subparsers.add_parser('train', help='Identify and train the NARMA-L2 model')
    add_common(train)
    train.add_argument('--narma-config', dest='narma_config', default=None,
                       help='.cfg whose [NARMA] section overrides the scenario')

    compare = subparsers.add_parser('compare', help='Compare controllers on one scenario')
    add_common(compare)
    compare.add_argument('--controller', dest='controllers', action='append', default=[],
                         choices=simulation.CONTROLLER_KINDS, help='Repeatable')
    compare.add_argument('--workers', dest='workers', type=int, default=1)

    bench = subparsers.add_parser('bench-optimizer', help='WOA vs MWOA on a benchmark')
    bench.add_argument('--function', dest='function', required=True,
                       choices=sorted(optimizer.BENCHMARKS))
    bench.add_argument('--out', dest='out', required=True, help='Output directory')
    bench.add_argument('--seeds', dest='seeds', default=DEFAULT_BENCH_SEEDS,
                       help="Seed range '0-19' or list '1,2,3'")
    bench.add_argument('--woa-config', dest='woa_config', default=None)

    replay = subparsers.add_parser('replay', help='Replay a simulate run record')
    replay.add_argument('--record', dest='record', required=True)
    replay.add_argument('--out', dest='out', required=True)
    return parser


def _dispatch(args):
    """Run the command; returns (exit code, headline dict for the notification)."""
    if args.command == 'simulate':
        record = cmd_simulate(args.scenario, args.out, args.seed, args.controller)
        run = list(record.metrics.values())[0]
        return EXIT_OK, {'peak_deviation': run.peak_deviation,
                         'settling_time': run.settling_time, 'itae': run.itae}
    if args.command == 'tune':
        result = cmd_tune(args.scenario, args.out, args.seed, args.woa_config, args.workers)
        return EXIT_OK, {'gains': tuple(result.gains), 'best_fitness': result.best_fitness}
    if args.command == 'train':
        _, history, report = cmd_train(args.scenario, args.out, args.seed, args.narma_config)
        return EXIT_OK, {'epochs': history[-1].epoch, 'stalled': history[-1].stalled,
                         'test_rmse': report.rmse['test'], 'output_std': report.output_std}
    if args.command == 'compare':
        labelled = cmd_compare(args.scenario, args.controllers, args.out, args.seed,
                               args.workers)
        return EXIT_OK, {label: 'settling %.4g s, peak %.4g Hz' % (
            run.settling_time, run.peak_deviation) for label, run in labelled}
    if args.command == 'bench-optimizer':
        stats = cmd_bench_optimizer(args.function, args.out, parse_seeds(args.seeds),
                                    args.woa_config)
        return EXIT_OK, {item.variant: 'median %.4g, IQR %.4g' % (item.median, item.iqr)
                         for item in stats}
    identical = cmd_replay(args.record, args.out)
    return (EXIT_OK if identical else EXIT_NUMERICAL), {'identical': identical}


def _slack_url(args):
    if not getattr(args, 'scenario', None):
        return ''
    try:
        return config_utils.get_config(args.scenario).get('LOGGING', 'SLACK_URL', fallback='')
    except (FileNotFoundError, configparser.Error):
        return ''


def main(argv=None):
    args = make_parser().parse_args(argv)
    started = time.monotonic()
    scenario_name = getattr(args, 'scenario', None) or getattr(args, 'function', None) or \
        getattr(args, 'record', '')
    headline = None
    try:
        exit_code, headline = _dispatch(args)
        status = 'succeeded' if exit_code == EXIT_OK else 'failed'
    except VALIDATION_ERRORS as error:
        logging.error('Invalid input: %s', error, exc_info=True)
        exit_code, status = EXIT_VALIDATION, 'failed validation: %s' % error
    except NUMERICAL_ERRORS as error:
        logging.error('Numerical failure: %s', error, exc_info=True)
        exit_code, status = EXIT_NUMERICAL, 'failed numerically: %r' % error
    notify_run_completion(_slack_url(args), args.command, scenario_name, status,
                          time.monotonic() - started, headline)
    return exit_code


if __name__ == '__main__':
    config_utils.configure_logger('run_microgrid_lfc.log')
    sys.exit(main(sys.argv[1:]))
