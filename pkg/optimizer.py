"""Whale Optimization Algorithm (canonical and modified) and PID gain tuning.

The modified variant divides every new position by a correction factor: CF1 for
the shrinking-encircle and exploration moves, CF2 for the spiral move. Dividing
the whole position, as opposed to only the step, pulls candidates toward the
origin; the best position found is always tracked separately so that bias never
loses an earlier optimum. Canonical WOA is the same update with CF1 = CF2 = 1.
"""
import collections
import concurrent.futures
import logging
import math

import numpy as np

import controllers
import metrics
import plant
import simulation

VARIANTS = ('canonical', 'modified')
# Controller kind that runs gains tuned by each variant.
TUNED_CONTROLLER_KINDS = {'canonical': 'woa-pid', 'modified': 'mwoa-pid'}
DEFAULT_AGENTS = 30
DEFAULT_MAX_ITER = 100
DEFAULT_B_SPIRAL = 1.0
DEFAULT_CORRECTION_FACTOR = 2.0
DEFAULT_GAIN_BOUNDS = (0.0, 10.0)
BRANCH_PROBABILITY = 0.5
LOG_EVERY_N_ITERATIONS = 25

WoaConfig = collections.namedtuple(
    'WoaConfig',
    ['variant',
     'agents',
     'max_iter',
     'dim',
     'bounds',
     'b_spiral',
     'cf1',
     'cf2',
     'seed',
     ])

WhalePopulation = collections.namedtuple(
    'WhalePopulation', ['positions', 'fitness', 'best_position', 'best_fitness', 'iter'])

WoaResult = collections.namedtuple('WoaResult',
                                   ['best_position', 'best_fitness', 'convergence_curve'])

TuningResult = collections.namedtuple(
    'TuningResult',
    ['gains',
     'best_fitness',
     'convergence_curve',
     'seed',
     'variant',
     'restarts',
     ])

VariantStats = collections.namedtuple(
    'VariantStats', ['variant', 'seeds', 'final_fitness', 'initial_best', 'median', 'iqr'])


class Error(Exception):
    """Generic error type for this module."""


class WoaConfigError(Error):
    """Invalid optimizer configuration. |violations| lists every problem found."""

    def __init__(self, violations):
        super().__init__('Invalid WOA config: %s' % '; '.join(violations))
        self.violations = list(violations)


class OptimizerFailedError(Error):
    """Objective was non-finite at every initial point."""

    def __init__(self, message, seed=None):
        super().__init__('%s (seed=%r)' % (message, seed))
        self.seed = seed


def make_woa_config(variant='modified', agents=DEFAULT_AGENTS, max_iter=DEFAULT_MAX_ITER, dim=3,
                    bounds=None, b_spiral=DEFAULT_B_SPIRAL, cf1=DEFAULT_CORRECTION_FACTOR,
                    cf2=DEFAULT_CORRECTION_FACTOR, seed=0):
    """WoaConfig with defaults; bounds default to DEFAULT_GAIN_BOUNDS in every dimension."""
    if bounds is None:
        bounds = tuple(DEFAULT_GAIN_BOUNDS for _ in range(dim))
    return WoaConfig(variant=variant, agents=agents, max_iter=max_iter, dim=dim,
                     bounds=tuple(tuple(pair) for pair in bounds), b_spiral=b_spiral, cf1=cf1,
                     cf2=cf2, seed=seed)


def validate_woa_config(cfg):
    """Return list of str describing every invariant violated by |cfg|."""
    violations = []
    if cfg.variant not in VARIANTS:
        violations.append('variant must be one of %s, got %r' % (VARIANTS, cfg.variant))
    if not (isinstance(cfg.agents, int) and cfg.agents >= 2):
        violations.append('agents must be an integer >= 2, got %r' % cfg.agents)
    if not (isinstance(cfg.max_iter, int) and cfg.max_iter >= 1):
        violations.append('max_iter must be an integer >= 1, got %r' % cfg.max_iter)
    if not (isinstance(cfg.dim, int) and cfg.dim >= 1):
        violations.append('dim must be an integer >= 1, got %r' % cfg.dim)
    elif len(cfg.bounds) != cfg.dim:
        violations.append('bounds must have %d entries, got %d' % (cfg.dim, len(cfg.bounds)))
    for index, (lo, hi) in enumerate(cfg.bounds):
        if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
            violations.append('bounds[%d] must be finite with lo <= hi, got (%r, %r)' % (
                index, lo, hi))
    if not math.isfinite(cfg.b_spiral):
        violations.append('b_spiral must be finite, got %r' % cfg.b_spiral)
    for name in ('cf1', 'cf2'):
        value = getattr(cfg, name)
        if not (math.isfinite(value) and value >= 1):
            violations.append('%s must be finite and >= 1, got %r' % (name, value))
    if not isinstance(cfg.seed, int):
        violations.append('seed must be an integer, got %r' % (cfg.seed,))
    return violations


def correction_factors(cfg):
    if cfg.variant == 'canonical':
        return 1.0, 1.0
    return float(cfg.cf1), float(cfg.cf2)


def encircle_update(best_position, positions, a_coef, c_coef, cf1):
    """Shrinking encircle around the best whale."""
    distance = np.abs(c_coef * best_position - positions) / cf1
    return (best_position - a_coef * distance) / cf1


def exploration_update(random_positions, positions, a_coef, c_coef, cf1):
    """Search around a randomly chosen whale instead of the best one."""
    distance = np.abs(c_coef * random_positions - positions) / cf1
    return (random_positions - a_coef * distance) / cf1


def spiral_update(best_position, positions, l_coef, b_spiral, cf2):
    """Logarithmic spiral toward the best whale; l_coef broadcasts over dimensions."""
    distance = np.abs(best_position - positions)
    return (distance * np.exp(b_spiral * l_coef) * np.cos(2.0 * math.pi * l_coef) +
            best_position) / cf2


def _as_fitness(value):
    value = float(value)
    return value if math.isfinite(value) else math.inf


class PopulationEvaluator:
    """Evaluates an objective on every row of a position matrix.

    With workers > 1 rows are evaluated in a process pool; results are merged in
    row order so both modes return identical arrays. The objective must then be
    picklable.
    """

    def __init__(self, objective, workers=1):
        self.objective = objective
        self.workers = max(1, int(workers))
        self._executor = None

    def __enter__(self):
        return self

    def __exit__(self, *unused_exc_info):
        self.close()

    def close(self):
        if self._executor is not None:
            self._executor.shutdown()
            self._executor = None

    def evaluate(self, positions):
        rows = [np.array(row) for row in positions]
        if self.workers == 1:
            values = [self.objective(row) for row in rows]
        else:
            if self._executor is None:
                self._executor = concurrent.futures.ProcessPoolExecutor(max_workers=self.workers)
            values = list(self._executor.map(self.objective, rows))
        return np.array([_as_fitness(value) for value in values])


def _clamp(positions, cfg):
    bounds = np.asarray(cfg.bounds, dtype=float)
    return np.clip(positions, bounds[:, 0], bounds[:, 1])


def initialize_population(cfg, evaluator, rng):
    """Uniform random positions within bounds, evaluated.

    Raises:
        OptimizerFailedError if every initial fitness is non-finite.
    """
    bounds = np.asarray(cfg.bounds, dtype=float)
    lo, hi = bounds[:, 0], bounds[:, 1]
    positions = lo + (hi - lo) * rng.random((cfg.agents, cfg.dim))
    fitness = evaluator.evaluate(positions)
    if not np.any(np.isfinite(fitness)):
        raise OptimizerFailedError('Objective non-finite at all %d initial points' % cfg.agents,
                                   seed=cfg.seed)
    best_index = int(np.argmin(fitness))
    return WhalePopulation(positions=positions, fitness=fitness,
                           best_position=positions[best_index].copy(),
                           best_fitness=float(fitness[best_index]), iter=0)


def woa_iteration(pop, cfg, obj, rng, evaluator=None):
    """Move every whale once, clamp, re-evaluate and update the best.

    All random numbers of the iteration are drawn before any evaluation.
    Returns:
        the next WhalePopulation.
    """
    if pop.iter >= cfg.max_iter:
        raise ValueError('Population already at max_iter=%d' % cfg.max_iter)
    if evaluator is None:
        evaluator = PopulationEvaluator(obj)
    cf1, cf2 = correction_factors(cfg)
    agents, dim = pop.positions.shape

    a_scalar = 2.0 * (1.0 - pop.iter / cfg.max_iter)
    r1 = rng.random((agents, dim))
    r2 = rng.random((agents, dim))
    p = rng.random(agents)
    l_coef = rng.uniform(-1.0, 1.0, agents)
    random_index = rng.integers(0, agents, agents)
    a_coef = 2.0 * a_scalar * r1 - a_scalar
    c_coef = 2.0 * r2

    encircled = encircle_update(pop.best_position, pop.positions, a_coef, c_coef, cf1)
    explored = exploration_update(pop.positions[random_index], pop.positions, a_coef, c_coef, cf1)
    spiralled = spiral_update(pop.best_position, pop.positions, l_coef[:, np.newaxis],
                              cfg.b_spiral, cf2)
    shrinking = np.where(np.abs(a_coef) < 1.0, encircled, explored)
    positions = np.where((p < BRANCH_PROBABILITY)[:, np.newaxis], shrinking, spiralled)
    positions = _clamp(positions, cfg)

    fitness = evaluator.evaluate(positions)
    best_position, best_fitness = pop.best_position, pop.best_fitness
    best_index = int(np.argmin(fitness))
    if fitness[best_index] < best_fitness:
        best_position = positions[best_index].copy()
        best_fitness = float(fitness[best_index])
    logging.debug('WOA iteration %d: best fitness %r', pop.iter + 1, best_fitness)
    return WhalePopulation(positions=positions, fitness=fitness, best_position=best_position,
                           best_fitness=best_fitness, iter=pop.iter + 1)


def woa_run(cfg, obj, workers=1):
    """Run init plus max_iter iterations.

    Returns:
        WoaResult; convergence_curve[0] is the initial best, then one entry per
        iteration, non-increasing.
    Raises:
        WoaConfigError for an invalid config, OptimizerFailedError if no initial
        point has finite fitness.
    """
    violations = validate_woa_config(cfg)
    if violations:
        raise WoaConfigError(violations)
    rng = np.random.default_rng(cfg.seed)
    with PopulationEvaluator(obj, workers) as evaluator:
        pop = initialize_population(cfg, evaluator, rng)
        curve = [pop.best_fitness]
        while pop.iter < cfg.max_iter:
            pop = woa_iteration(pop, cfg, obj, rng, evaluator)
            curve.append(pop.best_fitness)
            if pop.iter % LOG_EVERY_N_ITERATIONS == 0:
                logging.info('%s WOA seed %d: iteration %d/%d, best fitness %r', cfg.variant,
                             cfg.seed, pop.iter, cfg.max_iter, pop.best_fitness)
    return WoaResult(best_position=pop.best_position, best_fitness=pop.best_fitness,
                     convergence_curve=curve)


def sphere(x):
    return float(np.sum(np.square(x)))


def rosenbrock(x):
    x = np.asarray(x, dtype=float)
    return float(np.sum(100.0 * np.square(x[1:] - np.square(x[:-1])) + np.square(1.0 - x[:-1])))


def rastrigin(x):
    x = np.asarray(x, dtype=float)
    return float(10.0 * x.size + np.sum(np.square(x) - 10.0 * np.cos(2.0 * math.pi * x)))


def ackley(x):
    x = np.asarray(x, dtype=float)
    return float(-20.0 * np.exp(-0.2 * np.sqrt(np.mean(np.square(x)))) -
                 np.exp(np.mean(np.cos(2.0 * math.pi * x))) + 20.0 + math.e)


# name -> (function, default per-dimension bounds)
BENCHMARKS = {
    'sphere': (sphere, (-10.0, 10.0)),
    'rosenbrock': (rosenbrock, (-30.0, 30.0)),
    'rastrigin': (rastrigin, (-5.12, 5.12)),
    'ackley': (ackley, (-32.0, 32.0)),
}


class PidTuningObjective:
    """Fitness of PID gains (kp, ki, kd) as an integral index of a closed-loop run.

    Diverged or non-finite runs score +inf.
    """

    def __init__(self, scenario, index_name='itae',
                 divergence_guard=simulation.DEFAULT_DIVERGENCE_GUARD):
        if index_name not in metrics.FITNESS_INDICES:
            raise ValueError('Unknown fitness index %r' % index_name)
        self.scenario = scenario
        self.index_name = index_name
        self.divergence_guard = divergence_guard

    def __call__(self, position):
        gains = controllers.PidGains(*(float(value) for value in position))
        scenario = self.scenario
        controller = controllers.PidController(gains, scenario.params.u_limits,
                                               scenario.controller.derivative_filter_n)
        try:
            trace = simulation.run_closed_loop(
                plant.MicrogridModel(scenario.params), controller, scenario.load_profile,
                scenario.duration, scenario.pv_profile, scenario.stpg_profile,
                self.divergence_guard)
        except plant.SimulationAbortError as err:
            logging.debug('Gains %r rejected: %s', gains, err)
            return math.inf
        return metrics.fitness_index(trace, self.index_name,
                                     t_disturbance=scenario.metrics.t_disturbance,
                                     window=scenario.metrics.window)


def tune_pid(scenario, cfg, fitness_index='itae', restarts=1, workers=1):
    """Tune PID gains on |scenario| with WOA/MWOA.

    Args:
        scenario: scenario.Scenario used as the tuning closed loop.
        cfg: WoaConfig with dim 3 and bounds over (kp, ki, kd), all >= 0.
        fitness_index: one of metrics.FITNESS_INDICES.
        restarts: independent runs with seeds cfg.seed, cfg.seed+1, ...; best kept.
        workers: processes for fitness evaluation.
    Returns:
        TuningResult.
    """
    violations = validate_woa_config(cfg)
    if cfg.dim != 3:
        violations.append('PID tuning needs dim=3, got %r' % cfg.dim)
    if any(lo < 0 for lo, _ in cfg.bounds):
        violations.append('PID gain bounds must be >= 0, got %r' % (cfg.bounds,))
    if not (isinstance(restarts, int) and restarts >= 1):
        violations.append('restarts must be an integer >= 1, got %r' % restarts)
    if violations:
        raise WoaConfigError(violations)

    objective = PidTuningObjective(scenario, fitness_index)
    best = None
    best_seed = cfg.seed
    for restart in range(restarts):
        run_cfg = cfg._replace(seed=cfg.seed + restart)
        logging.info('Tuning PID on %s: %s variant, seed %d, %d agents x %d iterations',
                     scenario.name, cfg.variant, run_cfg.seed, cfg.agents, cfg.max_iter)
        result = woa_run(run_cfg, objective, workers)
        if best is None or result.best_fitness < best.best_fitness:
            best, best_seed = result, run_cfg.seed
    gains = controllers.PidGains(*(float(value) for value in best.best_position))
    logging.info('Tuned gains %r with %s=%r (seed %d)', gains, fitness_index, best.best_fitness,
                 best_seed)
    return TuningResult(gains=gains, best_fitness=best.best_fitness,
                        convergence_curve=best.convergence_curve, seed=best_seed,
                        variant=cfg.variant, restarts=restarts)


def benchmark_variants(function_name, cfg, seeds, bounds=None):
    """Final fitness of canonical and modified WOA on a benchmark, per seed.

    cfg supplies agents, max_iter, dim, b_spiral and correction factors. bounds is
    one (lo, hi) pair applied to every dimension, defaulting to the benchmark's own.
    Returns:
        list of VariantStats, canonical first.
    """
    if function_name not in BENCHMARKS:
        raise WoaConfigError(['unknown benchmark %r, expected one of %s' % (
            function_name, sorted(BENCHMARKS))])
    function, default_bounds = BENCHMARKS[function_name]
    pair = tuple(bounds) if bounds is not None else default_bounds
    cfg = cfg._replace(bounds=tuple(pair for _ in range(cfg.dim)))
    stats = []
    for variant in VARIANTS:
        finals, initials = [], []
        for seed in seeds:
            result = woa_run(cfg._replace(variant=variant, seed=seed), function)
            finals.append(result.best_fitness)
            initials.append(result.convergence_curve[0])
        q1, median, q3 = np.percentile(finals, [25, 50, 75])
        logging.info('%s on %s: median final fitness %r over %d seeds', variant, function_name,
                     median, len(seeds))
        stats.append(VariantStats(variant=variant, seeds=list(seeds), final_fitness=finals,
                                  initial_best=initials, median=float(median),
                                  iqr=float(q3 - q1)))
    return stats
