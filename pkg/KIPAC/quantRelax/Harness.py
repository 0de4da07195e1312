"""Experiment execution behind the run, compare and quantize commands"""

import os
import sys
import copy
import logging
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from scipy import stats

from . import Defaults

from . import file_utils

from .Quantizer import QuantScheme, SCHEME_LIBRARY, project, dist_to_Q, brute_force_quantize

from .Optimizer import build_trainer

from .RunConfig import RunConfig, load_config

from .utilities import derive_seed

from .exceptions import TrainingAborted

logger = logging.getLogger(__name__)


def resolve_out_dir(out=None, config=None):
    """Output directory: the argument, then the config, then `Defaults.QUANTRELAX_OUT`"""
    if out is not None:
        return out
    if config is not None and config.out is not None:
        return config.out
    return Defaults.QUANTRELAX_OUT


def execute_run(config, out_dir, overrides=(), record_iterations=False):
    """Train once and write metrics.csv, summary.json and weights.ckpt into out_dir

    Parameters
    ----------
    config : `RunConfig`
        Validated config
    out_dir : `str`
        Output directory of this run
    overrides : `list`
        The KEY=VALUE overrides, echoed in the summary

    Returns
    -------
    code : `int`
        `Defaults.EXIT_OK` or `Defaults.EXIT_RUNTIME` if the run aborted
    summary : `dict`
        The run summary
    """
    oracle, val = config.build_problem()
    initial = None
    if config.warm_start is not None:
        initial = file_utils.read_checkpoint(config.warm_start)
        logger.info("Warm start from %s", config.warm_start)
    trainer = build_trainer(config, oracle, val, initial, record_iterations)
    metrics_path = os.path.join(out_dir, Defaults.METRICS_FILENAME)
    summary_path = os.path.join(out_dir, Defaults.SUMMARY_FILENAME)
    try:
        trainer.run()
    except TrainingAborted as err:
        file_utils.write_metrics_csv(err.records, metrics_path)
        summary = trainer.summary()
        summary.update(status='failed', error=str(err), failed_iteration=err.iteration,
                       config=config.to_dict(), overrides=list(overrides))
        file_utils.write_json(summary, summary_path)
        return Defaults.EXIT_RUNTIME, summary
    file_utils.write_metrics_csv(trainer.records, metrics_path)
    if record_iterations:
        file_utils.write_metrics_csv(trainer.iteration_records, os.path.join(out_dir, 'iterations.csv'))
    file_utils.write_checkpoint(os.path.join(out_dir, Defaults.CHECKPOINT_FILENAME), trainer.state.y)
    summary = trainer.summary()
    summary.update(status='ok', config=config.to_dict(), overrides=list(overrides),
                   grad_variance=[rec.grad_variance for rec in trainer.records])
    file_utils.write_json(summary, summary_path)
    logger.info("Wrote %s and %s", metrics_path, summary_path)
    return Defaults.EXIT_OK, summary


def cmd_run(config_path=None, overrides=(), out=None, seed=None, record_iterations=False):
    """Run one training job

    Raises
    ------
    ConfigurationError : before any compute if the config is invalid

    Returns
    -------
    code : `int`
        Exit code
    """
    config, _ = load_config(config_path, overrides, seed)
    out_dir = resolve_out_dir(out, config)
    code, _ = execute_run(config, out_dir, overrides, record_iterations)
    return code


def _compare_job(args):
    data, out_dir = args
    config = RunConfig.from_dict(data)
    try:
        code, summary = execute_run(config, out_dir)
    except Exception as err:  # recorded in the table, the sweep carries on
        logger.error("%s seed %i failed: %s", config.optimizer, config.seed, err)
        return dict(optimizer=config.optimizer, seed=config.seed, status='failed',
                    val_acc=np.nan, train_loss=np.nan)
    final = summary.get('final', {})
    return dict(optimizer=config.optimizer, seed=config.seed,
                status='ok' if code == Defaults.EXIT_OK else 'failed',
                val_acc=final.get('val_acc', np.nan) if code == Defaults.EXIT_OK else np.nan,
                train_loss=final.get('train_loss', np.nan) if code == Defaults.EXIT_OK else np.nan)


def compare_seeds(master_seed, seeds=None, num_seeds=None):
    """Explicit seeds, or num_seeds seeds derived from master_seed"""
    if seeds:
        return [int(seed) for seed in seeds]
    return [derive_seed(master_seed, i) for i in range(num_seeds or 1)]


def cmd_compare(config_path=None, optimizers=None, seeds=None, num_seeds=None, overrides=(),
                out=None, seed=None, jobs=1):
    """Run the optimizer x seed cross product and tabulate the final metrics

    The table has one row per run followed by one mean row per optimizer
    (with the standard deviations filled in).

    Returns
    -------
    code : `int`
        0, or `Defaults.EXIT_RUNTIME` if any run failed
    """
    base, data = load_config(config_path, overrides, seed)
    optimizers = list(optimizers) if optimizers else [base.optimizer]
    seeds = compare_seeds(base.seed, seeds, num_seeds)
    out_dir = resolve_out_dir(out, base)
    tasks = []
    for optimizer in optimizers:
        for run_seed in seeds:
            run_data = copy.deepcopy(data)
            run_data.update(optimizer=optimizer, seed=run_seed)
            # fail fast on invalid combinations
            RunConfig.from_dict(run_data).validate()
            run_dir = os.path.join(out_dir, Defaults.COMPARE_RUN_FORMAT.format(optimizer=optimizer, seed=run_seed))
            tasks.append((run_data, run_dir))
    logger.info("Running %i jobs on %i worker(s)", len(tasks), jobs)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as executor:
            results = list(executor.map(_compare_job, tasks))
    else:
        results = [_compare_job(task) for task in tasks]
    write_compare_table(results, optimizers, os.path.join(out_dir, Defaults.COMPARE_FILENAME))
    if any(row['status'] != 'ok' for row in results):
        return Defaults.EXIT_RUNTIME
    return Defaults.EXIT_OK


def _mean_std(values):
    values = np.asarray(values, dtype=np.float64)
    values = values[np.isfinite(values)]
    if values.size == 0:
        return np.nan, np.nan
    if values.size == 1:
        return float(values[0]), np.nan
    desc = stats.describe(values)
    return float(desc.mean), float(np.sqrt(desc.variance))


def write_compare_table(results, optimizers, path):
    """Write the comparison CSV

    Parameters
    ----------
    results : `list`
        Row dictionaries with optimizer, seed, status, val_acc, train_loss
    optimizers : `list`
        Optimizer order of the table
    path : `str`
        Output file
    """
    order = {name: i for i, name in enumerate(optimizers)}
    rows = sorted(results, key=lambda row: (order[row['optimizer']], row['seed']))
    columns = dict(optimizer=[], seed=[], status=[], final_val_acc=[], final_train_loss=[],
                   val_acc_std=[], train_loss_std=[])
    std_mask = []
    for optimizer in optimizers:
        subset = [row for row in rows if row['optimizer'] == optimizer]
        for row in subset:
            columns['optimizer'].append(optimizer)
            columns['seed'].append(str(row['seed']))
            columns['status'].append(row['status'])
            columns['final_val_acc'].append(row['val_acc'])
            columns['final_train_loss'].append(row['train_loss'])
            columns['val_acc_std'].append(np.nan)
            columns['train_loss_std'].append(np.nan)
            std_mask.append(True)
        acc_mean, acc_std = _mean_std([row['val_acc'] for row in subset])
        loss_mean, loss_std = _mean_std([row['train_loss'] for row in subset])
        columns['optimizer'].append(optimizer)
        columns['seed'].append('mean')
        columns['status'].append('ok' if all(row['status'] == 'ok' for row in subset) else 'failed')
        columns['final_val_acc'].append(acc_mean)
        columns['final_train_loss'].append(loss_mean)
        columns['val_acc_std'].append(acc_std)
        columns['train_loss_std'].append(loss_std)
        std_mask.append(False)
    mask = np.array(std_mask)
    file_utils.write_table(columns, path, masks=dict(val_acc_std=mask, train_loss_std=mask))
    logger.info("Wrote %s", path)


def build_quantize_scheme(scheme=None, solver='ternary', levels=None, bit_width=None, max_iters=None):
    """`QuantScheme` from a library name or explicit solver arguments"""
    if scheme is not None:
        return SCHEME_LIBRARY.get_scheme(scheme)
    return QuantScheme(solver, levels=levels, bit_width=bit_width,
                       max_iters=Defaults.LLOYD_MAX_ITERS if max_iters is None else max_iters)


def _fmt(value):
    return format(value, Defaults.FLOAT_FORMAT)


def cmd_quantize(vector_file, scheme, show_codes=False, oracle=False, stream=None):
    """Quantize a vector read from a file and print a report

    Parameters
    ----------
    vector_file : `str`
        Whitespace and/or comma separated reals
    scheme : `QuantScheme`
    show_codes : `bool`
        Also print the full code vector
    oracle : `bool`
        Cross-check the objective value against `brute_force_quantize`

    Returns
    -------
    code : `int`
        0, or `Defaults.EXIT_PROPERTY` on an oracle mismatch
    """
    stream = sys.stdout if stream is None else stream
    y = file_utils.read_vector_file(vector_file)
    point = project(y, scheme)
    residual = point.residual(y)
    dist = dist_to_Q(y, scheme)
    codes, counts = np.unique(point.codes, return_counts=True)
    print("solver: %s (%s)" % (scheme.solver, 'exact' if scheme.is_exact else 'approximate'), file=stream)
    print("n: %i" % y.size, file=stream)
    print("s: %s" % _fmt(point.scale), file=stream)
    print("histogram: %s" % ' '.join("%s:%i" % (_fmt(c), n) for c, n in zip(codes, counts)), file=stream)
    print("residual: %s" % _fmt(residual), file=stream)
    print("residual^2: %s" % _fmt(float(np.sum((point.materialized - y)**2))), file=stream)
    print("dist_to_Q: %s%s" % (_fmt(dist), '' if scheme.is_exact else ' (upper bound)'), file=stream)
    if show_codes:
        print("codes: %s" % ' '.join(_fmt(c) for c in point.codes), file=stream)
    if not oracle:
        return Defaults.EXIT_OK
    best = brute_force_quantize(y, scheme.levels)
    ours = float(np.sum((point.materialized - y)**2))
    theirs = float(np.sum((best.materialized - y)**2))
    if abs(ours - theirs) <= Defaults.ORACLE_RTOL * max(1., abs(theirs)):
        print("oracle: MATCH (%s)" % _fmt(theirs), file=stream)
        return Defaults.EXIT_OK
    print("oracle: MISMATCH (ours %s, brute force %s)" % (_fmt(ours), _fmt(theirs)), file=stream)
    return Defaults.EXIT_PROPERTY
