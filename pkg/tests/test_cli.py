import os
import json

import numpy as np

import pytest

from numpy.testing import assert_allclose, assert_array_equal

from KIPAC.quantRelax import Defaults

from KIPAC.quantRelax import file_utils

from KIPAC.quantRelax.cli import main

from KIPAC.quantRelax.Harness import cmd_run, compare_seeds

from KIPAC.quantRelax.RunConfig import RunConfig, load_config, parse_override, apply_override,\
    resolve_config_path

from KIPAC.quantRelax.utilities import derive_seed

from KIPAC.quantRelax.exceptions import ConfigurationError

try:
    from Utils import write_text
except ImportError:
    from .Utils import write_text


SMALL_RUN = dict(objective=dict(kind='mlp', hidden=4),
                 dataset=dict(kind='blobs', n_samples=60),
                 optimizer='binaryrelax',
                 lr=dict(gamma0=0.05, decay_epochs=[2], decay_factor=0.1),
                 relax=dict(lambda0=1., rho=1.05, cadence=0.5, phase2_epoch=2),
                 epochs=3, batch_size=10, momentum=0.9, weight_decay=1e-4, seed=7)

QUADRATIC_RUN = dict(objective=dict(kind='quadratic', center=[1., 0.2]),
                     dataset=dict(kind='none'),
                     optimizer='binaryrelax',
                     lr=dict(gamma0=0.1, decay_epochs=[], decay_factor=0.1),
                     relax=dict(lambda0=1., rho=1.5, cadence=1., phase2_epoch=5),
                     epochs=10, batch_size=1, momentum=0., weight_decay=0., seed=3)


def _config(tmp_path, data, name='config.json'):
    return write_text(tmp_path / name, json.dumps(data))


# --- run ---
def test_run(tmp_path):
    path = _config(tmp_path, SMALL_RUN)
    out = str(tmp_path / 'out')
    assert main(['run', '-c', path, '-o', out, '--set', 'relax.rho=1.1', '--iterations']) == Defaults.EXIT_OK
    table = file_utils.read_metrics_csv(os.path.join(out, Defaults.METRICS_FILENAME))
    assert table.colnames == list(Defaults.METRICS_COLUMNS)
    assert len(table) == 3
    assert list(table['epoch']) == [1, 2, 3]
    assert list(table['phase']) == ['relaxed', 'relaxed', 'exact']
    # 51 training samples in batches of 10
    assert list(table['iter']) == [6, 12, 18]
    iterations = file_utils.read_metrics_csv(os.path.join(out, 'iterations.csv'))
    assert len(iterations) == 18
    summary = file_utils.read_json(os.path.join(out, Defaults.SUMMARY_FILENAME))
    assert summary['status'] == 'ok'
    assert summary['overrides'] == ['relax.rho=1.1']
    assert summary['config']['relax']['rho'] == 1.1
    assert summary['epochs'] == 3
    assert len(summary['grad_variance']) == 3
    weights = file_utils.read_checkpoint(os.path.join(out, Defaults.CHECKPOINT_FILENAME))
    assert weights.size == 2 * 4 + 4 + 4 * 3 + 3


def test_run_is_reproducible(tmp_path):
    path = _config(tmp_path, SMALL_RUN)
    for name in ('a', 'b'):
        assert main(['run', '-c', path, '-o', str(tmp_path / name)]) == Defaults.EXIT_OK
    first = file_utils.read_metrics_csv(str(tmp_path / 'a' / Defaults.METRICS_FILENAME))
    second = file_utils.read_metrics_csv(str(tmp_path / 'b' / Defaults.METRICS_FILENAME))
    assert_array_equal(first['train_loss'], second['train_loss'])
    assert_array_equal(file_utils.read_checkpoint(str(tmp_path / 'a' / Defaults.CHECKPOINT_FILENAME)),
                       file_utils.read_checkpoint(str(tmp_path / 'b' / Defaults.CHECKPOINT_FILENAME)))


def test_run_warm_start(tmp_path):
    path = _config(tmp_path, SMALL_RUN)
    first = str(tmp_path / 'first')
    assert main(['run', '-c', path, '-o', first, '--set', 'optimizer="float"']) == Defaults.EXIT_OK
    ckpt = os.path.join(first, Defaults.CHECKPOINT_FILENAME)
    second = str(tmp_path / 'second')
    assert main(['run', '-c', path, '-o', second, '--warm-start', ckpt]) == Defaults.EXIT_OK
    summary = file_utils.read_json(os.path.join(second, Defaults.SUMMARY_FILENAME))
    assert summary['config']['warm_start'] == ckpt

    bad = str(tmp_path / 'short.ckpt')
    file_utils.write_checkpoint(bad, np.ones(3))
    assert main(['run', '-c', path, '-o', str(tmp_path / 'third'), '--warm-start', bad]) == \
        Defaults.EXIT_VALIDATION


def test_run_quadratic(tmp_path):
    out = str(tmp_path / 'quad')
    config, _ = load_config(_config(tmp_path, QUADRATIC_RUN))
    assert config.resolved_batch_size(2) == 1
    assert cmd_run(_config(tmp_path, QUADRATIC_RUN), out=out) == Defaults.EXIT_OK
    summary = file_utils.read_json(os.path.join(out, Defaults.SUMMARY_FILENAME))
    assert summary['final']['phase'] == 'exact'
    assert np.isnan(summary['final']['val_acc'])
    assert summary['iterations'] == 20


GOLDEN_RUN = dict(objective=dict(kind='quadratic', center=[2., 0.5]),
                  dataset=dict(kind='none'),
                  optimizer='binaryconnect',
                  lr=dict(gamma0=0.5, decay_epochs=[], decay_factor=0.1),
                  epochs=3, batch_size=2, momentum=0., weight_decay=0., seed=3)

GOLDEN_METRICS = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'data',
                              'quadratic_binaryconnect_metrics.csv')


def test_run_metrics_match_golden_file(tmp_path):
    out = str(tmp_path / 'golden')
    assert main(['run', '-c', _config(tmp_path, GOLDEN_RUN), '-o', out]) == Defaults.EXIT_OK
    table = file_utils.read_metrics_csv(os.path.join(out, Defaults.METRICS_FILENAME))
    golden = file_utils.read_metrics_csv(GOLDEN_METRICS)
    assert table.colnames == golden.colnames == list(Defaults.METRICS_COLUMNS)
    assert len(table) == len(golden)
    for name in golden.colnames:
        if golden[name].dtype.kind in 'iuf':
            assert_allclose(np.array(table[name], dtype=float), np.array(golden[name], dtype=float),
                            rtol=1e-12, atol=0., err_msg=name)
        else:
            assert list(table[name]) == list(golden[name])


def test_run_aborts(tmp_path):
    data = dict(QUADRATIC_RUN, optimizer='float', epochs=500, batch_size=2,
                lr=dict(gamma0=1e3, decay_epochs=[], decay_factor=0.1))
    out = str(tmp_path / 'diverged')
    with np.errstate(over='ignore', invalid='ignore'):
        assert main(['run', '-c', _config(tmp_path, data), '-o', out]) == Defaults.EXIT_RUNTIME
    summary = file_utils.read_json(os.path.join(out, Defaults.SUMMARY_FILENAME))
    assert summary['status'] == 'failed'
    assert summary['failed_iteration'] > 0
    table = file_utils.read_metrics_csv(os.path.join(out, Defaults.METRICS_FILENAME))
    assert 0 < len(table) < 500


def test_invalid_config_lists_all_errors(tmp_path, caplog):
    data = dict(SMALL_RUN, optimizer='adam', epochs=0, momentum=1.5)
    out = str(tmp_path / 'never')
    assert main(['run', '-c', _config(tmp_path, data), '-o', out]) == Defaults.EXIT_VALIDATION
    for text in ('optimizer must be one of', 'epochs must be an integer', 'momentum must lie'):
        assert text in caplog.text
    assert not os.path.exists(out)


def test_unknown_key_and_missing_file(tmp_path, caplog):
    data = dict(SMALL_RUN, bogus=1)
    assert main(['run', '-c', _config(tmp_path, data)]) == Defaults.EXIT_VALIDATION
    assert 'unknown key bogus' in caplog.text
    assert main(['run', '-c', str(tmp_path / 'missing.json')]) == Defaults.EXIT_VALIDATION
    assert main(['run', '-c', write_text(tmp_path / 'broken.json', '{"epochs": ')]) == \
        Defaults.EXIT_VALIDATION


# --- compare ---
def test_compare(tmp_path):
    path = _config(tmp_path, SMALL_RUN)
    out = str(tmp_path / 'cmp')
    argv = ['compare', '-c', path, '-o', out, '--optimizers', 'binaryrelax', 'float', '--seeds', '1', '2']
    assert main(argv) == Defaults.EXIT_OK
    table = file_utils.read_metrics_csv(os.path.join(out, Defaults.COMPARE_FILENAME))
    assert list(table['optimizer']) == ['binaryrelax'] * 3 + ['float'] * 3
    assert [str(seed) for seed in table['seed']] == ['1', '2', 'mean'] * 2
    assert list(table['status']) == ['ok'] * 6
    accs = np.array(table['final_val_acc'], dtype=float)
    assert np.all((accs >= 0) & (accs <= 1))
    assert abs(accs[2] - 0.5 * (accs[0] + accs[1])) <= 1e-12
    run_dir = os.path.join(out, Defaults.COMPARE_RUN_FORMAT.format(optimizer='float', seed=2))
    assert os.path.exists(os.path.join(run_dir, Defaults.METRICS_FILENAME))


def test_compare_parallel_matches_serial(tmp_path):
    path = _config(tmp_path, SMALL_RUN)
    tables = []
    for name, jobs in (('serial', '1'), ('parallel', '2')):
        out = str(tmp_path / name)
        assert main(['compare', '-c', path, '-o', out, '--num-seeds', '2', '-j', jobs]) == Defaults.EXIT_OK
        tables.append(file_utils.read_metrics_csv(os.path.join(out, Defaults.COMPARE_FILENAME)))
    assert_array_equal(tables[0]['final_train_loss'], tables[1]['final_train_loss'])
    assert set(str(seed) for seed in tables[0]['seed'][:2]) == set(str(derive_seed(7, i)) for i in range(2))


def test_compare_seeds():
    assert compare_seeds(5, [3, 4]) == [3, 4]
    assert compare_seeds(5, None, 3) == [derive_seed(5, i) for i in range(3)]
    assert compare_seeds(5) == [derive_seed(5, 0)]


def test_compare_rejects_bad_combination(tmp_path):
    path = _config(tmp_path, SMALL_RUN)
    assert main(['compare', '-c', path, '-o', str(tmp_path / 'cmp'), '--optimizers', 'sgdx']) == \
        Defaults.EXIT_VALIDATION
    assert not os.path.exists(str(tmp_path / 'cmp'))


# --- quantize ---
def test_quantize_binary(tmp_path, capsys):
    path = write_text(tmp_path / 'y.txt', "2 -4 6\n")
    assert main(['quantize', path, '--solver', 'binary', '--codes']) == Defaults.EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert out[0] == 'solver: binary (exact)'
    assert 'n: 3' in out
    assert 's: 4' in out
    assert 'histogram: -1:1 1:2' in out
    assert 'residual^2: 8' in out
    assert 'codes: 1 -1 1' in out


def test_quantize_oracle(tmp_path, capsys):
    path = write_text(tmp_path / 'y.txt', "3, 1, 0, 0")
    assert main(['quantize', path, '--oracle']) == Defaults.EXIT_OK
    out = capsys.readouterr().out
    assert 'oracle: MATCH' in out
    assert 's: 3' in out
    assert main(['quantize', path, '--scheme', 'twn', '--oracle']) == Defaults.EXIT_PROPERTY
    out = capsys.readouterr().out
    assert 'oracle: MISMATCH' in out
    assert '(upper bound)' in out


def test_quantize_errors(tmp_path):
    empty = write_text(tmp_path / 'empty.txt', "\n")
    assert main(['quantize', empty]) == Defaults.EXIT_VALIDATION
    bad = write_text(tmp_path / 'bad.txt', "1 2 x")
    assert main(['quantize', bad]) == Defaults.EXIT_VALIDATION
    good = write_text(tmp_path / 'good.txt', "1 2 3")
    assert main(['quantize', good, '--scheme', 'nope']) == Defaults.EXIT_VALIDATION
    big = write_text(tmp_path / 'big.txt', ' '.join(['1'] * 20))
    assert main(['quantize', big, '--oracle']) == Defaults.EXIT_VALIDATION


# --- verify ---
def test_verify_filter(capsys):
    assert main(['verify', '--filter', 'theta-min']) == Defaults.EXIT_OK
    out = capsys.readouterr().out
    assert 'theta-min' in out
    assert 'all 1 properties passed' in out


def test_verify_injected_fault(capsys):
    assert main(['verify', '--filter', 'prox-optimality', '--inject-fault', 'prox']) == Defaults.EXIT_PROPERTY
    assert 'FAILED: prox-optimality' in capsys.readouterr().out
    # the patch is undone
    assert main(['verify', '--filter', 'prox-optimality']) == Defaults.EXIT_OK


def test_verify_unknown_filter(capsys):
    assert main(['verify', '--filter', 'nothing']) == Defaults.EXIT_VALIDATION
    assert 'no property matches' in capsys.readouterr().out


# --- configs ---
def test_config_round_trip(tmp_path):
    path = str(tmp_path / 'defaults.json')
    RunConfig().save(path)
    config, _ = load_config(path)
    assert config == RunConfig()
    assert config.resolved_phase2_epoch == 240
    assert load_config(path, seed=5)[0].seed == 5
    assert load_config(path, ['epochs=10'])[0].resolved_phase2_epoch == 8


def test_overrides():
    assert parse_override('relax.rho=1.02') == (['relax', 'rho'], 1.02)
    assert parse_override('out=results') == (['out'], 'results')
    assert parse_override('lr.decay_epochs=[1, 2]') == (['lr', 'decay_epochs'], [1, 2])
    with pytest.raises(ConfigurationError):
        parse_override('noequals')
    with pytest.raises(ConfigurationError):
        parse_override('=3')
    data = dict(epochs=3)
    apply_override(data, 'quant.solver=binary')
    assert data['quant'] == dict(solver='binary')
    with pytest.raises(ConfigurationError):
        apply_override(data, 'epochs.x=1')


@pytest.mark.parametrize('name', ['cifar_style', 'desk_blobs'])
def test_shipped_configs(name):
    path = Defaults.CONFIG_FORMAT.format(name=name)
    if not os.path.exists(path):
        pytest.skip("shipped configs not found under %s" % Defaults.QUANTRELAX_CONFIG_DIR)
    assert resolve_config_path(name) == path
    config, _ = load_config(name)
    schedule = config.build_relaxation()
    low, high = Defaults.LAMBDA_WINDOW
    assert low < schedule.lambda_after(schedule.phase2_epoch) < high
