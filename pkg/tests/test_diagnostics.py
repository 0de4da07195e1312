import numpy as np

import pytest

from numpy.testing import assert_allclose

from KIPAC.quantRelax import Defaults

from KIPAC.quantRelax import diagnostics

from KIPAC.quantRelax import verify

from KIPAC.quantRelax.diagnostics import AlphaRecord

from KIPAC.quantRelax.Objective import make_quadratic

from KIPAC.quantRelax.Quantizer import QuantScheme, LineSubspace, project

from KIPAC.quantRelax.Optimizer import WeightQuantizer, LearningRateSchedule, Trainer

from KIPAC.quantRelax.exceptions import ContractError, InvalidInputError

try:
    from Utils import quadratic_problem, FAST_TESTS
except ImportError:
    from .Utils import quadratic_problem, FAST_TESTS


BINARY = QuantScheme('binary')
TERNARY = QuantScheme('ternary')


def _sq(vec):
    return float(np.sum(np.asarray(vec)**2))


# --- alpha_k ---
def test_alpha_same_line():
    y, x_k, x_k1 = np.array([2., -4.]), np.array([3., -3.]), np.array([1., -1.])
    record = diagnostics.alpha_k(y, x_k, x_k1, k=7, quantizer=BINARY)
    assert record.k == 7
    assert record.alpha == 1.
    assert record.same_line is True
    assert record.defined
    assert_allclose(record.alpha * _sq(x_k1 - x_k) + _sq(y - x_k), _sq(y - x_k1), rtol=1e-14)


def test_alpha_line_change():
    y, x_k, x_k1 = np.array([2., -4.]), np.array([3., -3.]), np.array([3., 3.])
    record = diagnostics.alpha_k(y, x_k, x_k1)
    assert_allclose(record.alpha, 4. / 3., rtol=1e-15)
    assert record.same_line is False
    assert_allclose(record.step_norm, 6., rtol=1e-15)
    assert_allclose(record.alpha * _sq(x_k1 - x_k) + _sq(y - x_k), _sq(y - x_k1), rtol=1e-14)


def test_alpha_undefined_and_origin():
    record = diagnostics.alpha_k([2., -4.], [3., -3.], [3., -3.])
    assert np.isnan(record.alpha)
    assert not record.defined
    assert diagnostics.alpha_k([2., -4.], [3., -3.], [0., 0.]).same_line is None


def test_alpha_contract():
    with pytest.raises(ContractError):
        diagnostics.alpha_k([2., -4.], [1., -1.], [3., -3.], quantizer=BINARY)
    with pytest.raises(ContractError):
        diagnostics.alpha_k([2., -4.], [2., -4.], [3., -3.], quantizer=BINARY)
    quantizer = WeightQuantizer(BINARY, [(0, 2)])
    diagnostics.alpha_k([2., -4.], [3., -3.], [1., 1.], quantizer=quantizer)
    with pytest.raises(InvalidInputError):
        diagnostics.alpha_k([2., -4.], [3., -3.], [1., 1., 1.])


def test_alpha_nonnegative_on_projections():
    rng = np.random.default_rng(9)
    for _ in range(500):
        y = rng.standard_normal(5)
        x_k = project(y, TERNARY).materialized
        x_k1 = project(y + 0.3 * rng.standard_normal(5), TERNARY).materialized
        record = diagnostics.alpha_k(y, x_k, x_k1, quantizer=TERNARY)
        if record.defined:
            assert record.alpha >= -Defaults.ALPHA_NONNEG_ATOL


# --- lines of Q ---
def test_theta_min():
    assert_allclose(diagnostics.theta_min(TERNARY, 2), np.pi / 4., rtol=1e-12)
    assert_allclose(diagnostics.theta_min(BINARY, 3), np.arccos(1. / 3.), rtol=1e-12)
    assert_allclose(diagnostics.theta_min(BINARY, 2), np.pi / 2., rtol=1e-12)
    assert diagnostics.theta_min(BINARY, 1) == np.pi / 2.
    assert_allclose(diagnostics.theta_min((0., 1.), 2), np.pi / 4., rtol=1e-12)


def test_project_onto_line():
    assert diagnostics.project_onto_line([1., 2.], [0., 0.]) is None
    assert_allclose(diagnostics.project_onto_line([2., -4.], [3., 3.]), [-1., -1.], rtol=1e-14)


def test_gradient_line_angle():
    assert_allclose(diagnostics.gradient_line_angle([2., 2.], [1., 1.]), 0., atol=1e-7)
    assert_allclose(diagnostics.gradient_line_angle([1., -1.], [1., 1.]), np.pi / 2., rtol=1e-12)
    assert np.isnan(diagnostics.gradient_line_angle([0., 0.], [1., 1.]))
    assert np.isnan(diagnostics.gradient_line_angle([1., 0.], [0., 0.]))


# --- step diagnostics ---
def test_stationarity_proxy():
    assert diagnostics.stationarity_proxy([0., 0.], [3., 4.], 0.5) == 100.
    with pytest.raises(InvalidInputError):
        diagnostics.stationarity_proxy([0., 0.], [3., 4.], 0.)


def test_upper_bound_check():
    y, x_k, x_k1 = np.array([2., -4.]), np.array([3., -3.]), np.array([3., 3.])
    alpha = diagnostics.alpha_k(y, x_k, x_k1).alpha
    ok, lhs, rhs = diagnostics.upper_bound_check(y, x_k, x_k1, alpha)
    assert ok
    assert_allclose(lhs, 32., rtol=1e-14)
    assert_allclose(rhs, 48., rtol=1e-14)
    ok, _, _ = diagnostics.upper_bound_check(y, x_k, x_k1, 0.5)
    assert not ok


def test_alternative_update_residual():
    oracle, quantizer = quadratic_problem(n=5, seed=2)
    rng = np.random.default_rng(10)
    for _ in range(50):
        y_k = rng.standard_normal(5)
        x_k = quantizer.project(y_k)
        grad = oracle.full_grad(x_k)
        x_k1 = quantizer.project(y_k - 0.05 * grad)
        residual = diagnostics.alternative_update_residual(y_k, x_k1, grad, 0.05)
        assert residual <= 1e-12 * max(1., np.linalg.norm(x_k1))
    assert np.isnan(diagnostics.alternative_update_residual([1., 2.], [0., 0.], [1., 1.], 0.1))


def test_descent_check():
    oracle = make_quadratic([1., 0.2])
    ok, beta = diagnostics.descent_check([1., 0.], oracle, 10., TERNARY)
    assert ok
    assert beta == Defaults.DESCENT_BETAS[0]
    value = diagnostics.relaxed_value(oracle, [1., 0.], 10., TERNARY)
    assert_allclose(value, 0.02, rtol=1e-14)
    assert diagnostics.relaxed_value(oracle, [1., -0.2 * beta], 10., TERNARY) > \
        diagnostics.relaxed_value(oracle, [1., 0.2 * beta], 10., TERNARY)


def test_descent_check_errors():
    oracle = make_quadratic([1., 0.])
    with pytest.raises(ContractError):
        diagnostics.descent_check([1., 0.], oracle, 10., TERNARY)
    with pytest.raises(InvalidInputError):
        diagnostics.descent_check([1., 1.], oracle, -1., TERNARY)


def test_curvature_diagnostics():
    oracle = make_quadratic([1., -2., 0.5], [2., 1., 4.])
    rng = np.random.default_rng(11)
    for _ in range(20):
        x, y = rng.standard_normal(3), rng.standard_normal(3)
        assert diagnostics.descent_lemma_gap(oracle, x, y, oracle.curvature) >= -1e-12
        assert 1. - 1e-12 <= diagnostics.empirical_curvature(oracle, x, y) <= 4. + 1e-12
    assert diagnostics.empirical_curvature(oracle, x, x) == 0.


def test_gradient_variance():
    oracle, _ = quadratic_problem(n=4, seed=3)
    x = np.ones(4)
    rng = np.random.default_rng(12)
    assert diagnostics.gradient_variance(oracle, x, 4, rng) == 0.
    assert diagnostics.gradient_variance(oracle, x, 2, rng) > 0.


# --- alpha traces ---
def _record(k, alpha, same_line=True, step_norm=0.1, x_norm=1.):
    return AlphaRecord(k, alpha, same_line, step_norm, x_norm)


def test_summarize_alphas():
    stats = diagnostics.summarize_alphas([_record(0, 0.5), _record(1, np.nan), _record(2, 1e-8)])
    assert stats['count'] == 3
    assert stats['undefined'] == 1
    assert stats['small'] == 1
    assert_allclose(stats['mean'], (0.5 + 1e-8) / 2., rtol=1e-15)
    assert stats['min'] == 1e-8 and stats['max'] == 0.5
    empty = diagnostics.summarize_alphas([])
    assert empty['count'] == 0
    assert np.isnan(empty['mean'])


def test_small_step_violations():
    good = _record(0, 1.)
    off_line = _record(1, 1., same_line=False)
    bad_alpha = _record(2, 0.5)
    long_step = _record(3, 0.5, same_line=False, step_norm=1.)
    undefined = _record(4, np.nan)
    bad = diagnostics.small_step_violations([good, off_line, bad_alpha, long_step, undefined], np.pi / 4.)
    assert bad == [off_line, bad_alpha]


def test_trace_collector_alphas():
    alphas = verify.alpha_trace(epochs=200 if FAST_TESTS else 2500)
    assert alphas
    values = np.array([rec.alpha for rec in alphas if rec.defined])
    assert np.all(values >= -Defaults.ALPHA_NONNEG_ATOL)
    assert not diagnostics.small_step_violations(alphas, diagnostics.theta_min(TERNARY, 4))


def test_same_line():
    assert diagnostics.same_line([1., -1.], [-2., 2.]) is True
    assert diagnostics.same_line([1., 0., 1.], [1., 0., -1.]) is False
    assert diagnostics.same_line([0., 0.], [1., 1.]) is None
    rng = np.random.default_rng(13)
    for _ in range(20):
        x0 = project(rng.standard_normal(3), TERNARY).materialized
        x1 = project(rng.standard_normal(3), TERNARY).materialized
        assert diagnostics.same_line(x0, x1) == (LineSubspace(x0) == LineSubspace(x1))


def test_trace_collector_curvature():
    oracle = make_quadratic([1., -2., 0.5], [2., 1., 4.])
    quantizer = WeightQuantizer(TERNARY, oracle.quant_groups)
    bounded = diagnostics.TraceCollector(oracle=oracle, curvature=oracle.curvature)
    running = diagnostics.TraceCollector(oracle=oracle)
    for collector in (bounded, running):
        trainer = Trainer('binaryconnect', oracle, quantizer, LearningRateSchedule(0.05, (), 0.1),
                          num_epochs=10, batch_size=3, initial_weights=np.ones(3), callback=collector)
        trainer.run()
        assert len(collector) == 10
        curvatures = collector.column('curvature')
        steps = np.array([np.linalg.norm(step['x_k1'] - step['x_k']) for step in collector.steps])
        long_steps = steps > 1e-4
        assert np.any(long_steps)
        assert np.all(curvatures[long_steps] >= 1. - 1e-6)
        assert np.all(curvatures[long_steps] <= 4. + 1e-6)
        assert np.all(collector.column('descent_gap') >= -1e-10)
    assert running.max_curvature == running.column('curvature').max()


def test_phase_ii_upper_bound_on_mlp_trace():
    collector = verify.mlp_trace(epochs=4 if FAST_TESTS else 6)
    assert all(step['phase'] == 'exact' for step in collector.steps)
    checked = 0
    for step in collector.steps:
        alpha = step['alpha']
        if alpha is None or not alpha.defined:
            continue
        ok, lhs, rhs = diagnostics.upper_bound_check(step['y_k'], step['x_k'], step['x_k1'], alpha.alpha)
        assert ok, (step['k'], lhs, rhs)
        checked += 1
    assert checked > 0
    assert np.all(collector.column('descent_gap') >= -1e-9)


def test_phase_ii_bounds_property():
    verify.check_phase_ii_bounds()
