import numpy as np
import pytest

from dastft.adaptation import LossReport, Objective, tv_neighborhood
from dastft.optimizer import NumericalFailure, OptimConfig, TRACE_HEADER, grid_search, optimize
from dastft.signal_model import Signal
from dastft.stft_core import FrameGrid, Mode, ThetaField


def _quadratic(target):
    def objective(theta: ThetaField) -> LossReport:
        diff = theta.values - target
        value = 0.5 * float(np.sum(diff**2))
        return LossReport(value, value, 0.0, 0.0, diff)
    return objective


@pytest.fixture
def small_problem(rng):
    t = np.arange(512)
    samples = np.sin(2 * np.pi * 0.1 * t) + 0.3 * rng.standard_normal(512)
    samples[250:258] += 5 * np.hanning(8)
    sig = Signal(samples, 1.0)
    return sig, FrameGrid.centered(len(sig), 32, 16)


def test_max_iters_must_be_positive():
    with pytest.raises(ValueError):
        OptimConfig(max_iters=0)


def test_config_validation():
    with pytest.raises(ValueError):
        OptimConfig(algorithm="lbfgs")
    with pytest.raises(ValueError):
        OptimConfig(step_size=0)


def test_single_iteration_trace(small_problem):
    sig, grid = small_problem
    trace = optimize(sig, grid, "per_frame", config=OptimConfig(max_iters=1))
    assert len(trace.history) == 1 and trace.iterations_used == 1


@pytest.mark.parametrize("algorithm", ["gd", "momentum", "adam"])
def test_planted_quadratic(algorithm):
    target = np.linspace(6, 28, 12).reshape(4, 3)
    step = {"gd": 0.5, "momentum": 0.1, "adam": 0.5}[algorithm]
    config = OptimConfig(algorithm=algorithm, step_size=step, max_iters=5000, theta_init=16.0,
                         theta_max=32.0, grad_tol=1e-9, loss_tol=0.0)
    trace = optimize(None, None, "tf", objective=_quadratic(target), num_frames=4, num_bins=3, config=config)
    assert trace.converged
    assert np.max(np.abs(trace.best_theta.values - target)) < 1e-6


def test_quadratic_active_bound():
    # Minimiser outside the box: the projected gradient vanishes at the bound.
    target = np.array([[2.0], [50.0]])
    config = OptimConfig(algorithm="gd", step_size=0.5, max_iters=200, theta_init=16.0, theta_max=32.0)
    trace = optimize(None, None, "per_frame", objective=_quadratic(target), num_frames=2, config=config)
    assert trace.converged
    np.testing.assert_array_equal(trace.theta.values, [[4.0], [32.0]])


@pytest.mark.parametrize("mode", list(Mode))
def test_feasibility_and_determinism(small_problem, mode):
    sig, grid = small_problem
    config = OptimConfig(step_size=3.0, max_iters=15, theta_init="random", seed=5)
    seen = []

    def check(it, report, theta):
        assert np.all(theta.values >= 4.0) and np.all(theta.values <= 32.0)
        seen.append(it)

    nb = tv_neighborhood((grid.num_frames, 17) if mode is Mode.PER_FRAME_PER_FREQ else (grid.num_frames, 1))
    a = optimize(sig, grid, mode, nb=None if mode is Mode.CONSTANT else nb, lam=0.01, config=config, callback=check)
    b = optimize(sig, grid, mode, nb=None if mode is Mode.CONSTANT else nb, lam=0.01, config=config)
    assert seen == list(range(len(a.history)))
    assert a.history == b.history
    np.testing.assert_array_equal(a.theta.values, b.theta.values)


def test_best_iterate_is_minimum(small_problem):
    sig, grid = small_problem
    trace = optimize(sig, grid, "tf", config=OptimConfig(step_size=4.0, max_iters=20))
    assert trace.best_loss <= trace.losses.min()
    assert np.isclose(Objective(sig, grid).value(trace.best_theta), trace.best_loss, rtol=1e-12)


def test_gd_descends_with_small_step(small_problem):
    sig, grid = small_problem
    config = OptimConfig(algorithm="gd", step_size=2.0, max_iters=10)
    losses = optimize(sig, grid, "per_frame", config=config).losses
    assert np.all(np.diff(losses) <= 1e-12)


def test_lambda_monotone_regularization(small_problem):
    sig, grid = small_problem
    nb = tv_neighborhood((grid.num_frames, 17))
    regs = []
    for lam in (0.0, 0.1, 1.0, 10.0):
        trace = optimize(sig, grid, "tf", nb=nb, lam=lam, config=OptimConfig(step_size=1.0, max_iters=60))
        regs.append(Objective(sig, grid, nb=nb, lam=1.0).value(trace.best_theta)
                    - Objective(sig, grid).value(trace.best_theta))
    assert all(b <= a + 1e-9 for a, b in zip(regs, regs[1:]))


def test_mode_nesting_with_warm_start(small_problem):
    sig, grid = small_problem
    config = OptimConfig(step_size=2.0, max_iters=40)
    const = optimize(sig, grid, "constant", config=config)
    frame = optimize(sig, grid, "per_frame",
                     config=OptimConfig(step_size=2.0, max_iters=40, theta_init=const.best_theta.values[0, 0]))
    tf = optimize(sig, grid, "tf", config=OptimConfig(step_size=2.0, max_iters=40,
                                                      theta_init=frame.best_theta.values))
    assert frame.best_loss <= const.best_loss + 1e-12
    assert tf.best_loss <= frame.best_loss + 1e-12


def test_numerical_failure_carries_trace():
    def bad(theta):
        return LossReport(np.nan, np.nan, 0.0, 0.0, np.zeros_like(theta.values))

    with pytest.raises(NumericalFailure) as info:
        optimize(None, None, "constant", objective=bad, num_frames=1, num_bins=1,
                 config=OptimConfig(theta_max=16.0))
    assert len(info.value.trace.history) == 1


def test_trace_csv(small_problem):
    sig, grid = small_problem
    trace = optimize(sig, grid, "constant", config=OptimConfig(max_iters=3))
    lines = trace.to_csv().splitlines()
    assert lines[0] == TRACE_HEADER
    assert len(lines) == 1 + len(trace.history)


def test_grid_search_single_element(small_problem):
    sig, grid = small_problem
    best, table = grid_search(sig, grid, theta_grid=[12])
    assert best == 12.0 and table.shape == (1, 2)


def test_grid_search_empty(small_problem):
    sig, grid = small_problem
    with pytest.raises(ValueError):
        grid_search(sig, grid, theta_grid=[])


def test_grid_search_long_tone_prefers_full_support():
    t = np.arange(2048)
    sig = Signal(np.sin(2 * np.pi * 8.0 / 64 * t), 1.0)
    grid = FrameGrid.centered(len(sig), 64, 16)
    best, table = grid_search(sig, grid, theta_grid=[8, 16, 32, 64])
    assert best == 64.0
    best2, table2 = grid_search(sig, grid, theta_grid=[8, 16, 32, 64])
    np.testing.assert_array_equal(table, table2)
