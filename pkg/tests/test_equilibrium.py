import numpy as np
import pytest

from irnn.equilibrium import (
    DivergenceError,
    NotConvergedError,
    SolverConfig,
    euler_iterate,
    relaxation_rhs_one_layer,
    solve_one_layer,
    solve_two_layer,
)
from irnn.networks import OneLayerParams, TwoLayerParams, init_one_layer, init_two_layer
from irnn.numeric import make_rng, sigmoid

SCALAR_FIXED_POINT = 0.5708793216535328  # root of y = sigmoid(y / 2), mpmath


def scalar_fixed_point(w, drive, tol=1e-12):
    """Damped iteration y <- (y + sigmoid(w y + drive)) / 2."""
    y = 0.0
    for _ in range(10_000):
        nxt = 0.5 * (y + 1.0 / (1.0 + np.exp(-(w * y + drive))))
        if abs(nxt - y) < tol:
            return nxt
        y = nxt
    raise AssertionError("oracle did not converge")


def single_neuron(w=0.5, q=1.0, t=0.0):
    return OneLayerParams(Q=np.array([[q]]), W=np.array([[w]]), T=np.array([t]))


def random_one_layer(seed, n_in=4, n_out=8, w=0.3):
    rng = make_rng(seed)
    p = init_one_layer(n_in, n_out, rng)
    p.W[:] = rng.uniform(-w, w, p.W.shape)
    return p, rng.uniform(-0.5, 0.5, n_in)


def random_two_layer(seed, n_in=3, n_h=4, n_out=2, w=0.3):
    rng = make_rng(seed)
    p = init_two_layer(n_in, n_h, n_out, rng)
    for name in ("W_L2", "R", "W_L1"):
        getattr(p, name)[:] = rng.uniform(-w, w, getattr(p, name).shape)
    return p, rng.uniform(-0.5, 0.5, n_in)


def test_oracle_agrees_with_frozen_value():
    assert abs(scalar_fixed_point(0.5, 0.0) - SCALAR_FIXED_POINT) < 1e-10


def test_rhs_examples():
    p = single_neuron()
    assert relaxation_rhs_one_layer(p, np.array([0.0]), np.array([0.0]))[0] == 0.5
    q, x = random_one_layer(0)
    q.W[:] = 0
    y = sigmoid(q.Q @ x + q.T)
    assert np.allclose(relaxation_rhs_one_layer(q, x, y), 0.0, atol=1e-15)


def test_rhs_zero_at_solved_fixed_point():
    p, x = random_one_layer(3)
    eq = solve_one_layer(p, x, SolverConfig(iterations=200, tolerance=1e-13, max_iterations=None))
    assert np.linalg.norm(relaxation_rhs_one_layer(p, x, eq.y)) < 1e-13


def test_feedforward_reduction_one_layer():
    p, x = random_one_layer(1)
    p.W[:] = 0
    for iters in (1, 5, 30):
        eq = solve_one_layer(p, x, SolverConfig(iterations=iters, max_iterations=None))
        assert np.allclose(eq.y, sigmoid(p.Q @ x + p.T), atol=1e-12) or iters < 30
    eq = solve_one_layer(p, x)
    assert eq.converged and eq.residual_norm < 1e-12


def test_single_neuron_fixed_point():
    eq = solve_one_layer(single_neuron(), np.array([0.0]))
    assert round(float(eq.y[0]), 4) == 0.5709
    assert abs(eq.y[0] - scalar_fixed_point(0.5, 0.0)) < 1e-8


def test_random_net_converges_in_30_steps():
    p, x = random_one_layer(11)
    cfg = SolverConfig(max_iterations=None)
    eq = solve_one_layer(p, x, cfg)
    assert eq.residual_norm <= 1e-6 and eq.converged
    long = solve_one_layer(p, x, SolverConfig(iterations=300, max_iterations=None))
    assert np.max(np.abs(long.y - eq.y)) < 1e-8


def test_converged_flag_matches_tolerance():
    p, x = random_one_layer(2, w=0.3)
    eq = solve_one_layer(p, x, SolverConfig(iterations=2, tolerance=1e-12, max_iterations=None))
    assert not eq.converged and eq.residual_norm > 1e-12
    with pytest.raises(NotConvergedError):
        eq.check(1e-12)


def test_extension_only_touches_unconverged_samples():
    p, _ = random_one_layer(4)
    X = make_rng(5).uniform(-1, 1, (6, 4))
    plain = solve_one_layer(p, X, SolverConfig(max_iterations=None))
    tight = SolverConfig(tolerance=np.min(plain.residual_norm) * 1.0001, max_iterations=300)
    ext = solve_one_layer(p, X, tight)
    fixed = plain.residual_norm <= tight.tolerance
    assert fixed.any() and not fixed.all()
    assert np.array_equal(ext.y[fixed], plain.y[fixed])
    assert ext.converged and np.all(ext.residual_norm <= tight.tolerance)


def test_batch_matches_single(rng):
    p, _ = random_one_layer(6)
    X = rng.uniform(-1, 1, (5, 4))
    batch = solve_one_layer(p, X)
    for i in range(5):
        assert np.allclose(solve_one_layer(p, X[i]).y, batch.y[i], atol=1e-12)


def test_euler_one_step_is_iterative_update():
    p, x = random_one_layer(7)
    eq = euler_iterate(p, x, h=1.0, steps=1)
    assert np.allclose(eq.y, sigmoid(p.Q @ x + p.T), atol=1e-15)


def test_euler_feedforward_immediate():
    p, x = random_one_layer(8)
    p.W[:] = 0
    for steps in (1, 3, 10):
        assert np.allclose(euler_iterate(p, x, 1.0, steps).y, sigmoid(p.Q @ x + p.T), atol=1e-15)


def test_euler_single_neuron_agrees_with_rk4():
    eq = euler_iterate(single_neuron(), np.array([0.0]), h=0.5, steps=200)
    assert abs(eq.y[0] - solve_one_layer(single_neuron(), np.array([0.0])).y[0]) < 1e-6


@pytest.mark.parametrize("seed", range(5))
def test_rk4_and_euler_agree(seed):
    p, x = random_one_layer(seed)
    rk = solve_one_layer(p, x)
    eu = euler_iterate(p, x, 0.1, 1000)
    assert rk.converged and eu.converged
    assert np.max(np.abs(rk.y - eu.y)) < 1e-5


def test_reported_residual_recomputes():
    for seed in range(10):
        p, x = random_one_layer(seed)
        eq = solve_one_layer(p, x)
        assert eq.converged
        assert np.linalg.norm(sigmoid(p.W @ eq.y + p.Q @ x + p.T) - eq.y) <= 1e-6
        assert np.all((eq.y > 0) & (eq.y < 1))


def test_divergence_detected():
    # with a bounded activation the RK4 map contracts, so only non-finite input diverges
    p = OneLayerParams(Q=np.array([[1.0]]), W=np.array([[0.5]]), T=np.array([0.0]))
    with pytest.raises(DivergenceError) as info:
        solve_one_layer(p, np.array([np.nan]), SolverConfig(max_iterations=None))
    assert info.value.iteration == 1


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(iterations=0)
    with pytest.raises(ValueError):
        SolverConfig(step_size=1.5)
    with pytest.raises(ValueError):
        SolverConfig(tolerance=0.0)
    with pytest.raises(ValueError):
        SolverConfig(method="rk45")


def test_two_layer_decoupled_cascade():
    p, x = random_two_layer(0)
    for name in ("W_L2", "R", "W_L1"):
        getattr(p, name)[:] = 0
    eq = solve_two_layer(p, x)
    y2 = sigmoid(p.Q_L2 @ x + p.T_L2)
    y1 = sigmoid(p.Q_L1 @ y2 + p.T_L1)
    assert np.max(np.abs(eq.y_l2 - y2)) < 1e-8 and np.max(np.abs(eq.y_l1 - y1)) < 1e-8


def test_two_layer_all_zero():
    p = TwoLayerParams(
        Q_L2=np.zeros((3, 2)), W_L2=np.zeros((3, 3)), R=np.zeros((3, 2)), T_L2=np.zeros(3),
        Q_L1=np.zeros((2, 3)), W_L1=np.zeros((2, 2)), T_L1=np.zeros(2),
    )
    eq = solve_two_layer(p, np.zeros(2))
    assert np.allclose(eq.y_l1, 0.5) and np.allclose(eq.y_l2, 0.5)


@pytest.mark.parametrize("seed", range(5))
def test_two_layer_converges_and_is_consistent(seed):
    p, x = random_two_layer(seed)
    eq = solve_two_layer(p, x, SolverConfig(max_iterations=None))
    assert eq.residual_norm <= 1e-6
    long = solve_two_layer(p, x, SolverConfig(iterations=300, max_iterations=None))
    assert np.max(np.abs(long.y_l1 - eq.y_l1)) < 1e-8 and np.max(np.abs(long.y_l2 - eq.y_l2)) < 1e-8
    r2 = sigmoid(p.Q_L2 @ x + p.W_L2 @ eq.y_l2 + p.R @ eq.y_l1 + p.T_L2) - eq.y_l2
    r1 = sigmoid(p.Q_L1 @ eq.y_l2 + p.W_L1 @ eq.y_l1 + p.T_L1) - eq.y_l1
    assert np.sqrt(np.sum(r1**2) + np.sum(r2**2)) <= 1e-6
