import math

import numpy as np
import pytest

from simdoa.geometry import SimGeometry, build_propagation_matrices, dft_matrix
from simdoa.trainer import (
    TrainConfig,
    TrainingDiverged,
    finite_diff_gradient,
    gradient,
    layer_inputs,
    train,
    train_restarts,
)
from simdoa.wavemodel import PhaseStack, forward_response, optimal_scale, random_stack

LAM = 0.005


def make_props(layers=2, m_side=3, n_side=2):
    geom = SimGeometry(
        wavelength=LAM,
        n_x=n_side, n_y=n_side, d_x=LAM / 2, d_y=LAM / 2,
        m_x=m_side, m_y=m_side, s_x=LAM / 2, s_y=LAM / 2,
        layers=layers, thickness=0.005 * layers,
    )
    return build_propagation_matrices(geom)


# ---------------------------------------------------------------- layer inputs

def test_layer_inputs_first_entry_is_w0():
    props = make_props(layers=3)
    stack = random_stack(3, 9, np.random.default_rng(0))
    q = layer_inputs(props, stack)
    assert len(q) == 3
    assert np.array_equal(q[0], props.w0)


def test_layer_inputs_match_naive_cascade():
    props = make_props(layers=3)
    stack = random_stack(3, 9, np.random.default_rng(1))
    q = layer_inputs(props, stack)
    for n in range(props.w0.shape[1]):
        field = props.w0[:, n]
        for l in range(1, 3):
            field = props.w_inner[l - 1] @ (stack.transmission(l) * field)
            assert np.allclose(q[l][:, n], field, rtol=1e-12)


def test_layer_inputs_identity_first_layer():
    # with layer 1 phases at zero the second layer sees plain W1 W0
    props = make_props(layers=2)
    stack = PhaseStack([np.zeros(9), np.random.default_rng(2).uniform(0, 2 * math.pi, 9)])
    q = layer_inputs(props, stack)
    assert np.allclose(q[1], props.w_inner[0] @ props.w0, rtol=1e-12)


# -------------------------------------------------------------------- gradient

def test_gradient_zero_at_exact_fit():
    # when f equals beta * G the residual vanishes and so must the gradient
    props = make_props(layers=2)
    stack = random_stack(2, 9, np.random.default_rng(3))
    g = forward_response(props, stack)
    beta = 0.3 - 1.1j
    grads = gradient(props, stack, beta * g, beta)
    for gl in grads:
        assert np.max(np.abs(gl)) < 1e-20 * np.max(np.abs(g))


def test_gradient_single_atom_closed_form():
    # scalar chain: G = w_last e^{j xi} w0, d|beta G - f|^2/dxi = 2 Im(conj(beta G)(beta G - f))
    geom = SimGeometry(
        wavelength=LAM, n_x=1, n_y=1, d_x=LAM / 2, d_y=LAM / 2,
        m_x=1, m_y=1, s_x=LAM / 2, s_y=LAM / 2, layers=1, thickness=0.004,
    )
    props = build_propagation_matrices(geom)
    xi = 0.73
    stack = PhaseStack([np.array([xi])])
    beta = 1.4 + 0.2j
    f = np.array([[0.8 - 0.5j]])
    big_g = props.w_last[0, 0] * np.exp(1j * xi) * props.w0[0, 0]
    expected = 2.0 * np.imag(np.conj(beta * big_g) * (beta * big_g - f[0, 0]))
    grads = gradient(props, stack, f, beta)
    assert grads[0][0] == pytest.approx(expected, rel=1e-12)


def test_gradient_matches_finite_differences():
    # off-optimum beta keeps the residual nonzero on degenerate sizes
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(12):
        n_side = int(rng.integers(1, 3))
        m_side = int(rng.integers(2, 4))
        layers = int(rng.integers(1, 4))
        props = make_props(layers=layers, m_side=m_side, n_side=n_side)
        stack = random_stack(layers, m_side * m_side, rng)
        f = dft_matrix(n_side, n_side).matrix
        beta = optimal_scale(forward_response(props, stack), f) * (1.1 + 0.3j)
        ga = gradient(props, stack, f, beta)
        gf = finite_diff_gradient(props, stack, f, beta)
        for a, b in zip(ga, gf):
            scale = max(np.max(np.abs(b)), 1e-300)
            worst = max(worst, np.max(np.abs(a - b)) / scale)
            num = np.vdot(a, b).real
            den = np.linalg.norm(a) * np.linalg.norm(b)
            if den > 0:
                assert num / den > 1.0 - 1e-10
    assert worst <= 1e-6


def test_gradient_accepts_precomputed_inputs():
    props = make_props(layers=3)
    stack = random_stack(3, 9, np.random.default_rng(5))
    f = dft_matrix(2, 2).matrix
    q = layer_inputs(props, stack)
    a = gradient(props, stack, f, 1.0 + 0j)
    b = gradient(props, stack, f, 1.0 + 0j, q=q)
    for x, y in zip(a, b):
        assert np.array_equal(x, y)


def test_finite_diff_rejects_bad_step():
    props = make_props(layers=1)
    stack = random_stack(1, 9, np.random.default_rng(6))
    with pytest.raises(ValueError):
        finite_diff_gradient(props, stack, dft_matrix(2, 2).matrix, 1.0, step=0.0)


# -------------------------------------------------------------------- training

def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(max_iters=0)
    with pytest.raises(ValueError):
        TrainConfig(eta0=0.0)
    with pytest.raises(ValueError):
        TrainConfig(zeta=0.0)
    with pytest.raises(ValueError):
        TrainConfig(zeta=1.2)
    with pytest.raises(ValueError):
        TrainConfig(rel_tolerance=-1e-3)
    with pytest.raises(ValueError):
        TrainConfig(restarts=0)


def test_single_iteration_history_length():
    props = make_props(layers=2)
    f = dft_matrix(2, 2).matrix
    report = train(props, f, TrainConfig(max_iters=1, seed=7))
    assert len(report.loss_history) == 2
    assert len(report.loss_db_history) == 2
    assert report.iterations == 1
    assert report.stop_reason == "max_iters"


def test_best_iterate_never_worse_than_initial():
    props = make_props(layers=2)
    f = dft_matrix(2, 2).matrix
    report = train(props, f, TrainConfig(max_iters=30, seed=8))
    assert report.best_loss <= report.loss_history[0]
    assert report.best_loss == min(report.loss_history)
    assert report.loss_history[report.best_iteration] == report.best_loss


def test_best_iterate_is_reproducible_from_stack():
    props = make_props(layers=2)
    f = dft_matrix(2, 2).matrix
    report = train(props, f, TrainConfig(max_iters=25, seed=9))
    g = forward_response(props, report.stack)
    resid = report.beta * g - f
    assert np.linalg.norm(resid) ** 2 == pytest.approx(report.best_loss, rel=1e-9)


def test_training_is_deterministic():
    props = make_props(layers=2)
    f = dft_matrix(2, 2).matrix
    a = train(props, f, TrainConfig(max_iters=20, seed=10))
    b = train(props, f, TrainConfig(max_iters=20, seed=10))
    assert a.loss_history == b.loss_history
    assert a.beta == b.beta
    for xa, xb in zip(a.stack.xi, b.stack.xi):
        assert np.array_equal(xa, xb)


def test_early_stopping_on_relative_tolerance():
    props = make_props(layers=2)
    f = dft_matrix(2, 2).matrix
    report = train(props, f, TrainConfig(max_iters=50, rel_tolerance=1.0, seed=11))
    assert report.stop_reason == "converged"
    assert report.iterations < 50


def test_divergence_carries_history():
    props = make_props(layers=1)
    f = np.full((4, 4), np.inf)
    with pytest.raises(TrainingDiverged) as err:
        train(props, f, TrainConfig(max_iters=5, seed=12))
    assert len(err.value.loss_history) >= 1


def test_reference_geometry_reaches_deep_fit():
    # the (2,2) target is essentially exactly representable; even a short
    # run should pass -20 dB and keep the best iterate at the minimum
    geom = SimGeometry(
        wavelength=LAM, n_x=2, n_y=2, d_x=LAM / 2, d_y=LAM / 2,
        m_x=11, m_y=11, s_x=LAM / 2, s_y=LAM / 2, layers=7, thickness=9 * LAM,
    )
    props = build_propagation_matrices(geom)
    f = dft_matrix(2, 2).matrix
    report = train(props, f, TrainConfig(max_iters=60, seed=0))
    assert report.best_db < -20.0


def test_restarts_cover_distinct_seeds():
    props = make_props(layers=2)
    f = dft_matrix(2, 2).matrix
    reports = train_restarts(props, f, TrainConfig(max_iters=5, seed=100, restarts=3))
    assert [r.seed for r in reports] == [100, 101, 102]
    solo = train(props, f, TrainConfig(max_iters=5, seed=101))
    assert reports[1].loss_history == solo.loss_history


def test_restart_reports_vary_with_seed():
    props = make_props(layers=2)
    f = dft_matrix(2, 2).matrix
    reports = train_restarts(props, f, TrainConfig(max_iters=5, seed=200, restarts=2))
    assert reports[0].loss_history[0] != reports[1].loss_history[0]
