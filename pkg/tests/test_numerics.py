"""Tests for the FFT, activations, loss, Adam, and gradient checking."""

import numpy as np
import pytest

from amrom.numerics import (
    AdamState,
    InvalidSizeError,
    NonFiniteGradientError,
    adam_update,
    affine,
    affine_backward,
    gelu,
    gelu_grad,
    grad_check,
    irfft,
    mse,
    mse_grad,
    relu,
    relu_grad,
    rfft,
)


def naive_dft(x):
    """O(N^2) reference: entry k is sum_n x[n] exp(-2j pi k n / N)."""
    n = len(x)
    k = np.arange(n // 2 + 1)[:, None]
    j = np.arange(n)[None, :]
    return (x[None, :] * np.exp(-2j * np.pi * k * j / n)).sum(axis=1)


# ---------------------------------------------------------------------------
# rfft / irfft
# ---------------------------------------------------------------------------


def test_rfft_constant_signal_has_only_dc():
    np.testing.assert_allclose(rfft(np.ones(4)), [4.0, 0.0, 0.0], atol=1e-14)


def test_rfft_unit_impulse_has_flat_spectrum():
    np.testing.assert_allclose(rfft(np.array([1.0, 0, 0, 0])), [1.0, 1.0, 1.0], atol=1e-14)


@pytest.mark.parametrize("n", [4, 16, 64, 256])
def test_rfft_matches_naive_dft(n):
    rng = np.random.default_rng(100 + n)
    x = rng.standard_normal(n)
    np.testing.assert_allclose(rfft(x), naive_dft(x), atol=1e-10)


def test_rfft_irfft_round_trip_all_sizes():
    rng = np.random.default_rng(1)
    for n in [4, 8, 16, 32, 64, 128, 256, 512, 1024]:
        x = rng.standard_normal(n)
        err = np.max(np.abs(irfft(rfft(x), n) - x))
        assert err < 1e-10, f"round trip error {err} at N={n}"


def test_round_trip_tight_at_128():
    rng = np.random.default_rng(2)
    x = rng.standard_normal(128)
    assert np.max(np.abs(irfft(rfft(x), 128) - x)) < 1e-12


def test_irfft_dc_spike_gives_constant_ones():
    n = 16
    spectrum = np.zeros(n // 2 + 1, dtype=complex)
    spectrum[0] = n
    np.testing.assert_allclose(irfft(spectrum, n), np.ones(n), atol=1e-13)


def test_parseval_identity():
    rng = np.random.default_rng(3)
    n = 256
    x = rng.standard_normal(n)
    spec = rfft(x)
    lhs = np.sum(x * x)
    rhs = (np.abs(spec[0]) ** 2 + 2 * np.sum(np.abs(spec[1:-1]) ** 2) + np.abs(spec[-1]) ** 2) / n
    assert abs(lhs - rhs) / abs(lhs) < 1e-9


def test_rfft_linearity():
    rng = np.random.default_rng(4)
    x = rng.standard_normal(64)
    y = rng.standard_normal(64)
    a, b = 2.5, -1.25
    np.testing.assert_allclose(rfft(a * x + b * y), a * rfft(x) + b * rfft(y), atol=1e-10)


def test_rfft_batched_last_axis():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((3, 2, 32))
    batched = rfft(x)
    for i in range(3):
        for j in range(2):
            np.testing.assert_allclose(batched[i, j], rfft(x[i, j]), atol=1e-12)


@pytest.mark.parametrize("n", [0, 1, 3, 12, 100])
def test_rfft_rejects_bad_lengths(n):
    with pytest.raises(InvalidSizeError):
        rfft(np.zeros(max(n, 1))[:n] if n else np.zeros(0))


def test_irfft_rejects_length_mismatch():
    with pytest.raises(InvalidSizeError):
        irfft(np.zeros(5, dtype=complex), 16)
    with pytest.raises(InvalidSizeError):
        irfft(np.zeros(4, dtype=complex), 12)


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------


def test_gelu_values():
    assert gelu(np.array(0.0)) == 0.0
    assert abs(gelu(np.array(10.0)) - 10.0) < 1e-6
    assert abs(gelu(np.array(1.0)) - 0.841345) < 1e-5


def test_gelu_grad_matches_finite_differences():
    x = np.linspace(-3, 3, 41)
    h = 1e-6
    numeric = (gelu(x + h) - gelu(x - h)) / (2 * h)
    np.testing.assert_allclose(gelu_grad(x), numeric, atol=1e-9)


def test_relu_basics():
    np.testing.assert_array_equal(relu(np.array([-1.0, 0.0, 2.0])), [0.0, 0.0, 2.0])
    x = np.array([0.5, 1.0, 7.0])
    np.testing.assert_array_equal(relu(x), x)
    np.testing.assert_array_equal(relu_grad(np.array([-1.0, 0.0, 2.0])), [0.0, 0.0, 1.0])


# ---------------------------------------------------------------------------
# affine
# ---------------------------------------------------------------------------


def test_affine_identity_passthrough():
    x = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(affine(x, np.eye(2), np.zeros(2)), x)


def test_affine_hand_product():
    y = affine(np.array([[1.0, 2.0]]), np.array([[1.0], [1.0]]), np.array([3.0]))
    np.testing.assert_array_equal(y, [[6.0]])


def test_affine_shape_mismatch():
    with pytest.raises(InvalidSizeError):
        affine(np.zeros((2, 3)), np.zeros((2, 4)), np.zeros(4))
    with pytest.raises(InvalidSizeError):
        affine(np.zeros((2, 3)), np.zeros((3, 4)), np.zeros(5))


def test_affine_backward_matches_finite_differences():
    rng = np.random.default_rng(6)
    x = rng.standard_normal((4, 3))
    target = rng.standard_normal((4, 2))
    params = {"w": rng.standard_normal((3, 2)), "b": rng.standard_normal(2)}

    def loss_and_grads(p):
        y = affine(x, p["w"], p["b"])
        g_y = mse_grad(y, target)
        _, g_w, g_b = affine_backward(x, p["w"], g_y)
        return mse(y, target), {"w": g_w, "b": g_b}

    assert grad_check(loss_and_grads, params, step=1e-6) < 1e-6


# ---------------------------------------------------------------------------
# mse
# ---------------------------------------------------------------------------


def test_mse_values_and_grad():
    assert mse(np.array([1.0, 2.0]), np.array([1.0, 2.0])) == 0.0
    assert mse(np.array([0.0, 2.0]), np.array([0.0, 0.0])) == 2.0
    np.testing.assert_array_equal(mse_grad(np.array([0.0, 2.0]), np.array([0.0, 0.0])), [0.0, 2.0])
    with pytest.raises(InvalidSizeError):
        mse(np.zeros(3), np.zeros(4))


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


def test_adam_first_step_magnitude():
    params = {"p": np.array([1.0])}
    state = AdamState.for_params(params)
    new_params, new_state = adam_update(params, {"p": np.array([1.0])}, state, lr=0.001)
    assert abs((params["p"][0] - new_params["p"][0]) - 0.001) < 1e-8
    assert new_state.t == 1


def test_adam_zero_gradient_is_identity():
    params = {"p": np.array([1.0, -2.0, 0.5])}
    state = AdamState.for_params(params)
    new_params, _ = adam_update(params, {"p": np.zeros(3)}, state, lr=0.01)
    np.testing.assert_array_equal(new_params["p"], params["p"])


def test_adam_matches_scripted_recurrence():
    lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8
    g = 0.7
    # independent scalar recurrence
    p_ref, m_ref, v_ref = 2.0, 0.0, 0.0
    for t in (1, 2):
        m_ref = b1 * m_ref + (1 - b1) * g
        v_ref = b2 * v_ref + (1 - b2) * g * g
        p_ref = p_ref - lr * (m_ref / (1 - b1**t)) / (np.sqrt(v_ref / (1 - b2**t)) + eps)

    params = {"p": np.array([2.0])}
    state = AdamState.for_params(params)
    for _ in range(2):
        params, state = adam_update(params, {"p": np.array([g])}, state, lr=lr)
    assert abs(params["p"][0] - p_ref) < 1e-12


def test_adam_lr_zero_leaves_params_bit_identical():
    rng = np.random.default_rng(7)
    params = {"p": rng.standard_normal(10)}
    state = AdamState.for_params(params)
    new_params, new_state = adam_update(params, {"p": rng.standard_normal(10)}, state, lr=0.0)
    assert np.array_equal(new_params["p"], params["p"])
    assert new_state.t == 1


def test_adam_rejects_non_finite_gradients():
    params = {"p": np.array([1.0])}
    state = AdamState.for_params(params)
    with pytest.raises(NonFiniteGradientError):
        adam_update(params, {"p": np.array([np.nan])}, state, lr=0.001)


# ---------------------------------------------------------------------------
# grad_check
# ---------------------------------------------------------------------------


def test_grad_check_quadratic_is_tight():
    rng = np.random.default_rng(8)
    params = {"p": rng.standard_normal(6)}

    def loss_and_grads(p):
        return 0.5 * float(np.sum(p["p"] ** 2)), {"p": p["p"].copy()}

    assert grad_check(loss_and_grads, params) < 1e-8


def test_grad_check_detects_wrong_gradient():
    params = {"p": np.array([1.0, 2.0])}

    def wrong(p):
        return 0.5 * float(np.sum(p["p"] ** 2)), {"p": 2.0 * p["p"]}

    assert grad_check(wrong, params) > 0.1


def test_grad_check_coordinate_subsampling():
    rng = np.random.default_rng(9)
    params = {"p": rng.standard_normal(100)}

    def loss_and_grads(p):
        return 0.5 * float(np.sum(p["p"] ** 2)), {"p": p["p"].copy()}

    assert grad_check(loss_and_grads, params, max_coords=5) < 1e-8
