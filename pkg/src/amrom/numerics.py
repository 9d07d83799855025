"""Dense array numerics shared by both surrogate models.

Everything here operates on plain ``numpy`` float64/complex128 arrays and is a
pure function of its inputs.  The FFT is a hand-rolled iterative radix-2
transform restricted to power-of-two lengths: the forward transform is
unnormalized and the inverse carries the 1/N factor, so
``irfft(rfft(x), len(x)) == x``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

_SQRT_2PI = float(np.sqrt(2.0 * np.pi))


class InvalidSizeError(ValueError):
    """Array sizes are inconsistent or not supported by an operation."""


class NonFiniteGradientError(FloatingPointError):
    """A gradient passed to the optimizer contains NaN or infinity."""


# ---------------------------------------------------------------------------
# radix-2 FFT
# ---------------------------------------------------------------------------

_bitrev_cache: dict[int, np.ndarray] = {}
_twiddle_cache: dict[int, np.ndarray] = {}


def _require_pow2(n: int) -> None:
    if n < 2 or (n & (n - 1)) != 0:
        raise InvalidSizeError(f"transform length must be a power of two >= 2, got {n}")


def _bit_reversal(n: int) -> np.ndarray:
    perm = _bitrev_cache.get(n)
    if perm is None:
        bits = n.bit_length() - 1
        idx = np.arange(n, dtype=np.intp)
        perm = np.zeros(n, dtype=np.intp)
        for b in range(bits):
            perm = (perm << 1) | ((idx >> b) & 1)
        _bitrev_cache[n] = perm
    return perm


def _twiddles(size: int) -> np.ndarray:
    w = _twiddle_cache.get(size)
    if w is None:
        k = np.arange(size // 2)
        w = np.exp(-2j * np.pi * k / size)
        _twiddle_cache[size] = w
    return w


def _fft_pow2(x: np.ndarray) -> np.ndarray:
    """Unnormalized forward FFT along the last axis (length a power of two)."""
    n = x.shape[-1]
    out = np.ascontiguousarray(x[..., _bit_reversal(n)], dtype=np.complex128)
    size = 2
    while size <= n:
        half = size // 2
        w = _twiddles(size)
        v = out.reshape(out.shape[:-1] + (n // size, size))
        a = v[..., :half].copy()
        b = v[..., half:] * w
        v[..., :half] = a + b
        v[..., half:] = a - b
        size *= 2
    return out


def rfft(x: np.ndarray) -> np.ndarray:
    """DFT of a real signal along the last axis; returns the N/2+1 nonnegative modes.

    Entry k is sum_n x[n] * exp(-2j*pi*k*n/N) (no normalization).
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    _require_pow2(n)
    return _fft_pow2(x.astype(np.complex128))[..., : n // 2 + 1]


def irfft(spectrum: np.ndarray, n: int) -> np.ndarray:
    """Inverse of :func:`rfft` with the 1/N normalization.

    The imaginary parts of the DC and Nyquist entries are discarded, so any
    spectrum is mapped to a real signal of length ``n``.
    """
    spectrum = np.asarray(spectrum, dtype=np.complex128)
    _require_pow2(n)
    if spectrum.shape[-1] != n // 2 + 1:
        raise InvalidSizeError(
            f"expected {n // 2 + 1} spectrum entries for length {n}, got {spectrum.shape[-1]}"
        )
    full = np.empty(spectrum.shape[:-1] + (n,), dtype=np.complex128)
    full[..., : n // 2 + 1] = spectrum
    full[..., 0] = spectrum[..., 0].real
    full[..., n // 2] = spectrum[..., n // 2].real
    full[..., n // 2 + 1 :] = np.conj(full[..., 1 : n // 2][..., ::-1])
    # inverse via the conjugation identity: ifft(X) = conj(fft(conj(X))) / N
    return np.conj(_fft_pow2(np.conj(full))).real / n


# ---------------------------------------------------------------------------
# activations and loss
# ---------------------------------------------------------------------------


def gelu(x: np.ndarray) -> np.ndarray:
    """x * Phi(x) with Phi the exact standard normal CDF."""
    x = np.asarray(x, dtype=np.float64)
    return x * ndtr(x)


def gelu_grad(x: np.ndarray) -> np.ndarray:
    """Derivative Phi(x) + x * phi(x)."""
    x = np.asarray(x, dtype=np.float64)
    return ndtr(x) + x * np.exp(-0.5 * x * x) / _SQRT_2PI


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def relu_grad(x: np.ndarray) -> np.ndarray:
    """Subgradient with the tie relu_grad(0) = 0."""
    return (np.asarray(x, dtype=np.float64) > 0.0).astype(np.float64)


def affine(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """y = x @ weights + bias for a (batch, in) input."""
    x = np.asarray(x, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if x.ndim != 2 or weights.ndim != 2 or x.shape[1] != weights.shape[0]:
        raise InvalidSizeError(f"affine shapes do not conform: {x.shape} @ {weights.shape}")
    if bias.shape != (weights.shape[1],):
        raise InvalidSizeError(f"bias shape {bias.shape} does not match output width {weights.shape[1]}")
    return x @ weights + bias


def affine_backward(
    x: np.ndarray, weights: np.ndarray, grad_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients (d_x, d_weights, d_bias) of an affine layer."""
    grad_out = np.asarray(grad_out, dtype=np.float64)
    return grad_out @ weights.T, x.T @ grad_out, grad_out.sum(axis=0)


def mse(pred: np.ndarray, target: np.ndarray) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise InvalidSizeError(f"mse shapes differ: {pred.shape} vs {target.shape}")
    diff = pred - target
    return float(np.mean(diff * diff))


def mse_grad(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    """d mse / d pred = 2 (pred - target) / count."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise InvalidSizeError(f"mse shapes differ: {pred.shape} vs {target.shape}")
    return 2.0 * (pred - target) / pred.size


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    """First/second moment buffers and the step counter of the Adam recurrence."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
            t=0,
        )


def adam_update(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam step; returns fresh parameter and state dicts."""
    if lr < 0:
        raise ValueError("learning rate must be >= 0")
    if set(params) != set(grads):
        raise InvalidSizeError("parameter and gradient dictionaries have different keys")
    t = state.t + 1
    # fold the bias corrections into scalars: m_hat/(sqrt(v_hat)+eps) equals
    # (sqrt(bc2)/bc1) * m / (sqrt(v) + eps*sqrt(bc2)) with bc = 1 - beta^t
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    step_scale = lr * np.sqrt(bc2) / bc1
    eps_t = eps * np.sqrt(bc2)
    new_params: dict[str, np.ndarray] = {}
    new_m: dict[str, np.ndarray] = {}
    new_v: dict[str, np.ndarray] = {}
    for key, p in params.items():
        g = grads[key]
        if g.shape != p.shape:
            raise InvalidSizeError(f"gradient shape {g.shape} != parameter shape {p.shape} for {key!r}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"non-finite gradient for parameter {key!r}")
        m = beta1 * state.m[key]
        m += (1.0 - beta1) * g
        v = beta2 * state.v[key]
        squared = g * g
        squared *= 1.0 - beta2
        v += squared
        denom = np.sqrt(v)
        denom += eps_t
        update = m / denom
        update *= step_scale
        new_params[key] = p - update
        new_m[key] = m
        new_v[key] = v
    return new_params, AdamState(m=new_m, v=new_v, t=t)


# ---------------------------------------------------------------------------
# finite-difference gradient checking
# ---------------------------------------------------------------------------


def grad_check(
    loss_and_grads,
    params: dict[str, np.ndarray],
    step: float = 1e-5,
    max_coords: int | None = None,
    seed: int = 0,
) -> float:
    """Compare analytic gradients to central finite differences.

    ``loss_and_grads(params) -> (loss, grads)`` must be deterministic.  When a
    parameter array has more entries than ``max_coords``, a seeded random
    subset of coordinates is probed.  Returns the maximum of
    |analytic - numeric| / max(1, |analytic|, |numeric|) over probed entries.
    """
    _, analytic = loss_and_grads(params)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for key in sorted(params):
        p = params[key]
        flat_idx = np.arange(p.size)
        if max_coords is not None and p.size > max_coords:
            flat_idx = np.sort(rng.choice(p.size, size=max_coords, replace=False))
        a_flat = analytic[key].ravel()
        for idx in flat_idx:
            probe = dict(params)
            bumped = p.copy().ravel()
            bumped[idx] += step
            probe[key] = bumped.reshape(p.shape)
            loss_plus, _ = loss_and_grads(probe)
            bumped = p.copy().ravel()
            bumped[idx] -= step
            probe[key] = bumped.reshape(p.shape)
            loss_minus, _ = loss_and_grads(probe)
            numeric = (loss_plus - loss_minus) / (2.0 * step)
            a = float(a_flat[idx])
            err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            worst = max(worst, err)
    return worst
