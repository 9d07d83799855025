"""1-D Fourier neural operator with hand-derived reverse-mode gradients.

The operator lifts a multi-channel input function sampled on a uniform grid
to ``width`` hidden channels, applies ``n_layers`` Fourier layers
(per-grid-point affine map plus a spectral convolution, through a GeLU), and
projects back to the output channels through one hidden affine/GeLU stage.

The spectral convolution keeps only the lowest ``n_modes`` frequencies: per
retained mode k the channel vector of Fourier coefficients is multiplied by a
learned complex matrix.  It is computed with precomputed truncated DFT /
synthesis matrices, which is algebraically identical to "forward real FFT,
multiply the first n_modes coefficients, zero the rest, inverse FFT" under
this package's FFT convention (unnormalized forward, 1/N inverse) but runs as
plain matrix products.  ``tests/test_fno.py`` pins the equivalence against
the :mod:`amrom.numerics` FFT route.

Internally activations are stored as (batch * grid, channels) so the
per-point affine maps are single matrix products; spectral weights are stored
as separate real/imaginary float64 arrays so the optimizer treats them as
independent real parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .numerics import InvalidSizeError

_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class FnoConfig:
    """Architecture of the operator; ``grid_n`` is the training grid length."""

    n_layers: int = 4
    n_modes: int = 5
    width: int = 64
    grid_n: int = 256
    in_channels: int = 6
    out_channels: int = 2

    def __post_init__(self):
        for name in ("n_layers", "n_modes", "width", "grid_n", "in_channels", "out_channels"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.grid_n & (self.grid_n - 1) != 0:
            raise ValueError(f"grid_n must be a power of two, got {self.grid_n}")
        if self.n_modes > self.grid_n // 2 + 1:
            raise ValueError(
                f"n_modes={self.n_modes} exceeds grid_n/2+1={self.grid_n // 2 + 1}"
            )

    def to_dict(self) -> dict:
        return {
            "n_layers": self.n_layers,
            "n_modes": self.n_modes,
            "width": self.width,
            "grid_n": self.grid_n,
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "FnoConfig":
        return cls(**{k: int(raw[k]) for k in cls().to_dict()})


# truncated DFT matrices per (grid length, retained modes); see module docstring.
# Both orientations are cached contiguously: numpy's batched matmul drops off
# the BLAS fast path (30x slower) when an operand is a strided transpose view.
_dft_cache: dict[tuple[int, int], tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = {}


def _dft_matrices(n: int, modes: int):
    """(forward, forward_t, back, back_t): analysis/synthesis matrices and transposes."""
    if n & (n - 1) != 0 or n < 2:
        raise InvalidSizeError(f"grid length must be a power of two >= 2, got {n}")
    if modes > n // 2 + 1:
        raise InvalidSizeError(f"{modes} modes do not fit a grid of {n} points")
    key = (n, modes)
    cached = _dft_cache.get(key)
    if cached is None:
        j = np.arange(n)[:, None]
        k = np.arange(modes)[None, :]
        angle = 2.0 * np.pi * j * k / n
        # analysis: X = x @ forward gives [Re | Im] of the unnormalized DFT
        forward = np.concatenate([np.cos(angle), -np.sin(angle)], axis=1)
        # synthesis: y = [Re | Im] @ back inverts with the 1/n factor, doubling
        # shared conjugate modes and dropping the imaginary parts of the
        # DC/Nyquist entries (their sine rows are identically zero)
        weights = np.full(modes, 2.0)
        weights[0] = 1.0
        if modes - 1 == n // 2:
            weights[-1] = 1.0
        back = np.concatenate(
            [weights[:, None] * np.cos(angle.T) / n, -weights[:, None] * np.sin(angle.T) / n],
            axis=0,
        )
        cached = tuple(
            np.ascontiguousarray(mat) for mat in (forward, forward.T, back, back.T)
        )
        _dft_cache[key] = cached
    return cached


class FnoModel:
    """Weights for the lift, Fourier layers, and projection."""

    def __init__(self, config: FnoConfig, params: dict[str, np.ndarray]):
        self.config = config
        self.params = params
        expected = set(self.param_shapes(config))
        if set(params) != expected:
            raise InvalidSizeError(f"parameter keys {sorted(params)} != expected {sorted(expected)}")
        for key, shape in self.param_shapes(config).items():
            if params[key].shape != shape:
                raise InvalidSizeError(f"parameter {key!r} has shape {params[key].shape}, expected {shape}")

    @staticmethod
    def param_shapes(config: FnoConfig) -> dict[str, tuple]:
        w, m = config.width, config.n_modes
        shapes = {
            "lift_w": (config.in_channels, w),
            "lift_b": (w,),
            "proj_hidden_w": (w, w),
            "proj_hidden_b": (w,),
            "proj_out_w": (w, config.out_channels),
            "proj_out_b": (config.out_channels,),
        }
        for i in range(config.n_layers):
            shapes[f"spectral{i}_re"] = (m, w, w)
            shapes[f"spectral{i}_im"] = (m, w, w)
            shapes[f"point{i}_w"] = (w, w)
            shapes[f"point{i}_b"] = (w,)
        return shapes

    @classmethod
    def init(cls, config: FnoConfig, seed: int) -> "FnoModel":
        """Seeded initialization: Xavier-uniform affine maps, small uniform spectra."""
        rng = np.random.default_rng(seed)

        def xavier(fan_in, fan_out):
            bound = math.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-bound, bound, size=(fan_in, fan_out))

        w, m = config.width, config.n_modes
        spectral_scale = 1.0 / (w * w)
        params = {"lift_w": xavier(config.in_channels, w), "lift_b": np.zeros(w)}
        for i in range(config.n_layers):
            params[f"spectral{i}_re"] = rng.uniform(0.0, spectral_scale, size=(m, w, w))
            params[f"spectral{i}_im"] = rng.uniform(0.0, spectral_scale, size=(m, w, w))
            params[f"point{i}_w"] = xavier(w, w)
            params[f"point{i}_b"] = np.zeros(w)
        params["proj_hidden_w"] = xavier(w, w)
        params["proj_hidden_b"] = np.zeros(w)
        params["proj_out_w"] = xavier(w, config.out_channels)
        params["proj_out_b"] = np.zeros(config.out_channels)
        return cls(config, params)

    def spectral_weights(self, layer: int) -> np.ndarray:
        """Complex (n_modes, width, width) view of one layer's spectral weights."""
        return self.params[f"spectral{layer}_re"] + 1j * self.params[f"spectral{layer}_im"]

    def with_params(self, params: dict[str, np.ndarray]) -> "FnoModel":
        return FnoModel(self.config, params)


def encode_input(norm_params: np.ndarray, grid_n: int) -> np.ndarray:
    """Broadcast normalized parameters to constant channels plus a coordinate ramp.

    Returns (batch, 6, grid_n): channels 0-4 hold the five parameter values,
    channel 5 is the grid coordinate, linearly spaced over [0, 1] inclusive.
    """
    norm_params = np.atleast_2d(np.asarray(norm_params, dtype=np.float64))
    if norm_params.shape[1] != 5:
        raise InvalidSizeError(f"expected 5 parameter columns, got {norm_params.shape[1]}")
    batch = norm_params.shape[0]
    fields = np.empty((batch, 6, grid_n), dtype=np.float64)
    fields[:, :5, :] = norm_params[:, :, None]
    fields[:, 5, :] = np.linspace(0.0, 1.0, grid_n)
    return fields


def _spectral_forward(q3: np.ndarray, r_re: np.ndarray, r_im: np.ndarray):
    """Spectral convolution on (batch, grid, channels); returns output and cache."""
    _, n, _ = q3.shape
    modes = r_re.shape[0]
    _, forward_t, _, back_t = _dft_matrices(n, modes)
    spec = np.matmul(forward_t, q3)                       # (batch, 2m, c)
    q_re = np.ascontiguousarray(spec[:, :modes].transpose(1, 2, 0))   # (m, c, batch)
    q_im = np.ascontiguousarray(spec[:, modes:].transpose(1, 2, 0))
    y_re = np.matmul(r_re, q_re) - np.matmul(r_im, q_im)  # (m, c, batch)
    y_im = np.matmul(r_re, q_im) + np.matmul(r_im, q_re)
    y2 = np.empty((q3.shape[0], 2 * modes, q3.shape[2]))
    y2[:, :modes] = y_re.transpose(2, 0, 1)
    y2[:, modes:] = y_im.transpose(2, 0, 1)
    out = np.matmul(back_t, y2)                           # (batch, n, c)
    return out, (q_re, q_im)


def _spectral_backward(grad3: np.ndarray, r_re, r_im, cache):
    """Adjoint of :func:`_spectral_forward`; returns (grad_q3, grad_r_re, grad_r_im)."""
    q_re, q_im = cache
    _, n, _ = grad3.shape
    modes = r_re.shape[0]
    forward, _, back, _ = _dft_matrices(n, modes)
    g_spec = np.matmul(back, grad3)                       # (batch, 2m, c)
    g_yre = np.ascontiguousarray(g_spec[:, :modes].transpose(1, 2, 0))  # (m, c, batch)
    g_yim = np.ascontiguousarray(g_spec[:, modes:].transpose(1, 2, 0))
    q_re_t = np.ascontiguousarray(q_re.transpose(0, 2, 1))
    q_im_t = np.ascontiguousarray(q_im.transpose(0, 2, 1))
    g_rre = np.matmul(g_yre, q_re_t) + np.matmul(g_yim, q_im_t)
    g_rim = np.matmul(g_yim, q_re_t) - np.matmul(g_yre, q_im_t)
    rt_re = np.ascontiguousarray(r_re.transpose(0, 2, 1))
    rt_im = np.ascontiguousarray(r_im.transpose(0, 2, 1))
    g_qre = np.matmul(rt_re, g_yre) + np.matmul(rt_im, g_yim)
    g_qim = np.matmul(rt_re, g_yim) - np.matmul(rt_im, g_yre)
    g_q2 = np.empty((grad3.shape[0], 2 * modes, grad3.shape[2]))
    g_q2[:, :modes] = g_qre.transpose(2, 0, 1)
    g_q2[:, modes:] = g_qim.transpose(2, 0, 1)
    grad_q3 = np.matmul(forward, g_q2)                    # (batch, n, c)
    return grad_q3, g_rre, g_rim


def spectral_conv(q: np.ndarray, r_weights: np.ndarray) -> np.ndarray:
    """Mode-truncated spectral convolution of (channels, grid) or (batch, channels, grid).

    ``r_weights`` is complex with shape (n_modes, channels, channels); modes at
    or above n_modes are filtered out.
    """
    q = np.asarray(q, dtype=np.float64)
    single = q.ndim == 2
    q3 = (q[None] if single else q).transpose(0, 2, 1)
    r_weights = np.asarray(r_weights, dtype=np.complex128)
    if r_weights.ndim != 3 or r_weights.shape[1] != r_weights.shape[2] or r_weights.shape[1] != q3.shape[2]:
        raise InvalidSizeError(
            f"spectral weights shape {r_weights.shape} does not match {q3.shape[2]} channels"
        )
    out, _ = _spectral_forward(q3, np.ascontiguousarray(r_weights.real), np.ascontiguousarray(r_weights.imag))
    out = out.transpose(0, 2, 1)
    return out[0] if single else out


def fourier_layer(q: np.ndarray, r_weights: np.ndarray, point_w: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """One update gelu(W q + b + spectral_conv(q, R)) on (channels, grid) data."""
    q = np.asarray(q, dtype=np.float64)
    pre = np.asarray(point_w, dtype=np.float64).T @ q + np.asarray(bias)[:, None]
    pre = pre + spectral_conv(q, r_weights)
    return pre * ndtr(pre)


def fno_forward(model: FnoModel, fields: np.ndarray, return_cache: bool = False):
    """Evaluate the operator on (batch, in_channels, grid) fields.

    The grid length may differ from the training ``config.grid_n`` as long as
    it is a power of two with at least ``2 * n_modes`` points; the spectral
    weights act on the same low modes at any resolution.
    """
    cfg = model.config
    fields = np.asarray(fields, dtype=np.float64)
    if fields.ndim != 3 or fields.shape[1] != cfg.in_channels:
        raise InvalidSizeError(
            f"expected (batch, {cfg.in_channels}, grid) input, got {fields.shape}"
        )
    batch, _, n = fields.shape
    if n != cfg.grid_n:
        if n & (n - 1) != 0 or n < 2 * cfg.n_modes:
            raise InvalidSizeError(
                f"evaluation grid {n} must be a power of two with at least {2 * cfg.n_modes} points"
            )
    p = model.params
    x2 = np.ascontiguousarray(fields.transpose(0, 2, 1)).reshape(batch * n, cfg.in_channels)
    q = x2 @ p["lift_w"] + p["lift_b"]
    layers = []
    for i in range(cfg.n_layers):
        q3 = q.reshape(batch, n, cfg.width)
        spec, spec_cache = _spectral_forward(q3, p[f"spectral{i}_re"], p[f"spectral{i}_im"])
        pre = q @ p[f"point{i}_w"]
        pre += p[f"point{i}_b"]
        pre += spec.reshape(batch * n, cfg.width)
        cdf = ndtr(pre)
        layers.append((q, pre, cdf, spec_cache))
        q = pre * cdf
    hidden_pre = q @ p["proj_hidden_w"] + p["proj_hidden_b"]
    hidden_cdf = ndtr(hidden_pre)
    hidden = hidden_pre * hidden_cdf
    out2 = hidden @ p["proj_out_w"] + p["proj_out_b"]
    out = out2.reshape(batch, n, cfg.out_channels).transpose(0, 2, 1).copy()
    if not return_cache:
        return out
    cache = {
        "batch": batch,
        "n": n,
        "x2": x2,
        "layers": layers,
        "last_q": q,
        "hidden_pre": hidden_pre,
        "hidden_cdf": hidden_cdf,
        "hidden": hidden,
    }
    return out, cache


def _gelu_grad_from_cdf(pre: np.ndarray, cdf: np.ndarray) -> np.ndarray:
    out = pre * pre
    out *= -0.5
    np.exp(out, out=out)
    out *= pre
    out /= _SQRT_2PI
    out += cdf
    return out


def fno_backward(model: FnoModel, cache: dict, grad_out: np.ndarray) -> dict[str, np.ndarray]:
    """Parameter gradients given the forward cache and d loss / d output fields."""
    cfg = model.config
    p = model.params
    batch, n = cache["batch"], cache["n"]
    g2 = np.ascontiguousarray(np.asarray(grad_out, dtype=np.float64).transpose(0, 2, 1)).reshape(
        batch * n, cfg.out_channels
    )
    grads: dict[str, np.ndarray] = {}
    grads["proj_out_w"] = cache["hidden"].T @ g2
    grads["proj_out_b"] = g2.sum(axis=0)
    g_hidden = g2 @ p["proj_out_w"].T
    g_hpre = g_hidden * _gelu_grad_from_cdf(cache["hidden_pre"], cache["hidden_cdf"])
    grads["proj_hidden_w"] = cache["last_q"].T @ g_hpre
    grads["proj_hidden_b"] = g_hpre.sum(axis=0)
    g_q = g_hpre @ p["proj_hidden_w"].T
    for i in reversed(range(cfg.n_layers)):
        q_in, pre, cdf, spec_cache = cache["layers"][i]
        g_pre = g_q * _gelu_grad_from_cdf(pre, cdf)
        grads[f"point{i}_w"] = q_in.T @ g_pre
        grads[f"point{i}_b"] = g_pre.sum(axis=0)
        g_spec3, g_rre, g_rim = _spectral_backward(
            g_pre.reshape(batch, n, cfg.width),
            p[f"spectral{i}_re"],
            p[f"spectral{i}_im"],
            spec_cache,
        )
        grads[f"spectral{i}_re"] = g_rre
        grads[f"spectral{i}_im"] = g_rim
        g_q = g_pre @ p[f"point{i}_w"].T
        g_q += g_spec3.reshape(batch * n, cfg.width)
    grads["lift_w"] = cache["x2"].T @ g_q
    grads["lift_b"] = g_q.sum(axis=0)
    return grads


def readout_scalar(out_fields: np.ndarray) -> np.ndarray:
    """Grid mean per channel: (batch, channels, grid) -> (batch, channels)."""
    out_fields = np.asarray(out_fields, dtype=np.float64)
    return out_fields.mean(axis=-1)


def resample_grid(model: FnoModel, norm_params: np.ndarray, grid_n: int) -> np.ndarray:
    """Re-encode the parameters on ``grid_n`` points and evaluate the same weights."""
    if grid_n & (grid_n - 1) != 0 or grid_n < 2 * model.config.n_modes:
        raise InvalidSizeError(
            f"grid {grid_n} must be a power of two with at least {2 * model.config.n_modes} points"
        )
    return fno_forward(model, encode_input(norm_params, grid_n))
