"""Feed-forward baseline: five normalized parameters to two normalized outputs.

Hidden layers use ReLU; the output layer is affine with no activation so the
network can regress z-scored targets of either sign.
"""

from __future__ import annotations

import math

import numpy as np

from .numerics import InvalidSizeError, relu, relu_grad

DEFAULT_LAYER_SIZES = (5, 150, 300, 500, 300, 150, 2)


class MlpModel:
    """Weight/bias stacks for a ReLU feed-forward regressor."""

    def __init__(self, layer_sizes, params: dict[str, np.ndarray]):
        self.layer_sizes = tuple(int(s) for s in layer_sizes)
        if len(self.layer_sizes) < 2:
            raise InvalidSizeError("need at least an input and an output layer")
        self.params = params
        for i, (fan_in, fan_out) in enumerate(zip(self.layer_sizes, self.layer_sizes[1:])):
            if params[f"w{i}"].shape != (fan_in, fan_out):
                raise InvalidSizeError(
                    f"layer {i} weight shape {params[f'w{i}'].shape} != ({fan_in}, {fan_out})"
                )
            if params[f"b{i}"].shape != (fan_out,):
                raise InvalidSizeError(f"layer {i} bias shape {params[f'b{i}'].shape} != ({fan_out},)")

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes) - 1

    @classmethod
    def init(cls, layer_sizes=DEFAULT_LAYER_SIZES, seed: int = 0) -> "MlpModel":
        rng = np.random.default_rng(seed)
        params = {}
        for i, (fan_in, fan_out) in enumerate(zip(layer_sizes, tuple(layer_sizes)[1:])):
            bound = math.sqrt(6.0 / (fan_in + fan_out))
            params[f"w{i}"] = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            params[f"b{i}"] = np.zeros(fan_out)
        return cls(layer_sizes, params)

    def with_params(self, params: dict[str, np.ndarray]) -> "MlpModel":
        return MlpModel(self.layer_sizes, params)


def mlp_forward(model: MlpModel, x: np.ndarray, return_cache: bool = False):
    """Evaluate (batch, in) -> (batch, out); ReLU between layers, affine head."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.layer_sizes[0]:
        raise InvalidSizeError(f"expected (batch, {model.layer_sizes[0]}) input, got {x.shape}")
    activations = [x]
    pre_acts = []
    h = x
    for i in range(model.n_layers):
        pre = h @ model.params[f"w{i}"] + model.params[f"b{i}"]
        pre_acts.append(pre)
        h = relu(pre) if i < model.n_layers - 1 else pre
        activations.append(h)
    if return_cache:
        return h, {"activations": activations, "pre_acts": pre_acts}
    return h


def mlp_backward(model: MlpModel, cache: dict, grad_out: np.ndarray) -> dict[str, np.ndarray]:
    """Backpropagate d loss / d output to all weights and biases."""
    g = np.asarray(grad_out, dtype=np.float64)
    grads = {}
    for i in reversed(range(model.n_layers)):
        if i < model.n_layers - 1:
            g = g * relu_grad(cache["pre_acts"][i])
        h_in = cache["activations"][i]
        grads[f"w{i}"] = h_in.T @ g
        grads[f"b{i}"] = g.sum(axis=0)
        g = g @ model.params[f"w{i}"].T
    return grads
