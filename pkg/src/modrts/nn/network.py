"""Sequential network container with shape validation and named parameters.

Parameters live in a flat dict keyed "<layer name>.<param>"; forward returns
the caches needed for an exact backward pass. At most one LSTM layer is
supported per network (sufficient for every architecture shipped here), and
its state is threaded through forward/backward explicitly.
"""
from __future__ import annotations

import numpy as np

from .layers import LSTM, Conv2d, Dense, Flatten, Params

Layer = Dense | Conv2d | Flatten | LSTM


class SpecError(ValueError):
    """Incompatible layer shapes; message names the offending layer."""


class Sequential:
    def __init__(self, layers: list[tuple[str, Layer]], input_shape: tuple[int, ...]):
        names = [n for n, _ in layers]
        if len(set(names)) != len(names):
            raise SpecError(f"duplicate layer names in {names}")
        if sum(isinstance(l, LSTM) for _, l in layers) > 1:
            raise SpecError("at most one LSTM layer per network")
        self.layers = list(layers)
        self.input_shape = tuple(input_shape)
        shape = self.input_shape
        for name, layer in layers:
            try:
                shape = layer.out_shape(shape)
            except ValueError as exc:
                raise SpecError(f"layer {name!r}: {exc}") from exc
        self.output_shape = shape

    @property
    def lstm(self) -> tuple[str, LSTM] | None:
        for name, layer in self.layers:
            if isinstance(layer, LSTM):
                return name, layer
        return None

    def init_params(self, rng: np.random.Generator, dtype=np.float32) -> Params:
        params: Params = {}
        for name, layer in self.layers:
            for key, value in layer.init_params(rng, dtype).items():
                params[f"{name}.{key}"] = value
        return params

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        shapes = {}
        for name, layer in self.layers:
            for key, shape in layer.param_shapes().items():
                shapes[f"{name}.{key}"] = shape
        return shapes

    def _layer_params(self, params: Params, name: str) -> Params:
        prefix = f"{name}."
        return {k[len(prefix):]: v for k, v in params.items() if k.startswith(prefix)}

    def forward(self, x: np.ndarray, params: Params, state=None):
        """Returns (output, caches, new_state); state is None without an LSTM."""
        caches = []
        out_state = None
        for name, layer in self.layers:
            lp = self._layer_params(params, name)
            try:
                if isinstance(layer, LSTM):
                    x, cache, out_state = layer.forward(x, lp, state)
                else:
                    x, cache = layer.forward(x, lp)
            except ValueError as exc:
                raise SpecError(f"layer {name!r}: {exc}") from exc
            caches.append(cache)
        return x, caches, out_state

    def backward(self, gy: np.ndarray, caches: list, params: Params):
        """Returns (input gradient, parameter gradients keyed like params)."""
        if len(caches) != len(self.layers):
            raise SpecError(f"cache mismatch: {len(caches)} caches for "
                            f"{len(self.layers)} layers")
        grads: Params = {}
        for (name, layer), cache in zip(reversed(self.layers), reversed(caches)):
            lp = self._layer_params(params, name)
            gy, layer_grads = layer.backward(gy, cache, lp)
            for key, g in layer_grads.items():
                grads[f"{name}.{key}"] = g
        return gy, grads


def zeros_like_params(params: Params) -> Params:
    return {k: np.zeros_like(v) for k, v in params.items()}


def add_params(into: Params, delta: Params, scale: float = 1.0) -> None:
    for k in delta:
        into[k] += scale * delta[k]


def clone_params(params: Params) -> Params:
    return {k: v.copy() for k, v in params.items()}


def params_close(a: Params, b: Params) -> bool:
    return (a.keys() == b.keys()
            and all(np.array_equal(a[k], b[k]) for k in a))
