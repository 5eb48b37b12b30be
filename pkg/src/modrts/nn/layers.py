"""Differentiable layers with explicit per-layer backward passes.

Each layer exposes:

  param_shapes()                       declared parameter shapes
  init_params(rng, dtype)              fresh parameters
  forward(x, params) -> (y, cache)     cache holds exactly what backward needs
  backward(gy, cache, params) -> (gx, param grads)

Initialization: scaled-uniform fan-in U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for
dense and conv weights, orthogonal for recurrent weights, zeros for biases.

Convolutions use im2col/col2im with explicit zero padding (pad = kernel//2);
the test suite pins the result against a direct-loop reference.
"""
from __future__ import annotations

import numpy as np

from .functional import relu, relu_grad, sigmoid, tanh

Params = dict[str, np.ndarray]


def uniform_fan_in(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int,
                   dtype) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def orthogonal(rng: np.random.Generator, shape: tuple[int, int], dtype) -> np.ndarray:
    a = rng.standard_normal(size=shape)
    q, r = np.linalg.qr(a if shape[0] >= shape[1] else a.T)
    q = q * np.sign(np.diag(r))  # fix sign ambiguity for reproducibility
    if shape[0] < shape[1]:
        q = q.T
    return q[: shape[0], : shape[1]].astype(dtype)


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return relu(z)
    if kind == "tanh":
        return tanh(z)
    if kind == "linear":
        return z
    raise ValueError(f"unknown activation {kind!r}")


def _activate_grad(gy: np.ndarray, z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return gy * relu_grad(z)
    if kind == "tanh":
        t = tanh(z)
        return gy * (1 - t * t)
    if kind == "linear":
        return gy
    raise ValueError(f"unknown activation {kind!r}")


class Dense:
    """Fully connected layer: y = act(x W + b), x of shape (batch, n_in)."""

    def __init__(self, n_in: int, n_out: int, activation: str = "linear"):
        self.n_in = n_in
        self.n_out = n_out
        self.activation = activation
        _activate(np.zeros(1), activation)  # validate the name eagerly

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        return {"W": (self.n_in, self.n_out), "b": (self.n_out,)}

    def init_params(self, rng: np.random.Generator, dtype=np.float32) -> Params:
        return {"W": uniform_fan_in(rng, (self.n_in, self.n_out), self.n_in, dtype),
                "b": np.zeros(self.n_out, dtype=dtype)}

    def out_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        if len(in_shape) != 1 or in_shape[0] != self.n_in:
            raise ValueError(f"dense expects ({self.n_in},), got {in_shape}")
        return (self.n_out,)

    def forward(self, x: np.ndarray, params: Params):
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ValueError(f"dense: expected (batch, {self.n_in}), got {x.shape}")
        z = x @ params["W"] + params["b"]
        return _activate(z, self.activation), (x, z)

    def backward(self, gy: np.ndarray, cache, params: Params):
        x, z = cache
        gz = _activate_grad(gy, z, self.activation)
        grads = {"W": x.T @ gz, "b": gz.sum(axis=0)}
        return gz @ params["W"].T, grads


class Conv2d:
    """2-D convolution on (batch, channels, height, width), same-style padding."""

    def __init__(self, c_in: int, c_out: int, kernel: int, stride: int = 1,
                 activation: str = "linear"):
        self.c_in = c_in
        self.c_out = c_out
        self.kernel = kernel
        self.stride = stride
        self.pad = kernel // 2
        self.activation = activation
        _activate(np.zeros(1), activation)

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        return {"W": (self.c_out, self.c_in, self.kernel, self.kernel),
                "b": (self.c_out,)}

    def init_params(self, rng: np.random.Generator, dtype=np.float32) -> Params:
        fan_in = self.c_in * self.kernel * self.kernel
        return {"W": uniform_fan_in(rng, (self.c_out, self.c_in, self.kernel,
                                          self.kernel), fan_in, dtype),
                "b": np.zeros(self.c_out, dtype=dtype)}

    def out_hw(self, h: int, w: int) -> tuple[int, int]:
        oh = (h + 2 * self.pad - self.kernel) // self.stride + 1
        ow = (w + 2 * self.pad - self.kernel) // self.stride + 1
        return oh, ow

    def out_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        if len(in_shape) != 3 or in_shape[0] != self.c_in:
            raise ValueError(f"conv expects ({self.c_in}, H, W), got {in_shape}")
        oh, ow = self.out_hw(in_shape[1], in_shape[2])
        return (self.c_out, oh, ow)

    def _im2col(self, x: np.ndarray) -> tuple[np.ndarray, tuple]:
        b, c, h, w = x.shape
        k, s, p = self.kernel, self.stride, self.pad
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        oh, ow = self.out_hw(h, w)
        windows = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
        windows = windows[:, :, ::s, ::s]  # (b, c, oh, ow, k, k)
        cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(b, oh * ow, c * k * k)
        return np.ascontiguousarray(cols), (b, c, h, w, oh, ow)

    def forward(self, x: np.ndarray, params: Params):
        if x.ndim != 4 or x.shape[1] != self.c_in:
            raise ValueError(f"conv: expected (batch, {self.c_in}, H, W), got {x.shape}")
        cols, dims = self._im2col(x)
        b, c, h, w, oh, ow = dims
        wmat = params["W"].reshape(self.c_out, -1)
        z = cols @ wmat.T + params["b"]  # (b, oh*ow, c_out)
        z = z.transpose(0, 2, 1).reshape(b, self.c_out, oh, ow)
        return _activate(z, self.activation), (cols, dims, z)

    def backward(self, gy: np.ndarray, cache, params: Params):
        cols, dims, z = cache
        b, c, h, w, oh, ow = dims
        k, s, p = self.kernel, self.stride, self.pad
        gz = _activate_grad(gy, z, self.activation)
        gz_flat = gz.reshape(b, self.c_out, oh * ow).transpose(0, 2, 1)
        wmat = params["W"].reshape(self.c_out, -1)
        grad_w = np.einsum("boc,bok->ck", gz_flat, cols).reshape(params["W"].shape)
        grad_b = gz_flat.sum(axis=(0, 1))
        gcols = gz_flat @ wmat  # (b, oh*ow, c*k*k)
        gcols = gcols.reshape(b, oh, ow, c, k, k).transpose(0, 3, 1, 2, 4, 5)
        gx_pad = np.zeros((b, c, h + 2 * p, w + 2 * p), dtype=gy.dtype)
        for ki in range(k):  # col2im scatter-add, one tap at a time
            for kj in range(k):
                gx_pad[:, :, ki:ki + oh * s:s, kj:kj + ow * s:s] += gcols[:, :, :, :, ki, kj]
        gx = gx_pad[:, :, p:p + h, p:p + w]
        return gx, {"W": grad_w, "b": grad_b}


class Flatten:
    """(batch, *dims) -> (batch, prod(dims))."""

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        return {}

    def init_params(self, rng, dtype=np.float32) -> Params:
        return {}

    def out_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        return (int(np.prod(in_shape)),)

    def forward(self, x: np.ndarray, params: Params):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, gy: np.ndarray, cache, params: Params):
        return gy.reshape(cache), {}


class LSTM:
    """Single-layer LSTM over a sequence: (T, batch, n_in) -> (T, batch, hidden).

    Gate layout along the last parameter axis is [input, forget, cell, output].
    ``forward`` takes and returns the recurrent state (h, c), so stepwise
    inference is just T=1 calls threading the state through.
    """

    def __init__(self, n_in: int, n_hidden: int):
        self.n_in = n_in
        self.n_hidden = n_hidden

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        return {"Wx": (self.n_in, 4 * self.n_hidden),
                "Wh": (self.n_hidden, 4 * self.n_hidden),
                "b": (4 * self.n_hidden,)}

    def init_params(self, rng: np.random.Generator, dtype=np.float32) -> Params:
        wh = np.concatenate(
            [orthogonal(rng, (self.n_hidden, self.n_hidden), dtype) for _ in range(4)],
            axis=1)
        return {"Wx": uniform_fan_in(rng, (self.n_in, 4 * self.n_hidden),
                                     self.n_in, dtype),
                "Wh": wh,
                "b": np.zeros(4 * self.n_hidden, dtype=dtype)}

    def out_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        if len(in_shape) != 1 or in_shape[0] != self.n_in:
            raise ValueError(f"lstm expects ({self.n_in},), got {in_shape}")
        return (self.n_hidden,)

    def zero_state(self, batch: int, dtype=np.float32):
        return (np.zeros((batch, self.n_hidden), dtype=dtype),
                np.zeros((batch, self.n_hidden), dtype=dtype))

    def forward(self, x: np.ndarray, params: Params, state=None):
        if x.ndim != 3 or x.shape[2] != self.n_in:
            raise ValueError(f"lstm: expected (T, batch, {self.n_in}), got {x.shape}")
        t_len, batch, _ = x.shape
        h, c = state if state is not None else self.zero_state(batch, x.dtype)
        nh = self.n_hidden
        hs = np.empty((t_len, batch, nh), dtype=x.dtype)
        steps = []
        for t in range(t_len):
            gates = x[t] @ params["Wx"] + h @ params["Wh"] + params["b"]
            i = sigmoid(gates[:, :nh])
            f = sigmoid(gates[:, nh:2 * nh])
            g = tanh(gates[:, 2 * nh:3 * nh])
            o = sigmoid(gates[:, 3 * nh:])
            c_new = f * c + i * g
            tc = tanh(c_new)
            h_new = o * tc
            steps.append((x[t], h, c, i, f, g, o, c_new, tc))
            h, c = h_new, c_new
            hs[t] = h
        return hs, (steps,), (h, c)

    def backward(self, gy: np.ndarray, cache, params: Params):
        (steps,) = cache
        nh = self.n_hidden
        t_len = len(steps)
        gx = np.empty((t_len, gy.shape[1], self.n_in), dtype=gy.dtype)
        grads = {k: np.zeros_like(params[k]) for k in ("Wx", "Wh", "b")}
        dh_next = np.zeros((gy.shape[1], nh), dtype=gy.dtype)
        dc_next = np.zeros_like(dh_next)
        for t in range(t_len - 1, -1, -1):
            xt, h_prev, c_prev, i, f, g, o, c_new, tc = steps[t]
            dh = gy[t] + dh_next
            do = dh * tc
            dc = dh * o * (1 - tc * tc) + dc_next
            di = dc * g
            df = dc * c_prev
            dg = dc * i
            dgates = np.concatenate(
                [di * i * (1 - i), df * f * (1 - f), dg * (1 - g * g),
                 do * o * (1 - o)], axis=1)
            grads["Wx"] += xt.T @ dgates
            grads["Wh"] += h_prev.T @ dgates
            grads["b"] += dgates.sum(axis=0)
            gx[t] = dgates @ params["Wx"].T
            dh_next = dgates @ params["Wh"].T
            dc_next = dc * f
        return gx, grads
