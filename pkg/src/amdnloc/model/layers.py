"""Minimal feed-forward layers with hand-written backward passes.

Everything is plain numpy with a fixed operation order, so a fixed seed
reproduces training bit-for-bit.  Parameters carry their own gradient
buffer and moment estimates; layers cache what their backward pass
needs during forward.

Convolutions run channels-last (N, H, W, C) internally: im2col windows
then copy in long contiguous runs, which is where the cycles go at
these sizes (the GEMMs themselves are small).
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class Param:
    """One trainable tensor plus its gradient and optimizer slots."""

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = value
        self.grad = np.zeros_like(value)
        self.m = np.zeros_like(value)
        self.v = np.zeros_like(value)
        self.t = 0
        self.touched = False

    def zero_grad(self):
        self.grad[...] = 0.0
        self.touched = False


def xavier_uniform(shape, fan_in: int, fan_out: int,
                   rng: np.random.Generator, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def adam_step(params, lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8):
    """Update every parameter that received gradient this step.

    Untouched parameters (heads whose region was absent from the batch)
    keep their values, moments and step counters bit-exactly.
    """
    for p in params:
        if not p.touched:
            continue
        p.t += 1
        p.m *= beta1
        p.m += (1.0 - beta1) * p.grad
        p.v *= beta2
        p.v += (1.0 - beta2) * (p.grad * p.grad)
        m_hat = p.m / (1.0 - beta1 ** p.t)
        v_hat = p.v / (1.0 - beta2 ** p.t)
        p.value -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.value.dtype)


class Conv2d:
    """Strided convolution on channels-last input via im2col + GEMM.

    Weight keeps the conventional (C_out, C_in, k, k) shape; the
    flattened GEMM operand is ordered (k, k, C_in) to match the
    channels-last window memory layout.
    """

    def __init__(self, name, in_channels, out_channels, kernel, stride,
                 padding, rng, dtype):
        fan_in = in_channels * kernel * kernel
        fan_out = out_channels * kernel * kernel
        self.weight = Param(f"{name}.w", xavier_uniform(
            (out_channels, in_channels, kernel, kernel), fan_in, fan_out,
            rng, dtype))
        self.bias = Param(f"{name}.b", np.zeros(out_channels, dtype=dtype))
        self.kernel = kernel
        self.stride = stride
        self.padding = padding
        self._cache = None

    @property
    def params(self):
        return [self.weight, self.bias]

    def _wmat(self):
        # (C_out, C_in, k, k) -> (k*k*C_in, C_out)
        return np.ascontiguousarray(
            self.weight.value.transpose(2, 3, 1, 0)).reshape(
                -1, self.weight.value.shape[0])

    def forward(self, x: np.ndarray) -> np.ndarray:
        n, h, w, c = x.shape
        k, s, p = self.kernel, self.stride, self.padding
        xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0))) if p else x
        view = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::s, ::s]
        ho, wo = view.shape[1], view.shape[2]
        cols = np.ascontiguousarray(view.transpose(0, 1, 2, 4, 5, 3))
        cols = cols.reshape(n * ho * wo, k * k * c)
        out = cols @ self._wmat() + self.bias.value
        self._cache = (cols, (n, h, w, c), (ho, wo))
        return out.reshape(n, ho, wo, -1)

    def backward(self, gout: np.ndarray, need_input_grad: bool = True):
        cols, (n, h, w, c), (ho, wo) = self._cache
        k, s, p = self.kernel, self.stride, self.padding
        cout = gout.shape[-1]
        gmat = gout.reshape(-1, cout)
        gw = (cols.T @ gmat).reshape(k, k, c, cout)
        self.weight.grad += gw.transpose(3, 2, 0, 1)
        self.bias.grad += gmat.sum(axis=0)
        self.weight.touched = self.bias.touched = True
        if not need_input_grad:
            return None

        gcols = (gmat @ self._wmat().T).reshape(n, ho, wo, k, k, c)
        gxp = np.zeros((n, h + 2 * p, w + 2 * p, c), dtype=gout.dtype)
        for di in range(k):
            for dj in range(k):
                gxp[:, di:di + s * ho:s, dj:dj + s * wo:s, :] += \
                    gcols[:, :, :, di, dj, :]
        return gxp[:, p:p + h, p:p + w, :] if p else gxp


class Linear:
    def __init__(self, name, in_dim, out_dim, rng, dtype):
        self.weight = Param(f"{name}.w", xavier_uniform(
            (out_dim, in_dim), in_dim, out_dim, rng, dtype))
        self.bias = Param(f"{name}.b", np.zeros(out_dim, dtype=dtype))
        self._x = None

    @property
    def params(self):
        return [self.weight, self.bias]

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        return x @ self.weight.value.T + self.bias.value

    def backward(self, gout: np.ndarray) -> np.ndarray:
        self.weight.grad += gout.T @ self._x
        self.bias.grad += gout.sum(axis=0)
        self.weight.touched = self.bias.touched = True
        return gout @ self.weight.value


class ReLU:
    def __init__(self):
        self._mask = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._mask = x > 0.0
        return x * self._mask

    def backward(self, gout: np.ndarray) -> np.ndarray:
        return gout * self._mask


class GlobalAvgPool:
    """(N, H, W, C) -> (N, C) spatial mean."""

    def __init__(self):
        self._hw = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._hw = x.shape[1:3]
        return x.mean(axis=(1, 2))

    def backward(self, gout: np.ndarray) -> np.ndarray:
        h, w = self._hw
        scale = 1.0 / (h * w)
        return np.broadcast_to(
            (gout * scale)[:, np.newaxis, np.newaxis, :],
            (gout.shape[0], h, w, gout.shape[1])).copy()


class ResidualStage:
    """Stride-2 downsampling stage: relu(conv3x3(x) + conv1x1(x)).

    With the skip disabled this degrades to a plain conv + relu.
    """

    def __init__(self, name, in_channels, out_channels, kernel, rng, dtype,
                 residual=True, stride=2):
        self.main = Conv2d(f"{name}.main", in_channels, out_channels,
                           kernel, stride, kernel // 2, rng, dtype)
        self.skip = (Conv2d(f"{name}.skip", in_channels, out_channels,
                            1, stride, 0, rng, dtype) if residual else None)
        self.relu = ReLU()

    @property
    def params(self):
        out = list(self.main.params)
        if self.skip is not None:
            out += self.skip.params
        return out

    def forward(self, x: np.ndarray) -> np.ndarray:
        y = self.main.forward(x)
        if self.skip is not None:
            y = y + self.skip.forward(x)
        return self.relu.forward(y)

    def backward(self, gout: np.ndarray, need_input_grad: bool = True):
        g = self.relu.backward(gout)
        gx = self.main.backward(g, need_input_grad)
        if self.skip is not None:
            gskip = self.skip.backward(g, need_input_grad)
            if need_input_grad:
                gx = gx + gskip
        return gx
