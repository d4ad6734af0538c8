"""Layers with hand-written forward and backward passes (float64, NCHW)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..core import ValidationError


@dataclass
class Context:
    """Per-forward settings: ``train`` selects batch statistics, ``dropout`` toggles masking."""

    train: bool = False
    dropout: bool = False
    rng: np.random.Generator | None = None


class Layer:
    name = "layer"

    def __init__(self):
        self.params: dict = {}
        self.grads: dict = {}
        self.buffers: dict = {}

    def forward(self, x, ctx: Context):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError


class Conv2D(Layer):
    """Square-kernel convolution, stride 1, zero padding ``k // 2`` (same size)."""

    def __init__(self, in_channels, out_channels, kernel=3, rng=None):
        super().__init__()
        self.k = kernel
        fan_in = in_channels * kernel * kernel
        rng = rng or np.random.default_rng(0)
        self.params["weight"] = rng.normal(0.0, np.sqrt(2.0 / fan_in),
                                           (out_channels, in_channels, kernel, kernel))
        self.params["bias"] = np.zeros(out_channels)

    def _cols(self, x):
        p = self.k // 2
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        # (N, C, H, W, k, k) -> (N, H, W, C, k, k) -> rows of C*k*k
        win = sliding_window_view(xp, (self.k, self.k), axis=(2, 3))
        n, c, h, w = x.shape
        return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * w, c * self.k * self.k)

    def forward(self, x, ctx):
        W = self.params["weight"]
        if x.ndim != 4 or x.shape[1] != W.shape[1]:
            raise ValidationError(f"conv expects (N, {W.shape[1]}, H, W) input, got {x.shape}")
        n, _, h, w = x.shape
        cols = self._cols(x)
        self._cache = (x.shape, cols)
        out = cols @ W.reshape(W.shape[0], -1).T + self.params["bias"]
        return out.reshape(n, h, w, -1).transpose(0, 3, 1, 2)

    def backward(self, dy):
        shape, cols = self._cache
        n, c, h, w = shape
        W = self.params["weight"]
        f = W.shape[0]
        d2 = dy.transpose(0, 2, 3, 1).reshape(-1, f)
        self.grads["weight"] = (d2.T @ cols).reshape(W.shape)
        self.grads["bias"] = d2.sum(axis=0)
        dcols = (d2 @ W.reshape(f, -1)).reshape(n, h, w, c, self.k, self.k)
        p = self.k // 2
        dxp = np.zeros((n, c, h + 2 * p, w + 2 * p))
        for i in range(self.k):
            for j in range(self.k):
                dxp[:, :, i:i + h, j:j + w] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        return dxp[:, :, p:p + h, p:p + w]


class BatchNorm2D(Layer):
    """Per-channel normalization; batch statistics in training, running ones in eval.

    Running statistics follow ``r <- (1 - momentum) r + momentum * batch``
    with the unbiased batch variance.
    """

    def __init__(self, channels, eps=1e-5, momentum=0.1):
        super().__init__()
        self.eps = eps
        self.momentum = momentum
        self.params["gamma"] = np.ones(channels)
        self.params["beta"] = np.zeros(channels)
        self.buffers["running_mean"] = np.zeros(channels)
        self.buffers["running_var"] = np.ones(channels)

    def forward(self, x, ctx):
        g = self.params["gamma"][None, :, None, None]
        b = self.params["beta"][None, :, None, None]
        if ctx.train:
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            m = x.shape[0] * x.shape[2] * x.shape[3]
            mom = self.momentum
            self.buffers["running_mean"] = (1 - mom) * self.buffers["running_mean"] + mom * mean
            unbiased = var * m / max(m - 1, 1)
            self.buffers["running_var"] = (1 - mom) * self.buffers["running_var"] + mom * unbiased
        else:
            mean = self.buffers["running_mean"]
            var = self.buffers["running_var"]
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean[None, :, None, None]) * inv[None, :, None, None]
        self._cache = (xhat, inv, ctx.train)
        return g * xhat + b

    def backward(self, dy):
        xhat, inv, train = self._cache
        self.grads["gamma"] = (dy * xhat).sum(axis=(0, 2, 3))
        self.grads["beta"] = dy.sum(axis=(0, 2, 3))
        dxhat = dy * self.params["gamma"][None, :, None, None]
        if not train:
            return dxhat * inv[None, :, None, None]
        mean_d = dxhat.mean(axis=(0, 2, 3), keepdims=True)
        mean_dx = (dxhat * xhat).mean(axis=(0, 2, 3), keepdims=True)
        return (dxhat - mean_d - xhat * mean_dx) * inv[None, :, None, None]


class ReLU(Layer):
    def forward(self, x, ctx):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, dy):
        return np.where(self._mask, dy, 0.0)


class MaxPool2D(Layer):
    """2x2 max pooling, stride 2; ties route to the first position in row-major order."""

    def forward(self, x, ctx):
        n, c, h, w = x.shape
        if h % 2 or w % 2:
            raise ValidationError(f"max pooling needs even spatial size, got {h}x{w}")
        win = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
        win = win.reshape(n, c, h // 2, w // 2, 4)
        self._arg = win.argmax(axis=-1)
        self._shape = x.shape
        return np.take_along_axis(win, self._arg[..., None], axis=-1)[..., 0]

    def backward(self, dy):
        n, c, h, w = self._shape
        dwin = np.zeros((n, c, h // 2, w // 2, 4))
        np.put_along_axis(dwin, self._arg[..., None], dy[..., None], axis=-1)
        dwin = dwin.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        return dwin.reshape(n, c, h, w)


class Flatten(Layer):
    def forward(self, x, ctx):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._shape)


class Linear(Layer):
    def __init__(self, in_features, out_features, rng=None, gain=2.0):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.params["weight"] = rng.normal(0.0, np.sqrt(gain / in_features),
                                           (out_features, in_features))
        self.params["bias"] = np.zeros(out_features)

    def forward(self, x, ctx):
        W = self.params["weight"]
        if x.ndim != 2 or x.shape[1] != W.shape[1]:
            raise ValidationError(f"linear layer expects (N, {W.shape[1]}) input, got {x.shape}")
        self._x = x
        return x @ W.T + self.params["bias"]

    def backward(self, dy):
        self.grads["weight"] = dy.T @ self._x
        self.grads["bias"] = dy.sum(axis=0)
        return dy @ self.params["weight"]


class Dropout(Layer):
    """Inverted dropout: kept units are scaled by ``1 / (1 - p)`` during training."""

    def __init__(self, p=0.5):
        super().__init__()
        if not 0 <= p < 1:
            raise ValidationError("dropout probability must lie in [0, 1)")
        self.p = p

    def forward(self, x, ctx):
        if not (ctx.train and ctx.dropout) or self.p == 0:
            self._scale = None
            return x
        if ctx.rng is None:
            raise ValidationError("dropout in training mode needs a random generator")
        keep = ctx.rng.random(x.shape) >= self.p
        self._scale = keep / (1.0 - self.p)
        return x * self._scale

    def backward(self, dy):
        return dy if self._scale is None else dy * self._scale
