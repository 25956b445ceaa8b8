"""Layer kernels with hand-written reverse-mode gradients.

Every layer works on a leading batch axis. ``forward`` returns the output and
a cache; ``backward`` consumes the cache and returns the input gradient (or
``None`` when not requested) and a dict of parameter gradients.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError

L2_EPS = 1e-12


class Layer:
    kind = "layer"

    def config(self) -> dict:
        return {}

    def param_shapes(self, in_shape) -> dict:
        return {}

    def init_params(self, in_shape, rng, dtype) -> dict:
        return {}

    def out_shape(self, in_shape):
        return tuple(in_shape)

    def forward(self, x, params):
        raise NotImplementedError

    def backward(self, grad, cache, params, need_input_grad=True):
        raise NotImplementedError

    def __repr__(self):
        args = ", ".join(f"{k}={v}" for k, v in self.config().items())
        return f"{type(self).__name__}({args})"


class Conv2D(Layer):
    """Valid-padding 2-D convolution on (batch, channels, height, width)."""

    kind = "conv2d"

    def __init__(self, in_channels, out_channels, kernel, stride=(1, 1)):
        self.in_channels = int(in_channels)
        self.out_channels = int(out_channels)
        self.kernel = tuple(int(k) for k in kernel)
        self.stride = tuple(int(s) for s in stride)

    def config(self):
        return {
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "kernel": list(self.kernel),
            "stride": list(self.stride),
        }

    def out_shape(self, in_shape):
        c, h, w = in_shape
        if c != self.in_channels:
            raise ShapeError("conv2d input channels", (self.in_channels, h, w), in_shape)
        kh, kw = self.kernel
        sh, sw = self.stride
        if h < kh or w < kw:
            raise ShapeError("conv2d input smaller than kernel", (c, kh, kw), in_shape)
        return (self.out_channels, (h - kh) // sh + 1, (w - kw) // sw + 1)

    def param_shapes(self, in_shape):
        fan_in = self.in_channels * self.kernel[0] * self.kernel[1]
        return {"weight": (fan_in, self.out_channels), "bias": (self.out_channels,)}

    def init_params(self, in_shape, rng, dtype):
        shapes = self.param_shapes(in_shape)
        fan_in = shapes["weight"][0]
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shapes["weight"])
        return {"weight": w.astype(dtype), "bias": np.zeros(shapes["bias"], dtype=dtype)}

    def _columns(self, x):
        kh, kw = self.kernel
        sh, sw = self.stride
        win = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
        b, c, ho, wo = win.shape[:4]
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(b * ho * wo, c * kh * kw)
        return cols, (b, ho, wo)

    def forward(self, x, params):
        cols, (b, ho, wo) = self._columns(x)
        y = cols @ params["weight"] + params["bias"]
        y = y.reshape(b, ho, wo, self.out_channels).transpose(0, 3, 1, 2)
        return y, (x.shape, cols, (b, ho, wo))

    def backward(self, grad, cache, params, need_input_grad=True):
        x_shape, cols, (b, ho, wo) = cache
        gm = grad.transpose(0, 2, 3, 1).reshape(b * ho * wo, self.out_channels)
        grads = {"weight": cols.T @ gm, "bias": gm.sum(axis=0)}
        if not need_input_grad:
            return None, grads
        kh, kw = self.kernel
        sh, sw = self.stride
        dcols = (gm @ params["weight"].T).reshape(b, ho, wo, self.in_channels, kh, kw)
        dx = np.zeros(x_shape, dtype=grad.dtype)
        for i in range(kh):
            for j in range(kw):
                dx[:, :, i : i + sh * (ho - 1) + 1 : sh, j : j + sw * (wo - 1) + 1 : sw] += (
                    dcols[..., i, j].transpose(0, 3, 1, 2)
                )
        return dx, grads


class Dense(Layer):
    kind = "dense"

    def __init__(self, in_features, out_features):
        self.in_features = int(in_features)
        self.out_features = int(out_features)

    def config(self):
        return {"in_features": self.in_features, "out_features": self.out_features}

    def out_shape(self, in_shape):
        if tuple(in_shape) != (self.in_features,):
            raise ShapeError("dense input", (self.in_features,), in_shape)
        return (self.out_features,)

    def param_shapes(self, in_shape):
        return {"weight": (self.in_features, self.out_features), "bias": (self.out_features,)}

    def init_params(self, in_shape, rng, dtype):
        w = rng.normal(0.0, np.sqrt(2.0 / self.in_features), size=(self.in_features, self.out_features))
        return {"weight": w.astype(dtype), "bias": np.zeros(self.out_features, dtype=dtype)}

    def forward(self, x, params):
        return x @ params["weight"] + params["bias"], x

    def backward(self, grad, cache, params, need_input_grad=True):
        x = cache
        grads = {"weight": x.T @ grad, "bias": grad.sum(axis=0)}
        dx = grad @ params["weight"].T if need_input_grad else None
        return dx, grads


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, params):
        mask = x > 0
        return x * mask, mask

    def backward(self, grad, cache, params, need_input_grad=True):
        return grad * cache, {}


class GlobalAvgPool(Layer):
    """Mean over the spatial axes: (B, C, H, W) -> (B, C)."""

    kind = "global_avg_pool"

    def out_shape(self, in_shape):
        if len(in_shape) != 3:
            raise ShapeError("global_avg_pool input (C, H, W)", ("C", "H", "W"), in_shape)
        return (in_shape[0],)

    def forward(self, x, params):
        return x.mean(axis=(2, 3)), x.shape

    def backward(self, grad, cache, params, need_input_grad=True):
        b, c, h, w = cache
        dx = np.broadcast_to(grad[:, :, None, None] / (h * w), cache).copy()
        return dx, {}


class L2Normalize(Layer):
    kind = "l2_normalize"

    def forward(self, x, params):
        norm = np.sqrt(np.sum(x * x, axis=-1, keepdims=True) + L2_EPS)
        y = x / norm
        return y, (y, norm)

    def backward(self, grad, cache, params, need_input_grad=True):
        y, norm = cache
        dx = (grad - y * np.sum(grad * y, axis=-1, keepdims=True)) / norm
        return dx, {}


class Softmax(Layer):
    kind = "softmax"

    def forward(self, x, params):
        y = softmax(x)
        return y, y

    def backward(self, grad, cache, params, need_input_grad=True):
        y = cache
        return y * (grad - np.sum(grad * y, axis=-1, keepdims=True)), {}


def softmax(x, axis=-1):
    z = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


LAYER_TYPES = {
    cls.kind: cls for cls in (Conv2D, Dense, ReLU, GlobalAvgPool, L2Normalize, Softmax)
}


def layer_from_config(kind: str, cfg: dict) -> Layer:
    return LAYER_TYPES[kind](**cfg)
