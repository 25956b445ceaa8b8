"""Sequential model container with cached activations for backprop."""

from __future__ import annotations

import numpy as np

from ..errors import ModelError, ShapeError, StateError
from .layers import Layer, L2Normalize, softmax


class Model:
    """An ordered stack of layers with named parameters.

    Parameter names are ``"{index}.{kind}.{name}"``, e.g. ``"0.conv2d.weight"``.
    Inputs may be given with or without the leading batch axis; outputs follow
    the same convention.
    """

    def __init__(self, layers, input_shape, rng_seed=0, dtype=np.float32, name="model", frozen=()):
        self.layers: list[Layer] = list(layers)
        self.input_shape = tuple(int(s) for s in input_shape)
        self.rng_seed = int(rng_seed)
        self.dtype = np.dtype(dtype)
        self.name = name
        self.shapes = [self.input_shape]
        for layer in self.layers:
            self.shapes.append(tuple(layer.out_shape(self.shapes[-1])))
        rng = np.random.default_rng(self.rng_seed)
        self.params: dict[str, np.ndarray] = {}
        for i, layer in enumerate(self.layers):
            for key, value in layer.init_params(self.shapes[i], rng, self.dtype).items():
                self.params[self.param_name(i, key)] = value
        self.frozen = set(frozen)
        self._cache = None

    def param_name(self, index, key):
        return f"{index}.{self.layers[index].kind}.{key}"

    def _layer_params(self, i):
        prefix = f"{i}.{self.layers[i].kind}."
        return {k[len(prefix):]: v for k, v in self.params.items() if k.startswith(prefix)}

    @property
    def output_shape(self):
        return self.shapes[-1]

    @property
    def trainable(self):
        return [k for k in self.params if k not in self.frozen]

    def freeze(self, names=None):
        self.frozen |= set(self.params if names is None else names)

    def unfreeze(self, names=None):
        self.frozen -= set(self.params if names is None else names)

    def layer_index(self, kind):
        for i, layer in enumerate(self.layers):
            if layer.kind == kind:
                return i
        raise ModelError(f"{self.name} has no {kind} layer")

    def forward(self, x, stop=None, cache=True):
        """Run layers ``[0, stop)`` (all layers when ``stop`` is None)."""
        x = np.asarray(x, dtype=self.dtype)
        single = x.shape == self.input_shape
        if single:
            x = x[None]
        if x.shape[1:] != self.input_shape:
            raise ShapeError(f"{self.name} input", ("B",) + self.input_shape, x.shape)
        stop = len(self.layers) if stop is None else stop
        caches = []
        for i in range(stop):
            x, c = self.layers[i].forward(x, self._layer_params(i))
            caches.append(c)
        self._cache = (caches, stop, single) if cache else None
        return x[0] if single else x

    __call__ = forward

    def backward(self, loss_grad):
        """Gradients of every trainable parameter given d(loss)/d(output)."""
        if self._cache is None:
            raise StateError(f"{self.name}: backward called before forward")
        caches, stop, single = self._cache
        g = np.asarray(loss_grad, dtype=self.dtype)
        if single:
            g = g[None]
        grads = {}
        for i in reversed(range(stop)):
            layer = self.layers[i]
            g, pg = layer.backward(g, caches[i], self._layer_params(i), need_input_grad=i > 0)
            for key, value in pg.items():
                name = self.param_name(i, key)
                if name not in self.frozen:
                    grads[name] = value
        return grads

    def input_gradient(self, loss_grad):
        """d(loss)/d(input) for the cached forward pass; used by gradient checks."""
        if self._cache is None:
            raise StateError(f"{self.name}: backward called before forward")
        caches, stop, single = self._cache
        g = np.asarray(loss_grad, dtype=self.dtype)
        if single:
            g = g[None]
        for i in reversed(range(stop)):
            g, _ = self.layers[i].backward(g, caches[i], self._layer_params(i))
        return g[0] if single else g

    def predict_proba(self, x):
        """Softmax over the final outputs (logits); no activations cached."""
        return softmax(self.forward(x, cache=False).astype(np.float64))

    def ends_normalized(self):
        return bool(self.layers) and isinstance(self.layers[-1], L2Normalize)

    def astype(self, dtype):
        clone = self.copy()
        clone.dtype = np.dtype(dtype)
        clone.params = {k: v.astype(dtype) for k, v in clone.params.items()}
        return clone

    def copy(self):
        clone = object.__new__(Model)
        clone.__dict__.update(self.__dict__)
        clone.params = {k: v.copy() for k, v in self.params.items()}
        clone.frozen = set(self.frozen)
        clone.shapes = list(self.shapes)
        clone._cache = None
        return clone

    def same_as(self, other) -> bool:
        """Bit-exact equality of architecture, metadata and parameters."""
        if (
            [(l.kind, l.config()) for l in self.layers] != [(l.kind, l.config()) for l in other.layers]
            or self.input_shape != other.input_shape
            or self.rng_seed != other.rng_seed
            or self.name != other.name
            or self.frozen != other.frozen
            or self.params.keys() != other.params.keys()
        ):
            return False
        return all(
            self.params[k].dtype == other.params[k].dtype
            and self.params[k].tobytes() == other.params[k].tobytes()
            for k in self.params
        )

    def __repr__(self):
        return f"Model({self.name!r}, layers={self.layers}, input_shape={self.input_shape})"
