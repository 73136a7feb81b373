"""Layers that are deterministic or Bayesian, and the lift transform.

A layer is Bayesian when it is given a weight/bias prior or a posterior;
scalar-parameter priors are broadcast to the full weight and bias shapes::

    fc3 = Linear(84, 10, weight=Normal(0, 1e-2), bias=Normal(0, 1))
"""

from __future__ import annotations

import copy
import math
from typing import Optional

import numpy as np

from . import tensor as T
from .distributions import Distribution, Normal
from .module import PModule
from .posterior import Normal as NormalPosterior, Posterior
from .random import get_rng
from .tensor import Parameter, Tensor

__all__ = [
    "Linear",
    "Conv2d",
    "Sequential",
    "ReLU",
    "MaxPool2d",
    "Flatten",
    "relu",
    "max_pool2d",
    "flatten",
    "lift",
]


def relu(x) -> Tensor:
    return T.relu(x)


def max_pool2d(x, window) -> Tensor:
    return T.max_pool2d(x, window)


def flatten(x, keep_batch: bool = True) -> Tensor:
    """(N, ...) -> (N, rest), or to 1-D when ``keep_batch`` is False."""
    x = T.as_tensor(x)
    if not keep_batch:
        return T.reshape(x, (x.size,))
    return T.reshape(x, (x.shape[0], int(np.prod(x.shape[1:])) if x.ndim > 1 else 1))


def _uniform(bound: float, shape) -> np.ndarray:
    return (2.0 * get_rng().uniform(shape) - 1.0) * bound


class _Layer(PModule):
    """Shared machinery for Linear and Conv2d."""

    def __init__(self, weight_shape, bias_shape, fan_in, weight, bias, posterior):
        bayesian = weight is not None or bias is not None or posterior is not None
        if bayesian and posterior is None:
            posterior = NormalPosterior(log_scale=-3)
        super().__init__(posterior=posterior)
        self.bayesian = bayesian
        if bayesian:
            self.weight = (weight if weight is not None else Normal(0.0, 1.0)).expand(weight_shape)
            self.bias = (bias if bias is not None else Normal(0.0, 1.0)).expand(bias_shape)
        else:
            bound = 1.0 / math.sqrt(fan_in)
            self.weight = Parameter(_uniform(bound, weight_shape))
            self.bias = Parameter(_uniform(bound, bias_shape))


class Linear(_Layer):
    """y = x @ weight.T + bias, with x of shape (N, in_features)."""

    def __init__(
        self,
        in_features: int,
        out_features: int,
        weight: Optional[Distribution] = None,
        bias: Optional[Distribution] = None,
        posterior: Optional[Posterior] = None,
    ):
        if in_features <= 0 or out_features <= 0:
            raise ValueError(f"Linear dims must be positive, got ({in_features}, {out_features})")
        self.in_features = in_features
        self.out_features = out_features
        super().__init__((out_features, in_features), (out_features,), in_features, weight, bias, posterior)

    def forward(self, x):
        x = T.as_tensor(x)
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise T.ShapeError(f"Linear({self.in_features}, {self.out_features}) got input {x.shape}")
        return x @ T.transpose(self.weight) + self.bias

    def __repr__(self):
        mode = "bayesian" if self.bayesian else "deterministic"
        return f"Linear({self.in_features}, {self.out_features}, {mode})"


class Conv2d(_Layer):
    """Stride-1, unpadded convolution over (N, C, H, W) inputs."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size,
        weight: Optional[Distribution] = None,
        bias: Optional[Distribution] = None,
        posterior: Optional[Posterior] = None,
    ):
        if isinstance(kernel_size, int):
            kernel_size = (kernel_size, kernel_size)
        if min(in_channels, out_channels, *kernel_size) <= 0:
            raise ValueError("Conv2d dims must be positive")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = tuple(kernel_size)
        fan_in = in_channels * kernel_size[0] * kernel_size[1]
        super().__init__(
            (out_channels, in_channels) + self.kernel_size, (out_channels,), fan_in, weight, bias, posterior
        )

    def forward(self, x):
        return T.conv2d(x, self.weight, self.bias)

    def __repr__(self):
        mode = "bayesian" if self.bayesian else "deterministic"
        return f"Conv2d({self.in_channels}, {self.out_channels}, {self.kernel_size}, {mode})"


class Sequential(PModule):
    def __init__(self, *layers: PModule, posterior: Optional[Posterior] = None):
        super().__init__(posterior=posterior)
        for i, layer in enumerate(layers):
            self._register_module(str(i), layer)

    def __getitem__(self, i: int) -> PModule:
        return self._modules[str(i)]

    def __setitem__(self, i: int, layer: PModule):
        self._register_module(str(i), layer)

    def __len__(self):
        return len(self._modules)

    def forward(self, x):
        for layer in self._modules.values():
            x = layer(x)
        return x


class ReLU(PModule):
    def forward(self, x):
        return T.relu(x)


class MaxPool2d(PModule):
    def __init__(self, window):
        super().__init__()
        self.window = window

    def forward(self, x):
        return T.max_pool2d(x, self.window)


class Flatten(PModule):
    def forward(self, x):
        return flatten(x)


def _anchored_prior(value: np.ndarray, scale: float) -> Normal:
    return Normal(value.copy(), scale * (np.abs(value) + 0.01))


def _lift_layer(layer: _Layer, scale: float, posterior: Optional[Posterior]) -> _Layer:
    w = layer.weight.data.copy()
    b = layer.bias.data.copy()
    post = posterior.fresh() if posterior is not None else NormalPosterior(log_scale=-3)
    if isinstance(layer, Linear):
        new = Linear(layer.in_features, layer.out_features, _anchored_prior(w, scale), _anchored_prior(b, scale), post)
    else:
        new = Conv2d(
            layer.in_channels,
            layer.out_channels,
            layer.kernel_size,
            _anchored_prior(w, scale),
            _anchored_prior(b, scale),
            post,
        )
    new.rv("weight").value = Tensor(w)
    new.rv("bias").value = Tensor(b)
    # guides start at the pretrained values
    new.posterior.guides.clear()
    new.set_posterior(new.posterior)
    return new


def lift(m: PModule, default_prior_scale: float = 0.1, posterior: Optional[Posterior] = None) -> PModule:
    """Return a copy of ``m`` with every deterministic Linear/Conv2d made Bayesian.

    Each lifted weight gets the prior ``Normal(w, scale * (|w| + 0.01))``
    anchored at its pretrained value ``w``, and its guide is initialized
    there too, so the lifted network reproduces the original forward until
    the first :func:`~probmod.module.sample`. Other modules are copied
    unchanged.
    """
    if default_prior_scale <= 0:
        raise ValueError("default_prior_scale must be positive")
    if isinstance(m, _Layer):
        if m.bayesian:
            return copy.deepcopy(m)
        return _lift_layer(m, default_prior_scale, posterior)
    out = copy.deepcopy(m)
    for name, child in list(m._modules.items()):
        out._register_module(name, lift(child, default_prior_scale, posterior))
    return out
