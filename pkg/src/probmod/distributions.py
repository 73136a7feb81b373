"""Parametric families: Normal, HalfNormal, Categorical and a point mass.

All parameters are :class:`~probmod.tensor.Tensor` objects so log-densities
and reparameterized draws are differentiable with respect to them.
"""

from __future__ import annotations

import hashlib
import math
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from . import tensor as T
from .random import RngState, get_rng
from .tensor import Tensor, as_tensor, no_grad

__all__ = [
    "Distribution",
    "Normal",
    "HalfNormal",
    "LogNormal",
    "Categorical",
    "PointMassDist",
    "NotReparameterizable",
    "UnsupportedPair",
    "kl_divergence",
]

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


class NotReparameterizable(TypeError):
    """``rsample`` was requested from a family without a pathwise sampler."""


class UnsupportedPair(TypeError):
    """No analytic KL divergence for this pair of families."""


class Distribution:
    """Base class. Subclasses list their parameter names in ``param_names``."""

    param_names: Tuple[str, ...] = ()
    has_rsample = False
    positive = False  # support is the positive half-line
    discrete = False

    @property
    def params(self) -> Dict[str, Tensor]:
        return {name: getattr(self, name) for name in self.param_names}

    @property
    def family(self) -> str:
        return type(self).__name__

    @property
    def shape(self) -> Tuple[int, ...]:
        shape: Tuple[int, ...] = ()
        for p in self.params.values():
            shape = T.broadcast_shape(shape, p.shape)
        return shape

    def sample(self, sample_shape: Sequence[int] = (), rng: Optional[RngState] = None) -> Tensor:
        with no_grad():
            out = self.rsample(sample_shape, rng)
        return Tensor(out.data)

    def rsample(self, sample_shape: Sequence[int] = (), rng: Optional[RngState] = None) -> Tensor:
        raise NotReparameterizable(f"{self.family} has no reparameterized sampler")

    def log_prob(self, value) -> Tensor:
        raise NotImplementedError

    def expand(self, shape: Sequence[int]) -> "Distribution":
        """Same family with every parameter broadcast to ``shape``.

        Constant parameters stay constant leaves; pass-computed ones are
        broadcast through the tape.
        """
        shape = tuple(shape)
        params = {}
        for name, p in self.params.items():
            if p.shape == shape:
                params[name] = p
            elif p.is_computed or p.requires_grad:
                params[name] = T.broadcast_to(p, shape)
            else:
                params[name] = Tensor(np.broadcast_to(p.data, shape).copy())
        return type(self)(**params)

    def identity(self) -> str:
        """Stable fingerprint of the family and constant parameter values.

        Learnable parameters contribute their object identity instead of
        their (changing) values.
        """
        h = hashlib.sha256(self.family.encode())
        for name, p in self.params.items():
            h.update(name.encode())
            if p.requires_grad and not p.is_computed:
                h.update(f"param:{id(p)}".encode())
            else:
                h.update(str(p.shape).encode())
                h.update(np.ascontiguousarray(p.data).tobytes())
        return h.hexdigest()[:16]

    def __repr__(self):
        def fmt(p):
            return f"{p.item():g}" if p.size == 1 else f"<{'x'.join(map(str, p.shape))}>"

        args = ", ".join(f"{k}={fmt(v)}" for k, v in self.params.items())
        return f"{self.family}({args})"


def _draw_shape(dist: Distribution, sample_shape) -> Tuple[int, ...]:
    return tuple(sample_shape) + dist.shape


class Normal(Distribution):
    """Gaussian parameterized by mean ``loc`` and standard deviation ``scale``."""

    param_names = ("loc", "scale")
    has_rsample = True

    def __init__(self, loc, scale, validate: bool = True):
        self.loc = as_tensor(loc)
        self.scale = as_tensor(scale)
        T.broadcast_shape(self.loc.shape, self.scale.shape)
        if validate and not np.all(self.scale.data > 0):
            raise ValueError("Normal scale must be strictly positive")

    @property
    def mean(self) -> Tensor:
        return self.loc

    @property
    def stddev(self) -> Tensor:
        return self.scale

    def rsample(self, sample_shape=(), rng=None) -> Tensor:
        eps = Tensor((rng or get_rng()).normal(_draw_shape(self, sample_shape)))
        return self.loc + self.scale * eps

    def log_prob(self, value) -> Tensor:
        z = (as_tensor(value) - self.loc) / self.scale
        return -0.5 * z * z - T.log(self.scale) - _HALF_LOG_2PI

    def cdf(self, value) -> np.ndarray:
        from math import erf

        z = (np.asarray(T._raw(value)) - self.loc.data) / self.scale.data
        return 0.5 * (1.0 + np.vectorize(erf)(z / math.sqrt(2.0)))


class HalfNormal(Distribution):
    """|X| for X ~ Normal(0, scale); support [0, inf)."""

    param_names = ("scale",)
    has_rsample = True
    positive = True

    def __init__(self, scale, validate: bool = True):
        self.scale = as_tensor(scale)
        if validate and not np.all(self.scale.data > 0):
            raise ValueError("HalfNormal scale must be strictly positive")

    @property
    def stddev(self) -> Tensor:
        return self.scale * math.sqrt(1.0 - 2.0 / math.pi)

    @property
    def mean(self) -> Tensor:
        return self.scale * math.sqrt(2.0 / math.pi)

    def rsample(self, sample_shape=(), rng=None) -> Tensor:
        eps = np.abs((rng or get_rng()).normal(_draw_shape(self, sample_shape)))
        return self.scale * Tensor(eps)

    def log_prob(self, value) -> Tensor:
        value = as_tensor(value)
        z = value / self.scale
        lp = math.log(2.0) - _HALF_LOG_2PI - T.log(self.scale) - 0.5 * z * z
        return T.where(value.data >= 0, lp, -np.inf)

    def cdf(self, value) -> np.ndarray:
        from math import erf

        v = np.asarray(T._raw(value))
        z = np.maximum(v, 0.0) / self.scale.data
        return np.vectorize(erf)(z / math.sqrt(2.0))


class LogNormal(Distribution):
    """exp of a Normal; the guide family for positive latent variables.

    ``log_prob`` includes the change-of-variables term ``-log(value)``.
    """

    param_names = ("loc", "scale")
    has_rsample = True
    positive = True

    def __init__(self, loc, scale, validate: bool = True):
        self.loc = as_tensor(loc)
        self.scale = as_tensor(scale)
        if validate and not np.all(self.scale.data > 0):
            raise ValueError("LogNormal scale must be strictly positive")

    @property
    def base(self) -> Normal:
        return Normal(self.loc, self.scale, validate=False)

    @property
    def mean(self) -> Tensor:
        return T.exp(self.loc + 0.5 * self.scale * self.scale)

    def rsample(self, sample_shape=(), rng=None) -> Tensor:
        return T.exp(self.base.rsample(sample_shape, rng))

    def log_prob(self, value) -> Tensor:
        value = as_tensor(value)
        log_v = T.log(value)
        return self.base.log_prob(log_v) - log_v


class Categorical(Distribution):
    """Classes ``0..K-1`` with probabilities ``softmax(logits)`` over the last axis."""

    param_names = ("logits",)
    discrete = True

    def __init__(self, logits):
        self.logits = as_tensor(logits)
        if self.logits.ndim == 0:
            raise ValueError("Categorical logits need at least one axis")

    @property
    def n_classes(self) -> int:
        return self.logits.shape[-1]

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.logits.shape[:-1]

    @property
    def probs(self) -> np.ndarray:
        z = self.logits.data - self.logits.data.max(axis=-1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=-1, keepdims=True)

    def expand(self, shape):
        shape = tuple(shape) + (self.n_classes,)
        if self.logits.is_computed or self.logits.requires_grad:
            return Categorical(T.broadcast_to(self.logits, shape))
        return Categorical(np.broadcast_to(self.logits.data, shape).copy())

    def sample(self, sample_shape=(), rng=None) -> Tensor:
        shape = _draw_shape(self, sample_shape)
        cdf = np.cumsum(self.probs, axis=-1)
        cdf = np.broadcast_to(cdf, shape + (self.n_classes,))
        u = (rng or get_rng()).uniform(shape)
        idx = (u[..., None] >= cdf).sum(axis=-1)
        return Tensor(np.minimum(idx, self.n_classes - 1).astype(np.float64))

    def log_prob(self, value) -> Tensor:
        raw = np.asarray(T._raw(value))
        idx = raw.astype(np.int64)
        if np.any(idx != raw) or np.any(idx < 0) or np.any(idx >= self.n_classes):
            raise IndexError(f"class index out of range [0, {self.n_classes})")
        batch = T.broadcast_shape(idx.shape, self.shape)
        logits = self.logits
        if logits.shape[:-1] != batch:
            logits = T.broadcast_to(logits, batch + (self.n_classes,))
        log_norm = logits - T.logsumexp(logits, axis=-1, keepdims=True)
        return T.gather(log_norm, np.broadcast_to(idx, batch))


class PointMassDist(Distribution):
    """A delta at ``value``. Its log-density is 0 everywhere by convention."""

    param_names = ("value",)
    has_rsample = True

    def __init__(self, value, positive: bool = False):
        self.value = as_tensor(value)
        self.positive = positive

    def sample(self, sample_shape=(), rng=None) -> Tensor:
        return Tensor(np.broadcast_to(self.value.data, _draw_shape(self, sample_shape)).copy())

    def rsample(self, sample_shape=(), rng=None) -> Tensor:
        if tuple(sample_shape):
            return T.broadcast_to(self.value, _draw_shape(self, sample_shape))
        return self.value

    def log_prob(self, value) -> Tensor:
        shape = T.broadcast_shape(as_tensor(value).shape, self.shape)
        return Tensor(np.zeros(shape))


def kl_divergence(q: Distribution, p: Distribution) -> Tensor:
    """Elementwise KL(q || p) for two Normals."""
    if not (type(q) is Normal and type(p) is Normal):
        raise UnsupportedPair(f"no analytic KL for ({q.family}, {p.family})")
    var_ratio = (q.scale / p.scale) ** 2
    mean_term = ((q.loc - p.loc) / p.scale) ** 2
    return 0.5 * (var_ratio + mean_term) - 0.5 - T.log(q.scale / p.scale)
