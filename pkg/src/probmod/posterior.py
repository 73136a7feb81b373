"""Posterior guides: how each random variable's approximating distribution is made.

A :class:`Posterior` lives on a module and manufactures one :class:`Guide`
per (variable name, prior identity). The guide owns the learnable
parameters; ``guide.distribution(prior)`` returns the distribution the
variable is drawn from on the current pass.
"""

from __future__ import annotations

from typing import Callable, Dict, List, Optional

import numpy as np

from . import tensor as T
from .distributions import Distribution, LogNormal, Normal as NormalDist, PointMassDist
from .tensor import Parameter, Tensor

__all__ = [
    "Guide",
    "NormalGuide",
    "PointMassGuide",
    "PriorGuide",
    "ManualGuide",
    "Posterior",
    "Automatic",
    "Normal",
    "ScaledNormal",
    "PointMass",
    "Manual",
    "MissingGuideError",
    "GuideMisuseError",
    "dynamic_detect",
    "posterior_from_config",
]

DEFAULT_LOG_SCALE = -3.0


class MissingGuideError(KeyError):
    """A Manual posterior has no registered guide for a variable."""


class GuideMisuseError(RuntimeError):
    """A guide operation was applied to the wrong kind of guide."""


def dynamic_detect(prior: Distribution) -> bool:
    """True when any prior parameter was computed during the current pass."""
    return any(p.is_computed for p in prior.params.values())


class Guide:
    kind = "guide"
    dynamic = False

    def __init__(self, key: str, leaf: str):
        self.key = key
        self.leaf = leaf
        self.params: Dict[str, Parameter] = {}

    def distribution(self, prior: Distribution) -> Distribution:
        raise NotImplementedError

    def parameters(self) -> List[Parameter]:
        return list(self.params.values())

    def n_scalars(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def __repr__(self):
        return f"{type(self).__name__}({self.key!r})"


class NormalGuide(Guide):
    """Normal(loc, exp(log_scale)); LogNormal over the log for positive priors."""

    kind = "normal"

    def __init__(self, key, leaf, loc, log_scale, positive: bool = False):
        super().__init__(key, leaf)
        self.positive = positive
        self.params["loc"] = Parameter(loc)
        self.params["log_scale"] = Parameter(np.broadcast_to(log_scale, np.shape(loc)))

    def distribution(self, prior):
        scale = T.exp(self.params["log_scale"])
        if self.positive:
            return LogNormal(self.params["loc"], scale, validate=False)
        return NormalDist(self.params["loc"], scale, validate=False)


class PointMassGuide(Guide):
    """A single learnable value. Positive priors keep it as ``exp(log_value)``."""

    kind = "pointmass"

    def __init__(self, key, leaf, value, positive: bool = False):
        super().__init__(key, leaf)
        self.positive = positive
        value = np.array(value, dtype=np.float64)
        if positive:
            self.params["log_value"] = Parameter(np.log(value))
            # exp(log(v)) may differ from v in the last bit; hand back v until moved
            self._exact = (self.params["log_value"].data, Tensor(value))
        else:
            self.params["value"] = Parameter(value)

    @property
    def unconstrained(self) -> Parameter:
        return self.params["log_value" if self.positive else "value"]

    def log_jacobian(self) -> float:
        """log |d value / d unconstrained|, summed over elements."""
        return float(self.unconstrained.data.sum()) if self.positive else 0.0

    def current_value(self) -> Tensor:
        if not self.positive:
            return self.params["value"]
        u = self.params["log_value"]
        cached_data, exact = self._exact
        if u.data is cached_data:
            # exact stored value, differentiable as exp(u)
            d_exp = np.exp(u.data)
            return T._make(exact.data.copy(), (u,), lambda g: (g * d_exp,), "exp")
        return T.exp(u)

    def distribution(self, prior):
        return PointMassDist(self.current_value(), positive=self.positive)


class PriorGuide(Guide):
    """The prior itself, with no learnable parameters."""

    kind = "prior"

    def __init__(self, key, leaf, dynamic: bool):
        super().__init__(key, leaf)
        self.dynamic = dynamic
        self.current: Optional[Distribution] = None

    def distribution(self, prior):
        self.current = prior
        return prior


class ManualGuide(Guide):
    kind = "manual"

    def __init__(self, key, leaf, posterior: "Manual"):
        super().__init__(key, leaf)
        self.posterior = posterior

    def distribution(self, prior):
        return self.posterior.guide_distribution(self.leaf)


class Posterior:
    """Base class; subclasses decide how continuous static priors are guided.

    Dynamic priors (parameters computed in the current pass) and discrete
    priors are guided by the prior itself for every kind.
    """

    kind = "posterior"

    def __init__(self):
        self.guides: Dict[str, Guide] = {}

    def config(self) -> dict:
        return {"kind": self.kind}

    def fresh(self) -> "Posterior":
        cfg = dict(self.config())
        cfg.pop("kind")
        return type(self)(**cfg)

    def guide_key(self, leaf: str, prior: Distribution, dynamic: bool) -> str:
        if dynamic:
            return f"{leaf}|dynamic"
        return f"{leaf}|{prior.family}|{prior.identity()}"

    def get_guide(self, leaf: str, prior: Distribution, dynamic: bool, scope: str = "") -> Guide:
        key = self.guide_key(leaf, prior, dynamic)
        guide = self.guides.get(key)
        if guide is None:
            guide = self.build_guide(key, leaf, prior, dynamic, scope=scope)
            self.guides[key] = guide
        elif dynamic:
            self.refresh_dynamic(key, prior)
        return guide

    def build_guide(
        self,
        key: str,
        leaf: str,
        prior: Distribution,
        dynamic: bool,
        init_value: Optional[Tensor] = None,
        scope: str = "",
    ) -> Guide:
        if dynamic:
            return PriorGuide(key, leaf, dynamic=True)
        if prior.discrete:
            return PriorGuide(key, leaf, dynamic=False)
        if init_value is None:
            init = prior.sample().data
        else:
            init = np.broadcast_to(T._raw(init_value), prior.shape).copy()
        return self._continuous_guide(key, leaf, prior, init, scope)

    def _continuous_guide(self, key, leaf, prior, init, scope) -> Guide:
        raise NotImplementedError

    def refresh_dynamic(self, key: str, prior: Distribution) -> Distribution:
        guide = self.guides.get(key)
        if not isinstance(guide, PriorGuide) or not guide.dynamic:
            raise GuideMisuseError(f"guide {key!r} is not dynamic")
        return guide.distribution(prior)

    def parameters(self) -> List[Parameter]:
        out = []
        for guide in self.guides.values():
            out.extend(guide.parameters())
        return out

    def named_parameters(self):
        seen: Dict[str, int] = {}
        for guide in self.guides.values():
            n = seen.get(guide.leaf, 0)
            seen[guide.leaf] = n + 1
            label = guide.leaf if n == 0 else f"{guide.leaf}#{n}"
            for pname, p in guide.params.items():
                yield f"{label}.{pname}", p

    def begin_pass(self) -> None:
        """Hook run before each model pass."""

    def __repr__(self):
        args = ", ".join(f"{k}={v}" for k, v in self.config().items() if k != "kind")
        return f"{type(self).__name__}({args})"


class Normal(Posterior):
    """Mean-field Normal guides with scale ``exp(log_scale)``.

    ``log_scale`` is the initial value of the unconstrained scale parameter.
    """

    kind = "normal"

    def __init__(self, log_scale: float = DEFAULT_LOG_SCALE):
        super().__init__()
        self.log_scale = float(log_scale)

    def config(self):
        return {"kind": self.kind, "log_scale": self.log_scale}

    def _continuous_guide(self, key, leaf, prior, init, scope):
        loc = np.log(init) if prior.positive else init
        return NormalGuide(key, leaf, loc, self.log_scale, positive=prior.positive)


class Automatic(Normal):
    """Normal guides for static continuous priors, the prior itself otherwise."""

    kind = "automatic"


class ScaledNormal(Posterior):
    """Normal guides whose initial scale is ``scaling`` times the prior's scale."""

    kind = "scaled_normal"

    def __init__(self, scaling: float = 1e-2):
        super().__init__()
        if scaling <= 0:
            raise ValueError("scaling must be positive")
        self.scaling = float(scaling)

    def config(self):
        return {"kind": self.kind, "scaling": self.scaling}

    def _continuous_guide(self, key, leaf, prior, init, scope):
        if "scale" not in prior.param_names:
            raise TypeError(f"ScaledNormal needs a prior with a scale parameter, got {prior.family}")
        prior_scale = np.broadcast_to(prior.scale.data, prior.shape)
        log_scale = np.log(self.scaling * prior_scale)
        loc = np.log(init) if prior.positive else init
        return NormalGuide(key, leaf, loc, log_scale, positive=prior.positive)


class PointMass(Posterior):
    """A single point per variable; the state for MAP and Metropolis."""

    kind = "pointmass"

    def _continuous_guide(self, key, leaf, prior, init, scope):
        return PointMassGuide(key, leaf, init, positive=prior.positive)


class Manual(Posterior):
    """User-written guides.

    Assign :class:`~probmod.tensor.Parameter` objects and distributions as
    attributes. ``forward_posterior(posterior)`` runs before every pass and
    is where guide distributions are (re)built::

        man = Manual(forward_posterior=hook)
        man.mean = Parameter(np.ones(1))
    """

    kind = "manual"

    def __init__(self, forward_posterior: Optional[Callable[["Manual"], None]] = None):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_dists", {})
        super().__init__()
        self.forward_posterior = forward_posterior

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._params[name] = value
        elif isinstance(value, Distribution):
            self._dists[name] = value
        else:
            object.__setattr__(self, name, value)

    def __getattr__(self, name):
        if name.startswith("_"):
            raise AttributeError(name)
        if name in self._params:
            return self._params[name]
        if name in self._dists:
            return self._dists[name]
        raise AttributeError(name)

    def config(self):
        return {"kind": self.kind}

    def fresh(self):
        other = Manual(self.forward_posterior)
        other._params.update(self._params)
        return other

    def begin_pass(self):
        if self.forward_posterior is not None:
            self.forward_posterior(self)

    def guide_distribution(self, leaf: str) -> Distribution:
        if leaf not in self._dists:
            raise MissingGuideError(f"no manual guide registered for {leaf!r}")
        return self._dists[leaf]

    def build_guide(self, key, leaf, prior, dynamic, init_value=None, scope=""):
        if leaf in self._dists:
            return ManualGuide(key, leaf, self)
        if dynamic:
            return PriorGuide(key, leaf, dynamic=True)
        raise MissingGuideError(f"no manual guide registered for {scope or leaf!r}")

    def parameters(self):
        return list(self._params.values())

    def named_parameters(self):
        yield from self._params.items()


_KINDS = {cls.kind: cls for cls in (Automatic, Normal, ScaledNormal, PointMass, Manual)}


def posterior_from_config(cfg: dict) -> Posterior:
    cfg = dict(cfg)
    kind = cfg.pop("kind")
    if kind not in _KINDS:
        raise ValueError(f"unknown posterior kind {kind!r}")
    return _KINDS[kind](**cfg)
