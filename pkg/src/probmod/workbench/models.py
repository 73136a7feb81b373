"""The built-in example models and their registry."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np

from .. import tensor as T
from ..distributions import Categorical, HalfNormal, Normal
from ..module import PModule
from ..nn import Linear, ReLU, Sequential, lift
from ..random import randn
from .config import RunConfig


class LinReg(PModule):
    """y ~ Normal(b x + a, sigma) with Normal(0, 3) and HalfNormal(1) priors."""

    def forward(self, x):
        self.b = Normal(0.0, 3.0)
        self.a = Normal(0.0, 3.0)
        self.sigma = HalfNormal(1.0)
        mu = self.b * x + self.a
        self._mu, self._scale = mu, self.sigma * np.ones_like(T._raw(x))
        self.y = Normal(mu, self.sigma)
        return self.y


class HetReg(PModule):
    """Linear mean with noise scale s0 + s1 |x|."""

    def forward(self, x):
        self.b = Normal(0.0, 3.0)
        self.a = Normal(0.0, 3.0)
        self.s0 = HalfNormal(1.0)
        self.s1 = HalfNormal(1.0)
        mu = self.b * x + self.a
        scale = self.s0 + self.s1 * np.abs(T._raw(x))
        self._mu, self._scale = mu, scale
        self.y = Normal(mu, scale)
        return self.y


class Branching(PModule):
    """The stochastic-control-flow model: the prior of ``weight`` depends on a coin flip.

    With ``likelihood`` set, a Normal(output, noise) variable ``y`` is added
    so the model can be fitted to data.
    """

    NOISE = 0.5

    def __init__(self, likelihood: bool = True):
        super().__init__()
        self.likelihood = likelihood

    def forward(self, data):
        if randn(1).item() > 0:
            self.weight = Normal(-1.0, 1.0)
            self._branch = "normal(-1,1)"
        else:
            self.weight = Normal(1.0, 10.0)
            self._branch = "normal(1,10)"
        out = data * T.exp(self.weight)
        if not self.likelihood:
            return out
        self._mu, self._scale = out, T.as_tensor(self.NOISE * np.ones_like(T._raw(data)))
        self.y = Normal(out, self.NOISE)
        return self.y


class MLPClassifier(PModule):
    """features = Linear(2, 16) + ReLU, classifier = Linear(16, 2), Categorical head.

    ``bayesian=True`` gives every layer Normal(0, 1) priors with Normal
    guides; the root keeps the Automatic posterior, which guides the
    classification head by the prior itself because its logits are
    computed in each pass.
    """

    def __init__(self, bayesian: bool = True, hidden: int = 16):
        super().__init__()
        kw = {"weight": Normal(0.0, 1.0), "bias": Normal(0.0, 1.0)} if bayesian else {}
        self.features = Sequential(Linear(2, hidden, **kw), ReLU())
        self.classifier = Linear(hidden, 2, **kw)

    def forward(self, x):
        logits = self.classifier(self.features(x))
        self._logits = logits
        self.classification = Categorical(logits=logits)
        return self.classification


def lift_scope(m: PModule, scope: str, prior_scale: float) -> PModule:
    """Lift the sub-tree at dotted ``scope`` (the whole model when empty)."""
    if not scope:
        return lift(m, prior_scale)
    parent, leaf = m._resolve(scope)
    if leaf not in parent._modules:
        raise KeyError(f"no submodule {scope!r} to lift")
    parent._register_module(leaf, lift(parent._modules[leaf], prior_scale))
    return m


@dataclass(frozen=True)
class ModelSpec:
    name: str
    task: str  # "regression" or "classification"
    generator: str
    features: Tuple[str, ...]
    target: str
    observed: str  # random-variable name bound to the target column
    factory: Callable[[RunConfig], PModule]

    @property
    def columns(self) -> Tuple[str, ...]:
        return self.features + (self.target,)

    def inputs(self, table) -> np.ndarray:
        if len(self.features) == 1:
            return np.asarray(table[self.features[0]], dtype=np.float64)
        return np.stack([np.asarray(table[c], dtype=np.float64) for c in self.features], axis=1)


def _lifted_skeleton(cfg: RunConfig) -> PModule:
    return lift_scope(MLPClassifier(bayesian=False), cfg.lift_scope, cfg.prior_scale)


MODEL_SPECS = {
    "linreg": ModelSpec("linreg", "regression", "linear", ("x",), "y", "y", lambda cfg: LinReg()),
    "hetreg": ModelSpec("hetreg", "regression", "hetero", ("x",), "y", "y", lambda cfg: HetReg()),
    "branching": ModelSpec("branching", "regression", "branching", ("x",), "y", "y", lambda cfg: Branching()),
    "mlp-classifier": ModelSpec(
        "mlp-classifier", "classification", "blobs", ("x1", "x2"), "label", "classification",
        lambda cfg: MLPClassifier(bayesian=True),
    ),
    # the factory gives the lifted structure; fitting pretrains before lifting
    "lifted-mlp": ModelSpec(
        "lifted-mlp", "classification", "blobs", ("x1", "x2"), "label", "classification", _lifted_skeleton
    ),
}
