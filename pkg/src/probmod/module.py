"""Modules that register random variables by attribute assignment.

Assigning a distribution to a module attribute declares (or refreshes) a
random variable; reading the attribute back returns its current value::

    def forward(m, x):
        m.b = Normal(0, 3)
        m.a = Normal(0, 3)
        m.sigma = HalfNormal(1)
        m.y = Normal(m.b * x + m.a, m.sigma)
        return m.y

Each module keeps a per-pass ledger of the variables touched since the
last :meth:`PModule.new_pass`; :func:`pq_terms` turns the ledger into the
log-prior / log-guide accounting that inference needs.
"""

from __future__ import annotations

import copy
import threading
from typing import Callable, Dict, Iterator, List, NamedTuple, Optional, Tuple, Union


from . import tensor as T
from .distributions import Distribution, PointMassDist
from .posterior import Automatic, Guide, PointMass, Posterior, dynamic_detect
from .tensor import Parameter, Tensor, as_tensor

__all__ = [
    "RandomVariable",
    "PModule",
    "PQTerm",
    "NameCollisionError",
    "StaleLedgerError",
    "sample",
    "pq_terms",
    "parameters",
    "named_parameters",
    "set_posteriors",
]


class NameCollisionError(AttributeError):
    """An attribute name is already bound to a different kind of member."""


class StaleLedgerError(RuntimeError):
    """Accounting was requested before any forward pass ran."""


class RandomVariable:
    """A named variable joining a prior with its current value."""

    def __init__(self, name: str, owner: "PModule", prior: Distribution):
        self.name = name
        self.owner = owner
        self.prior = prior
        self.value: Optional[Tensor] = None
        self.observed = False
        self.guide_dist: Optional[Distribution] = None
        self.guide_key: Optional[str] = None

    @property
    def scope(self) -> str:
        prefix = self.owner.scope
        return f"{prefix}.{self.name}" if prefix else self.name

    @property
    def guide(self) -> Optional[Guide]:
        if self.guide_key is None:
            return None
        return self.owner.posterior.guides.get(self.guide_key)

    def __repr__(self):
        state = "observed" if self.observed else "latent"
        return f"RandomVariable({self.scope!r}, {self.prior!r}, {state})"


class PQTerm(NamedTuple):
    scope: str
    log_p: Tensor
    log_q: Tensor
    observed: bool


class _PassDepth(threading.local):
    depth = 0


_pass_depth = _PassDepth()


class PModule:
    """Base class for probabilistic modules.

    Subclasses override :meth:`forward`; calling the module starts a new
    pass (clearing ledgers) when it is the outermost module call.

    Args:
        posterior: guide factory for random variables declared on this
            module. Defaults to :class:`~probmod.posterior.Automatic`.
    """

    def __init__(self, posterior: Optional[Posterior] = None):
        d = self.__dict__
        d["_modules"] = {}
        d["_params"] = {}
        d["_rvs"] = {}
        d["_observations"] = {}
        d["_matched"] = set()
        d["_ledger"] = None
        d["_parent"] = None
        d["_name"] = ""
        d["_posterior"] = posterior if posterior is not None else Automatic()

    # -- tree structure ---------------------------------------------------
    @property
    def posterior(self) -> Posterior:
        return self._posterior

    @posterior.setter
    def posterior(self, value: Posterior):
        if not isinstance(value, Posterior):
            raise TypeError("posterior must be a Posterior instance")
        self.__dict__["_posterior"] = value

    @property
    def scope(self) -> str:
        parts = []
        node = self
        while node._parent is not None:
            parts.append(node._name)
            node = node._parent
        return ".".join(reversed(parts))

    def children(self) -> Iterator["PModule"]:
        return iter(self._modules.values())

    def named_modules(self, prefix: str = "") -> Iterator[Tuple[str, "PModule"]]:
        yield prefix, self
        for name, child in self._modules.items():
            yield from child.named_modules(f"{prefix}.{name}" if prefix else name)

    def modules(self) -> Iterator["PModule"]:
        for _, m in self.named_modules():
            yield m

    def random_variables(self) -> Dict[str, RandomVariable]:
        return dict(self._rvs)

    def rv(self, path: str) -> RandomVariable:
        """The record behind a random-variable attribute (dotted paths allowed)."""
        module, leaf = self._resolve(path)
        if leaf not in module._rvs:
            raise KeyError(f"no random variable {path!r}")
        return module._rvs[leaf]

    def _resolve(self, path: str) -> Tuple["PModule", str]:
        parts = path.split(".")
        module = self
        for p in parts[:-1]:
            if p not in module._modules:
                raise KeyError(f"no submodule {p!r} on the way to {path!r}")
            module = module._modules[p]
        return module, parts[-1]

    def _register_module(self, name: str, module: "PModule"):
        if name in self._rvs or name in self._params:
            raise NameCollisionError(f"{name!r} is already bound to a non-module member")
        old = self._modules.get(name)
        if old is not None and old is not module:
            old.__dict__["_parent"] = None
        module.__dict__["_parent"] = self
        module.__dict__["_name"] = name
        self._modules[name] = module

    # -- attribute protocol -----------------------------------------------
    def __setattr__(self, name: str, value):
        if (
            name.startswith("_")
            or "_rvs" not in self.__dict__
            or isinstance(getattr(type(self), name, None), property)
        ):
            object.__setattr__(self, name, value)
        elif isinstance(value, Distribution):
            self._assign_rv(name, value)
        elif isinstance(value, PModule):
            self._register_module(name, value)
        elif isinstance(value, Parameter):
            if name in self._rvs or name in self._modules:
                raise NameCollisionError(f"{name!r} is already bound to a non-parameter member")
            value.name = name
            self._params[name] = value
        else:
            if name in self._rvs or name in self._modules or name in self._params:
                raise NameCollisionError(
                    f"cannot assign {type(value).__name__} to {name!r}; it holds a registered member"
                )
            object.__setattr__(self, name, value)

    def __getattr__(self, name: str):
        # only reached when normal lookup fails
        if name.startswith("_"):
            raise AttributeError(name)
        d = self.__dict__
        if name in d.get("_rvs", ()):
            self._touch(name)
            return d["_rvs"][name].value
        if name in d.get("_params", ()):
            return d["_params"][name]
        if name in d.get("_modules", ()):
            return d["_modules"][name]
        raise AttributeError(f"{type(self).__name__!r} has no attribute {name!r}")

    def __deepcopy__(self, memo):
        parent = self.__dict__["_parent"]
        if parent is not None and id(parent) not in memo:
            # copying a subtree detaches it
            memo[id(parent)] = None
        new = type(self).__new__(type(self))
        memo[id(self)] = new
        for k, v in self.__dict__.items():
            new.__dict__[k] = copy.deepcopy(v, memo)
        return new

    def __delattr__(self, name: str):
        for store in (self._rvs, self._params, self._modules):
            if name in store:
                del store[name]
                return
        object.__delattr__(self, name)

    # -- random variables -------------------------------------------------
    def _assign_rv(self, name: str, prior: Distribution):
        if name in self._modules or name in self._params:
            raise NameCollisionError(f"{name!r} is already bound to a non-random-variable member")
        rv = self._rvs.get(name)
        if rv is None:
            rv = RandomVariable(name, self, prior)
            self._rvs[name] = rv
        else:
            rv.prior = prior
        obs = self._lookup_observation(name)
        if obs is not None:
            rv.value = obs
            rv.observed = True
            rv.guide_dist = None
        else:
            rv.observed = False
            self._draw(rv)
        self._touch(name)

    def _guide_for(self, rv: RandomVariable) -> Guide:
        guide = self.posterior.get_guide(rv.name, rv.prior, dynamic_detect(rv.prior), scope=rv.scope)
        rv.guide_key = guide.key
        return guide

    def _draw(self, rv: RandomVariable):
        guide = self._guide_for(rv)
        dist = guide.distribution(rv.prior)
        rv.guide_dist = dist
        rv.value = dist.rsample() if dist.has_rsample else dist.sample()

    def _touch(self, name: str):
        ledger = self.__dict__["_ledger"]
        if ledger is None:
            ledger = self.__dict__["_ledger"] = []
        if name not in ledger:
            ledger.append(name)

    def ledger(self) -> List[str]:
        """Scope paths touched during the current pass, in order."""
        out = []
        for m in self.modules():
            if m._ledger:
                out.extend(m._rvs[n].scope for n in m._ledger if n in m._rvs)
        return out

    def new_pass(self):
        """Clear ledgers and run posterior hooks across this subtree."""
        T.get_tape().clear()
        for m in self.modules():
            m.__dict__["_ledger"] = []
            m.posterior.begin_pass()

    def __call__(self, *args, **kwargs):
        outermost = _pass_depth.depth == 0
        if outermost:
            self.new_pass()
        _pass_depth.depth += 1
        try:
            return self.forward(*args, **kwargs)
        finally:
            _pass_depth.depth -= 1

    def forward(self, *args, **kwargs):
        raise NotImplementedError(f"{type(self).__name__} does not define forward")

    # -- observation ------------------------------------------------------
    def observe(self, bindings: Optional[Dict[str, object]] = None, **kwargs):
        """Condition on data; ``observe(None)`` clears every binding below.

        Names may be dotted paths into submodules. Bindings for variables
        that do not exist yet are applied when they are first assigned.
        """
        if bindings is None and not kwargs:
            for m in self.modules():
                m._observations.clear()
                m._matched.clear()
                for rv in m._rvs.values():
                    if rv.observed:
                        rv.observed = False
                        m._draw(rv)
            return
        items = dict(bindings or {})
        items.update(kwargs)
        for path, value in items.items():
            value = as_tensor(value)
            self._observations[path] = value
            self._matched.discard(path)
            try:
                module, leaf = self._resolve(path)
            except KeyError:
                continue
            rv = module._rvs.get(leaf)
            if rv is not None:
                rv.value = value
                rv.observed = True
                rv.guide_dist = None
                self._matched.add(path)

    def _lookup_observation(self, name: str) -> Optional[Tensor]:
        path = name
        node: Optional[PModule] = self
        while node is not None:
            if path in node._observations:
                node._matched.add(path)
                return node._observations[path]
            if node._parent is None:
                break
            path = f"{node._name}.{path}"
            node = node._parent
        return None

    def unmatched_observations(self) -> List[str]:
        """Bindings that no random variable has picked up yet."""
        out = []
        for prefix, m in self.named_modules():
            for path in m._observations:
                if path not in m._matched:
                    out.append(f"{prefix}.{path}" if prefix else path)
        return out

    # -- parameters -------------------------------------------------------
    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        seen = set()
        for mprefix, m in self.named_modules(prefix):
            own = [(n, p) for n, p in m._params.items()]
            own += list(m.posterior.named_parameters())
            for n, p in own:
                if id(p) in seen:
                    continue
                seen.add(id(p))
                yield (f"{mprefix}.{n}" if mprefix else n), p

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    # -- transforms -------------------------------------------------------
    def apply(self, fn: Callable[["PModule"], object]) -> "PModule":
        """Apply ``fn`` to every module, children first."""
        for child in list(self._modules.values()):
            child.apply(fn)
        fn(self)
        return self

    def set_posterior(self, posterior: Posterior):
        """Swap the posterior and rebuild guides at the current values."""
        self.posterior = posterior
        for rv in self._rvs.values():
            if rv.value is None:
                continue
            dynamic = dynamic_detect(rv.prior)
            key = posterior.guide_key(rv.name, rv.prior, dynamic)
            if key not in posterior.guides:
                posterior.guides[key] = posterior.build_guide(
                    key, rv.name, rv.prior, dynamic, init_value=rv.value, scope=rv.scope
                )
            rv.guide_key = key
            if not rv.observed:
                rv.guide_dist = posterior.guides[key].distribution(rv.prior)
                if isinstance(rv.guide_dist, PointMassDist):
                    rv.value = rv.guide_dist.rsample()

    def __repr__(self):
        lines = [f"{type(self).__name__}(posterior={self.posterior!r})"]
        for name, rv in self._rvs.items():
            lines.append(f"  {name}: {rv.prior!r}")
        for name, child in self._modules.items():
            sub = repr(child).replace("\n", "\n  ")
            lines.append(f"  ({name}): {sub}")
        return "\n".join(lines)


# -- functional interface ---------------------------------------------------------


def sample(m: PModule) -> None:
    """Redraw every unobserved random variable below ``m`` from its guide."""
    for module in m.modules():
        for rv in module._rvs.values():
            if not rv.observed and rv.value is not None:
                module._draw(rv)


def _learnable_reparameterized(rv: RandomVariable) -> bool:
    # guides that are the prior itself cancel against log p exactly; leave them whole
    guide = rv.guide
    return rv.guide_dist.has_rsample and guide is not None and bool(guide.params) and not guide.dynamic


def _detached(dist: Distribution) -> Distribution:
    params = {k: Tensor(v.data) for k, v in dist.params.items()}
    return type(dist)(**params, validate=False)


def pq_terms(m: PModule, path_derivative: bool = False) -> List[PQTerm]:
    """One (scope, log p, log q, observed) entry per variable touched this pass.

    With ``path_derivative`` the guide density inside ``log q`` is evaluated
    with detached parameters, so gradients flow only through the sampled
    value. Values are unchanged; the dropped score term has zero mean.
    """
    modules = list(m.modules())
    if all(mod._ledger is None for mod in modules):
        raise StaleLedgerError("no forward pass has run on this module")
    terms = []
    for mod in modules:
        for name in mod._ledger or ():
            rv = mod._rvs.get(name)
            if rv is None:
                continue
            log_p = T.sum(rv.prior.log_prob(rv.value))
            if rv.observed or rv.guide_dist is None or isinstance(rv.guide_dist, PointMassDist):
                log_q = Tensor(0.0)
            elif path_derivative and _learnable_reparameterized(rv):
                log_q = T.sum(_detached(rv.guide_dist).log_prob(rv.value))
            else:
                log_q = T.sum(rv.guide_dist.log_prob(rv.value))
            terms.append(PQTerm(rv.scope, log_p, log_q, rv.observed))
    return terms


def parameters(m: PModule) -> List[Parameter]:
    return m.parameters()


def named_parameters(m: PModule) -> List[Tuple[str, Parameter]]:
    return list(m.named_parameters())


def set_posteriors(kind: Union[type, Posterior] = PointMass) -> Callable[[PModule], None]:
    """A transformer for :meth:`PModule.apply` that installs fresh posteriors.

    ``kind`` is a posterior class or a configured instance used as a template.
    """

    def fn(module: PModule):
        posterior = kind() if isinstance(kind, type) else kind.fresh()
        module.set_posterior(posterior)

    return fn
