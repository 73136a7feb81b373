"""Fitting loops: stochastic VI, MAP, and random-walk Metropolis.

All three share one objective, ``sum(log p - log q)`` over the pass
ledger. With point-mass guides ``log q`` is zero, so the ELBO becomes the
log-joint and MAP is the VI loop with a different posterior.
"""

from __future__ import annotations

import copy
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from . import tensor as T
from .module import PModule, PQTerm, pq_terms, sample
from .posterior import PointMass, PointMassGuide, PriorGuide
from .random import RngState, get_rng, using_rng
from .tensor import Parameter, Tensor, no_grad

__all__ = [
    "ElboEstimate",
    "FitReport",
    "McmcChain",
    "McmcResult",
    "SGD",
    "Adam",
    "NumericalAbort",
    "MissingGradError",
    "GuideKindError",
    "elbo",
    "log_joint",
    "fit_vi",
    "fit_map",
    "fit_mcmc",
    "effective_sample_size",
]

logger = logging.getLogger(__name__)

ModelPass = Callable[[PModule], object]


class NumericalAbort(FloatingPointError):
    """The objective became non-finite during fitting."""

    def __init__(self, message: str, step: Optional[int] = None, scope: Optional[str] = None):
        super().__init__(message)
        self.step = step
        self.scope = scope


class MissingGradError(RuntimeError):
    pass


class GuideKindError(TypeError):
    """The requested engine needs point-mass guides."""


# -- optimizers -------------------------------------------------------------------


class SGD:
    def __init__(self, lr: float = 1e-2):
        self.lr = lr
        self.step_count = 0

    def step(self, params: Sequence[Parameter]) -> None:
        _check_grads(params)
        for p in params:
            p.data = p.data - self.lr * p.grad.data
        self.step_count += 1


class Adam:
    """Bias-corrected Adam. Moment buffers are created lazily per parameter."""

    def __init__(self, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.step_count = 0
        self.state: Dict[int, list] = {}

    def step(self, params: Sequence[Parameter]) -> None:
        _check_grads(params)
        self.step_count += 1
        for p in params:
            st = self.state.get(id(p))
            if st is None:
                # [m, v, per-parameter step count]; params can appear mid-fit
                st = self.state[id(p)] = [np.zeros(p.shape), np.zeros(p.shape), 0, p]
            g = p.grad.data
            st[0] = self.beta1 * st[0] + (1 - self.beta1) * g
            st[1] = self.beta2 * st[1] + (1 - self.beta2) * g * g
            st[2] += 1
            m_hat = st[0] / (1 - self.beta1 ** st[2])
            v_hat = st[1] / (1 - self.beta2 ** st[2])
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _check_grads(params):
    missing = [p.name or repr(p) for p in params if p.grad is None]
    if missing:
        raise MissingGradError(f"no gradient for: {', '.join(missing)}")


# -- ELBO -------------------------------------------------------------------------


@dataclass
class ElboEstimate:
    value: Tensor
    n_samples: int
    terms: List[PQTerm]
    diagnostic: Optional[str] = None

    def __float__(self):
        return self.value.item()


def _first_nonfinite(terms: List[PQTerm]) -> Optional[str]:
    for t in terms:
        if not (np.isfinite(t.log_p.data).all() and np.isfinite(t.log_q.data).all()):
            return t.scope
    return None


def elbo(m: PModule, model_pass: ModelPass, n_samples: int = 1, path_derivative: bool = False) -> ElboEstimate:
    """Monte Carlo estimate of E_q[log p - log q] using ``n_samples`` passes.

    ``path_derivative`` selects the lower-variance gradient that ignores the
    zero-mean score term of the guide; the value is the same either way.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    total = None
    terms: List[PQTerm] = []
    diagnostic = None
    for _ in range(n_samples):
        m.new_pass()
        sample(m)
        model_pass(m)
        terms = pq_terms(m, path_derivative)
        acc = Tensor(0.0)
        for t in terms:
            acc = acc + (t.log_p - t.log_q)
        total = acc if total is None else total + acc
        if diagnostic is None and not np.isfinite(acc.data):
            scope = _first_nonfinite(terms)
            diagnostic = f"non-finite ELBO term at {scope!r}" if scope else "non-finite ELBO"
    value = total / n_samples if n_samples > 1 else total
    return ElboEstimate(value, n_samples, terms, diagnostic)


def log_joint(m: PModule, model_pass: ModelPass, jacobian: bool = True) -> float:
    """Log-joint at the current point-mass state, on unconstrained coordinates."""
    with no_grad():
        est = elbo(m, model_pass, 1)
    value = est.value.item()
    if jacobian:
        value += sum(g.log_jacobian() for g in _pointmass_guides(m))
    return value


# -- reports ----------------------------------------------------------------------


@dataclass
class FitReport:
    method: str
    steps: int
    seed: Optional[int]
    elbo_trace: List[float] = field(default_factory=list)
    params: Dict[str, np.ndarray] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "steps": self.steps,
            "seed": self.seed,
            "elbo_trace": [float(v) for v in self.elbo_trace],
            "params": {k: np.asarray(v).tolist() for k, v in self.params.items()},
        }


def _snapshot(m: PModule) -> Dict[str, np.ndarray]:
    return {name: p.data.copy() for name, p in m.named_parameters()}


def fit_vi(
    m: PModule,
    model_pass: ModelPass,
    steps: int,
    opt=None,
    n_samples: int = 1,
    rng: Optional[RngState] = None,
    method: str = "vi",
    path_derivative: bool = True,
) -> FitReport:
    """Maximize the ELBO by gradient ascent on every module/guide parameter.

    The default path-derivative gradient has zero variance when the guide
    matches the posterior exactly, so the final iterate settles instead of
    jittering around the optimum. Pass ``path_derivative=False`` for the
    plain reparameterization gradient.
    """
    if steps < 0:
        raise ValueError("steps must be non-negative")
    opt = opt if opt is not None else Adam(1e-2)
    seed = rng.seed if rng is not None else None
    trace: List[float] = []
    with using_rng(rng):
        for step in range(steps):
            est = elbo(m, model_pass, n_samples, path_derivative)
            value = est.value.item()
            if not math.isfinite(value):
                scope = _first_nonfinite(est.terms)
                raise NumericalAbort(
                    f"non-finite loss at step {step}" + (f" (first bad term: {scope})" if scope else ""),
                    step=step,
                    scope=scope,
                )
            m.zero_grad()
            if est.value.requires_grad:
                (-est.value).backward()
            live = [p for p in m.parameters() if p.grad is not None]
            if live:
                opt.step(live)
            trace.append(value)
    return FitReport(method, steps, seed, trace, _snapshot(m))


def _non_pointmass_scopes(m: PModule) -> List[str]:
    bad = []
    for prefix, mod in m.named_modules():
        for guide in mod.posterior.guides.values():
            if not isinstance(guide, (PointMassGuide, PriorGuide)):
                bad.append(f"{prefix}.{guide.leaf}" if prefix else guide.leaf)
    return bad


def _pointmass_guides(m: PModule) -> List[PointMassGuide]:
    out = []
    for mod in m.modules():
        out.extend(g for g in mod.posterior.guides.values() if isinstance(g, PointMassGuide))
    return out


def _require_pointmass(m: PModule, engine: str):
    bad = _non_pointmass_scopes(m)
    if bad:
        raise GuideKindError(
            f"{engine} needs PointMass guides; offending scopes: {', '.join(sorted(set(bad)))}. "
            "Use m.apply(set_posteriors(PointMass)) first."
        )


def fit_map(
    m: PModule,
    model_pass: ModelPass,
    steps: int,
    opt=None,
    rng: Optional[RngState] = None,
) -> FitReport:
    """Maximize the log-joint over point-mass guide values."""
    _require_pointmass(m, "MAP")
    if steps > 0:
        # first pass creates guides for variables declared inside forward
        with using_rng(rng), no_grad():
            elbo(m, model_pass, 1)
        _require_pointmass(m, "MAP")
    return fit_vi(m, model_pass, steps, opt, n_samples=1, rng=rng, method="map")


# -- Metropolis -------------------------------------------------------------------


@dataclass
class McmcChain:
    state: Dict[str, np.ndarray]
    log_joint: float
    step_scale: float
    accept_count: int = 0
    step_count: int = 0

    @property
    def acceptance_rate(self) -> float:
        return self.accept_count / self.step_count if self.step_count else 0.0


@dataclass
class McmcResult:
    """Post-burn-in draws keyed by parameter name.

    ``samples`` holds constrained values, ``unconstrained`` the chain
    coordinates; ``chain`` gives each row's chain index.
    """

    samples: Dict[str, np.ndarray]
    unconstrained: Dict[str, np.ndarray]
    chain: np.ndarray
    acceptance_rate: float
    log_joint_trace: List[float]
    acceptance_trace: List[float]
    seed: Optional[int] = None
    chains: List[McmcChain] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "method": "mcmc",
            "seed": self.seed,
            "acceptance_rate": self.acceptance_rate,
            "log_joint_trace": [float(v) for v in self.log_joint_trace],
            "acceptance_trace": [float(v) for v in self.acceptance_trace],
            "n_kept": int(len(self.chain)),
            "posterior_mean": {k: np.mean(v, axis=0).tolist() for k, v in self.samples.items()},
            "posterior_sd": {k: np.std(v, axis=0).tolist() for k, v in self.samples.items()},
        }


def _check_latents(m: PModule):
    for mod in m.modules():
        for rv in mod._rvs.values():
            if rv.observed or not rv.prior.discrete:
                continue
            guide = rv.guide
            if isinstance(guide, PriorGuide) and guide.dynamic:
                continue
            raise TypeError(f"Metropolis cannot move discrete latent {rv.scope!r}")


def _run_chain(m, model_pass, n_steps, burn_in, step_scale, rng, chain_id):
    with using_rng(rng):
        lj = log_joint(m, model_pass)
        _check_latents(m)
        guides = _pointmass_guides(m)
        names = {id(p): n for n, p in m.named_parameters()}
        coords = [(names[id(g.unconstrained)], g) for g in guides]
        chain = McmcChain({n: g.unconstrained.data.copy() for n, g in coords}, lj, step_scale)
        kept_u = {n: [] for n, _ in coords}
        kept_v = {n: [] for n, _ in coords}
        trace, acc_trace = [], []
        post_accepts = 0
        for step in range(n_steps):
            old = [g.unconstrained.data for _, g in coords]
            for (_, g), u in zip(coords, old):
                g.unconstrained.data = u + step_scale * rng.normal(u.shape)
            proposal = log_joint(m, model_pass)
            log_alpha = proposal - chain.log_joint
            accept = math.isfinite(proposal) and math.log(1.0 - rng.uniform()) < log_alpha
            if accept:
                chain.log_joint = proposal
                chain.accept_count += 1
                post_accepts += step >= burn_in
            else:
                for (_, g), u in zip(coords, old):
                    g.unconstrained.data = u
            chain.step_count += 1
            trace.append(chain.log_joint)
            acc_trace.append(chain.accept_count / chain.step_count)
            if step >= burn_in:
                for n, g in coords:
                    u = g.unconstrained.data
                    kept_u[n].append(u.copy())
                    kept_v[n].append(np.exp(u) if g.positive else u.copy())
        chain.state = {n: g.unconstrained.data.copy() for n, g in coords}
        # leave the module holding the final state
        with no_grad():
            elbo(m, model_pass, 1)
    return chain, kept_u, kept_v, trace, acc_trace, post_accepts, chain_id


def fit_mcmc(
    m: PModule,
    model_pass: ModelPass,
    n_steps: int,
    burn_in: int = 0,
    step_scale: float = 0.1,
    rng: Optional[RngState] = None,
    n_chains: int = 1,
) -> McmcResult:
    """Random-walk Metropolis over point-mass guide values.

    Positive-support latents move on the log scale; the log-Jacobian is
    added to the target. With ``n_chains > 1`` the extra chains run on deep
    copies of ``m`` in worker threads, each with its own split stream.
    """
    _require_pointmass(m, "MCMC")
    if burn_in < 0 or burn_in > n_steps:
        raise ValueError("burn_in must lie in [0, n_steps]")
    if step_scale < 0:
        raise ValueError("step_scale must be non-negative")
    rng = rng if rng is not None else get_rng()
    # creates guides for forward-declared variables before copying
    with using_rng(rng), no_grad():
        elbo(m, model_pass, 1)
    _require_pointmass(m, "MCMC")

    if n_chains == 1:
        results = [_run_chain(m, model_pass, n_steps, burn_in, step_scale, rng, 0)]
    else:
        streams = rng.split(n_chains)
        models = [m] + [copy.deepcopy(m) for _ in range(n_chains - 1)]
        with ThreadPoolExecutor(max_workers=n_chains) as pool:
            futures = [
                pool.submit(_run_chain, mod, model_pass, n_steps, burn_in, step_scale, s, i)
                for i, (mod, s) in enumerate(zip(models, streams))
            ]
            results = [f.result() for f in futures]

    samples: Dict[str, list] = {}
    unconstrained: Dict[str, list] = {}
    chain_ids = []
    for chain, kept_u, kept_v, _, _, _, cid in results:
        for n in kept_v:
            samples.setdefault(n, []).extend(kept_v[n])
            unconstrained.setdefault(n, []).extend(kept_u[n])
        chain_ids.extend([cid] * (n_steps - burn_in))
    kept = (n_steps - burn_in) * len(results)
    rate = sum(r[5] for r in results) / kept if kept else 0.0
    if kept and rate < 0.01:
        warnings.warn(f"Metropolis acceptance rate {rate:.4f} is below 0.01; reduce step_scale", RuntimeWarning)
    return McmcResult(
        samples={k: np.array(v) for k, v in samples.items()},
        unconstrained={k: np.array(v) for k, v in unconstrained.items()},
        chain=np.array(chain_ids, dtype=np.int64),
        acceptance_rate=rate,
        log_joint_trace=results[0][3],
        acceptance_trace=results[0][4],
        seed=rng.seed,
        chains=[r[0] for r in results],
    )


def effective_sample_size(x: np.ndarray) -> float:
    """ESS of a 1-D chain from its autocorrelation (Geyer initial positive sequence)."""
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    if n < 4:
        return float(n)
    x = x - x.mean()
    var = x.var()
    if var == 0:
        return float(n)
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size)
    acf = np.fft.irfft(f * np.conj(f), size)[:n] / (n * var)
    tau = -1.0
    for k in range(0, n - 1, 2):
        pair = acf[k] + acf[k + 1]
        if pair <= 0:
            break
        tau += 2.0 * pair
    return float(n / max(tau, 1e-12))
