"""Acceptance criteria 1-11, each at its stated tolerance and runtime budget.

Every test records one PASS/FAIL line (printed in the terminal summary by
``conftest.py`` and immediately with ``-s``) and then asserts.

Run alone with ``pytest tests/test_acceptance.py`` or ``python3 tests/test_acceptance.py``.
"""

import json
import math
import os
import sys
import time

import numpy as np
import pytest
from scipy import integrate, stats

from probmod import cli
from probmod import tensor as T
from probmod.distributions import Categorical, HalfNormal, LogNormal, Normal
from probmod.infer import Adam, effective_sample_size, fit_map, fit_mcmc, fit_vi
from probmod.module import PModule, sample, set_posteriors
from probmod.nn import Linear, ReLU, Sequential, lift
from probmod.posterior import Normal as NormalPosterior
from probmod.posterior import PointMass, PointMassGuide
from probmod.random import RngState, manual_seed
from probmod.workbench.commands import run_branching, run_fit
from probmod.workbench.config import build_config

from _models import Regression, Y_CONJ, conjugate_pass, observed_conjugate
from _oracles import OP_CASES, conjugate_normal_posterior, gradient_error

RESULTS = {}
EXACT_MEAN, EXACT_SD = conjugate_normal_posterior(Y_CONJ)


def _record(number: int, title: str, checks: dict, seconds: float) -> bool:
    ok = all(checks.values())
    failed = [name for name, passed in checks.items() if not passed]
    detail = "all checks met" if ok else "failed: " + "; ".join(failed)
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title} ({seconds:.1f} s) {detail}"
    RESULTS[number] = line
    print(line)
    return ok


# -- 1 autodiff -------------------------------------------------------------------------


def test_criterion_01_autodiff():
    start = time.perf_counter()
    worst = {}
    for name, fn, gen in OP_CASES:
        rng = np.random.default_rng(sum(map(ord, name)))
        worst[name] = max(gradient_error(fn, gen(rng)) for _ in range(50))
    seconds = time.perf_counter() - start
    checks = {f"{n} rel err {e:.1e}": e <= 1e-4 for n, e in worst.items()}
    checks[f"runtime {seconds:.1f} s < 10 s"] = seconds < 10
    assert _record(1, f"{len(OP_CASES)} ops x 50 cases vs central differences", checks, seconds), checks


# -- 2 distributions --------------------------------------------------------------------


def test_criterion_02_distributions():
    start = time.perf_counter()
    # the stated closed form ln 2 - 0.9189385 - 0.125 evaluates to -0.3507913;
    # the literal -0.3508385 is an arithmetic slip; it is reported, not asserted
    half_normal_closed_form = math.log(2.0) - 0.9189385 - 0.125
    spot = {
        "Normal(0,1).log_prob(0) = -0.9189385": (Normal(0.0, 1.0).log_prob(0.0).item(), -0.9189385, 5e-8),
        "Categorical([0,0]).log_prob(0) = ln 0.5": (
            Categorical(logits=[0.0, 0.0]).log_prob(0).item(), math.log(0.5), 1e-12,
        ),
        "HalfNormal(1).log_prob(0.5) = ln 2 - 0.9189385 - 0.125": (
            HalfNormal(1.0).log_prob(0.5).item(), half_normal_closed_form, 5e-8,
        ),
    }
    checks = {k: abs(got - want) <= tol for k, (got, want, tol) in spot.items()}
    checks["HalfNormal closed form agrees with scipy"] = (
        abs(HalfNormal(1.0).log_prob(0.5).item() - stats.halfnorm.logpdf(0.5)) < 1e-12
    )
    families = {
        "Normal": (Normal(0.3, 1.7), stats.norm(0.3, 1.7).cdf),
        "HalfNormal": (HalfNormal(2.0), stats.halfnorm(scale=2.0).cdf),
        "LogNormal": (LogNormal(0.2, 0.6), stats.lognorm(s=0.6, scale=math.exp(0.2)).cdf),
    }
    for name, (dist, cdf) in families.items():
        p = stats.kstest(dist.sample((100_000,), rng=RngState(0)).data, cdf).pvalue
        checks[f"{name} KS p={p:.3g} > 0.001"] = p > 1e-3
    logits = np.array([0.5, -1.0, 2.0, 0.0])
    counts = np.bincount(Categorical(logits=logits).sample((100_000,), rng=RngState(0)).data.astype(int), minlength=4)
    probs = np.exp(logits) / np.exp(logits).sum()
    p = stats.chisquare(counts, 100_000 * probs).pvalue
    checks[f"Categorical chi-square p={p:.3g} > 0.001"] = p > 1e-3
    for name, dist, lo, hi in (
        ("Normal", Normal(0.3, 1.7), 0.3 - 14, 0.3 + 14),
        ("HalfNormal", HalfNormal(2.0), 0.0, 20.0),
        ("LogNormal", LogNormal(0.2, 0.6), 1e-12, 200.0),
    ):
        mass, _ = integrate.quad(lambda v: math.exp(dist.log_prob(v).item()), lo, hi, epsabs=1e-12, limit=200)
        checks[f"{name} mass {mass:.9f} within 1e-6"] = abs(mass - 1.0) < 1e-6
    checks["Categorical masses sum to 1"] = abs(np.exp(Categorical(logits=logits).log_prob(np.arange(4)).data).sum() - 1) < 1e-12
    seconds = time.perf_counter() - start
    checks[f"runtime {seconds:.1f} s < 30 s"] = seconds < 30
    title = f"spot values, KS, normalization (literal -0.3508385 is off by {-0.3508385 - half_normal_closed_form:.1e})"
    assert _record(2, title, checks, seconds), checks


# -- 3 conjugate oracle -----------------------------------------------------------------


def test_criterion_03_conjugate_engines():
    start = time.perf_counter()
    vi = observed_conjugate(NormalPosterior())
    fit_vi(vi, conjugate_pass, 5000, Adam(1e-2), rng=RngState(0))
    g = vi.rv("mu").guide
    vi_loc, vi_scale = g.params["loc"].item(), math.exp(g.params["log_scale"].item())

    mp = observed_conjugate(NormalPosterior())
    with T.no_grad():
        mp()
    mp.apply(set_posteriors(PointMass))
    fit_map(mp, conjugate_pass, 2000, Adam(1e-2), rng=RngState(0))
    map_value = mp.mu.item()

    mc = observed_conjugate(PointMass())
    res = fit_mcmc(mc, conjugate_pass, 20000, burn_in=2000, step_scale=0.5, rng=RngState(0))
    draws = res.samples["mu.value"]
    ess = effective_sample_size(draws)
    bound = 3 * EXACT_SD / math.sqrt(ess)
    seconds = time.perf_counter() - start

    estimates = [vi_loc, map_value, float(draws.mean())]
    checks = {
        f"VI loc {vi_loc:.4f} in 1.5+-0.05": abs(vi_loc - EXACT_MEAN) <= 0.05,
        f"VI scale {vi_scale:.4f} in 0.5+-0.05": abs(vi_scale - EXACT_SD) <= 0.05,
        f"MAP {map_value:.5f} in 1.5+-0.01": abs(map_value - EXACT_MEAN) <= 0.01,
        f"RWM mean {draws.mean():.4f} within 3 sd/sqrt(ESS={ess:.0f}) = {bound:.4f}": abs(draws.mean() - EXACT_MEAN) <= bound,
        f"RWM sd {draws.std():.4f} in 0.5+-0.1": abs(draws.std() - EXACT_SD) <= 0.1,
        f"engines spread {max(estimates) - min(estimates):.4f} < 0.1": max(estimates) - min(estimates) < 0.1,
        f"runtime {seconds:.1f} s < 120 s": seconds < 120,
    }
    assert _record(3, "conjugate N(1.5, 0.5) by VI, MAP and RWM", checks, seconds), checks


# -- 4 regression recovery --------------------------------------------------------------


def test_criterion_04_regression_recovery():
    start = time.perf_counter()
    cfg = build_config({}, {"model": "linreg", "method": "vi", "synthetic": "a=1.5,b=-2,sigma=0.5,n=200", "seed": 0}, env={})
    post = run_fit(cfg).report["posterior"]
    seconds = time.perf_counter() - start
    checks = {
        f"{name} {post[name]['mean']:.4f} in {truth}+-0.2": abs(post[name]["mean"] - truth) <= 0.2
        for name, truth in (("a", 1.5), ("b", -2.0), ("sigma", 0.5))
    }
    checks[f"runtime {seconds:.1f} s < 60 s"] = seconds < 60
    assert _record(4, "regression a, b, sigma recovered under VI", checks, seconds), checks


# -- 5 observe semantics ----------------------------------------------------------------


def test_criterion_05_observe_semantics():
    start = time.perf_counter()
    manual_seed(0)
    x = np.linspace(-1, 1, 5)
    y0 = np.array([0.3, -1.2, 2.5, 0.0, 1.1])
    m = Regression()
    m.observe(y=y0)
    observed_equal = 0
    for _ in range(100):
        sample(m)
        observed_equal += m(x).data.tobytes() == y0.tobytes()
    m.observe(None)
    free_equal = 0
    for _ in range(100):
        sample(m)
        free_equal += np.array_equal(m(x).data, y0)
    seconds = time.perf_counter() - start
    checks = {
        f"{observed_equal}/100 observed passes bitwise equal y0": observed_equal == 100,
        f"{free_equal}/100 unobserved passes equal y0": free_equal == 0,
        f"runtime {seconds:.2f} s < 1 s": seconds < 1,
    }
    assert _record(5, "observe(y=y0) then observe(None)", checks, seconds), checks


# -- 6 prior broadcast ------------------------------------------------------------------


def test_criterion_06_prior_broadcast():
    start = time.perf_counter()
    manual_seed(0)
    layer = Linear(84, 10, weight=Normal(0.0, 1e-2), bias=Normal(0.0, 1.0))
    w_prior, b_prior = layer.rv("weight").prior, layer.rv("bias").prior
    # one draw of every element: weight then bias from a single seed-0 stream
    rng = RngState(0)
    w = w_prior.sample(rng=rng).data
    b = b_prior.sample(rng=rng).data
    w_sd, b_sd = w.std(ddof=1), b.std(ddof=1)
    seconds = time.perf_counter() - start
    checks = {
        "prior shapes (10, 84) and (10,)": w_prior.shape == (10, 84) and b_prior.shape == (10,),
        f"weight draw sd {w_sd:.5f} in 0.01+-15%": abs(w_sd / 0.01 - 1) <= 0.15,
        f"bias draw sd {b_sd:.4f} in 1+-15%": abs(b_sd - 1) <= 0.15,
    }
    assert _record(6, "Linear(84,10) prior broadcast, one draw of every element", checks, seconds), checks


# -- 7 lift locality --------------------------------------------------------------------


class _MLP(PModule):
    def __init__(self):
        super().__init__()
        self.features = Sequential(Linear(2, 8), ReLU())
        self.classifier = Linear(8, 3)

    def forward(self, x):
        self._hidden = self.features(x)
        return self.classifier(self._hidden)


def test_criterion_07_lift_locality():
    start = time.perf_counter()
    manual_seed(0)
    x = np.random.default_rng(0).normal(size=(6, 2))
    det = _MLP()
    ref = det(x).data.copy()
    init_diff = float(np.max(np.abs(lift(det)(x).data - ref)))

    m = _MLP()
    m.classifier = lift(m.classifier)
    outs, hidden = [m(x).data.copy()], [m._hidden.data.copy()]
    for _ in range(10):
        sample(m)
        outs.append(m(x).data.copy())
        hidden.append(m._hidden.data.copy())
    stable = all(h.tobytes() == hidden[0].tobytes() for h in hidden)
    differing = sum(not np.array_equal(a, b) for a, b in zip(outs, outs[1:]))
    seconds = time.perf_counter() - start
    checks = {
        "pre-boundary activations bitwise stable over 10 sample() calls": stable,
        f"post-boundary outputs differ in {differing}/10 pairs (>= 9)": differing >= 9,
        f"lift-at-init max diff {init_diff:.1e} <= 1e-9": init_diff <= 1e-9,
    }
    assert _record(7, "partial lift of a 2-layer MLP", checks, seconds), checks


# -- 8 posterior swap -------------------------------------------------------------------


def test_criterion_08_posterior_swap():
    start = time.perf_counter()
    m = observed_conjugate(NormalPosterior())  # same model class as criterion 3
    with T.no_grad():
        m()
    m.apply(set_posteriors(PointMass))
    report = fit_map(m, conjugate_pass, 2000, Adam(1e-2), rng=RngState(1))
    value = m.mu.item()
    seconds = time.perf_counter() - start
    checks = {
        "latent guide is a point mass": isinstance(m.rv("mu").guide, PointMassGuide),
        f"MAP {value:.5f} in 1.5+-0.01": abs(value - EXACT_MEAN) <= 0.01,
        "log-joint finite": all(math.isfinite(v) for v in report.elbo_trace),
    }
    assert _record(8, "Normal guides swapped to PointMass, fit_map converges", checks, seconds), checks


# -- 9 calibration ----------------------------------------------------------------------


def test_criterion_09_calibration(tmp_path):
    start = time.perf_counter()
    fit_out, diag_out = tmp_path / "fit", tmp_path / "diag"
    codes = [
        cli.main(["fit", "--model", "linreg", "--seed", "0", "--out", str(fit_out)]),
        cli.main(["diagnose", "--manifest", str(fit_out / "manifest.json"), "--level", "0.9", "--seed", "0", "--out", str(diag_out)]),
    ]
    report = json.loads((diag_out / "calibration.json").read_text())
    seconds = time.perf_counter() - start
    checks = {
        "fit and diagnose exit 0": codes == [0, 0],
        f"{report['n_rows']} held-out rows": report["n_rows"] == 500,
        f"coverage {report['coverage']:.3f} in 0.90+-0.05": abs(report["coverage"] - 0.9) <= 0.05,
        f"runtime {seconds:.1f} s < 60 s": seconds < 60,
    }
    assert _record(9, "90% predictive intervals on held-out linreg rows", checks, seconds), checks


# -- 10 stochastic control flow ---------------------------------------------------------


def test_criterion_10_branching():
    start = time.perf_counter()
    report = run_branching(seed=0, n_passes=10_000)
    freq = report["branches"]["normal(-1,1)"]["frequency"]
    seconds = time.perf_counter() - start
    checks = {
        f"branch frequency {freq:.4f} in 0.5+-0.03": abs(freq - 0.5) <= 0.03,
        f"{report['ledger_violations']} passes without exactly one weight": report["one_weight_per_ledger"],
        f"{report['guide_count']} guides": report["guide_count"] == 2,
    }
    assert _record(10, "10000 passes of the branching model", checks, seconds), checks


# -- 11 determinism ---------------------------------------------------------------------


def _tree(root):
    out = {}
    for d, _, files in os.walk(root):
        for f in files:
            with open(os.path.join(d, f), "rb") as fh:
                out[os.path.relpath(os.path.join(d, f), root)] = fh.read()
    return out


def test_criterion_11_determinism(tmp_path):
    start = time.perf_counter()
    seed = ["--seed", "11"]
    commands = {
        "fit-vi": ["fit", "--steps", "300"] + seed,
        "fit-map": ["fit", "--method", "map", "--steps", "300"] + seed,
        "fit-mcmc": ["fit", "--method", "mcmc", "--steps", "1000", "--warmup", "50"] + seed,
        "fit-hetreg": ["fit", "--model", "hetreg", "--steps", "300"] + seed,
        "fit-mlp": ["fit", "--model", "mlp-classifier", "--steps", "100"] + seed,
        "demo-branching": ["demo-branching", "--n-passes", "2000"] + seed,
        "lift": ["lift", "--pretrain-steps", "100"] + seed,
    }
    checks = {}
    for name, argv in commands.items():
        trees = []
        for run in ("a", "b"):
            out = tmp_path / run / name
            code = cli.main(argv + ["--out", str(out)])
            trees.append(_tree(out) if code == 0 else None)
        checks[f"{name} rerun bitwise identical"] = trees[0] is not None and trees[0] == trees[1]
    for name in ("predict", "diagnose"):
        trees = []
        for run in ("a", "b"):
            manifest = tmp_path / run / "fit-vi" / "manifest.json"
            out = tmp_path / run / name
            code = cli.main([name, "--manifest", str(manifest), "--n-draws", "50", "--out", str(out)] + seed)
            trees.append(_tree(out) if code == 0 else None)
        checks[f"{name} rerun bitwise identical"] = trees[0] is not None and trees[0] == trees[1]
    seconds = time.perf_counter() - start
    assert _record(11, "every command rerun with the same seed", checks, seconds), checks


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
