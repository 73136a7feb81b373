"""Workbench commands. Each takes a :class:`RunConfig` and writes artifacts under ``cfg.out``.

Inputs are validated before anything is written, so a data error leaves
no partial artifacts behind. Every artifact records the config hash and
seed, and every random draw comes from a stream derived from the seed.
"""

from __future__ import annotations

import copy
import json
import math
import os
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .. import persist
from ..infer import Adam, FitReport, fit_map, fit_mcmc, fit_vi
from ..module import PModule, sample, set_posteriors
from ..posterior import NormalGuide, PointMass, PointMassGuide
from ..random import RngState, using_rng
from ..tensor import no_grad
from .config import RunConfig
from .data import DataError, Table, generate, parse_synthetic, read_csv, write_csv
from .models import MODEL_SPECS, Branching, MLPClassifier, ModelSpec, lift_scope

DETERMINISTIC_MLP = "mlp-deterministic"


# -- shared plumbing --------------------------------------------------------------


@dataclass
class RunLog:
    lines: List[str] = field(default_factory=list)

    def __call__(self, msg: str) -> None:
        self.lines.append(msg)

    def text(self) -> str:
        return "\n".join(self.lines) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if math.isnan(v):
            return "nan"
        return v
    return obj


def _dump_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _provenance(cfg: RunConfig) -> dict:
    return {"config_hash": cfg.config_hash(), "seed": cfg.seed}


def _write_artifacts(cfg: RunConfig, log: RunLog, files: Dict[str, object]) -> Dict[str, str]:
    """Write everything at once; dict values are JSON payloads, callables write files."""
    os.makedirs(cfg.out, exist_ok=True)
    written = {}
    for name, payload in files.items():
        path = os.path.join(cfg.out, name)
        if callable(payload):
            payload(path)
        else:
            _dump_json(path, payload)
        written[name] = path
    prov = _provenance(cfg)
    header = f"config_hash={prov['config_hash']} seed={prov['seed']}"
    path = os.path.join(cfg.out, "run.log")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n" + log.text())
    written["run.log"] = path
    return written


def load_table(cfg: RunConfig, spec: ModelSpec, purpose: str, require_target: bool = True) -> Table:
    """Rows from ``cfg.data`` or from the model's generator on a ``purpose`` stream."""
    if cfg.data is not None:
        cols = spec.columns if require_target else spec.features
        integer = (spec.target,) if spec.task == "classification" and require_target else ()
        table = read_csv(cfg.data, cols, integer=integer)
        if spec.task == "classification" and require_target:
            bad = sorted(set(table[spec.target].tolist()) - {0, 1})
            if bad:
                raise DataError(f"{cfg.data}: labels must be 0 or 1, found {bad}")
        return table
    params = parse_synthetic(cfg.synthetic, spec.generator)
    return generate(spec.generator, params, RngState(cfg.seed).derive(f"data:{purpose}"))


def _adam(cfg: RunConfig) -> Adam:
    return Adam(cfg.lr, betas=(0.9, cfg.beta2))


def _model_pass(x):
    return lambda m: m(x)


def _observe_target(m: PModule, spec: ModelSpec, table: Table) -> None:
    m.observe({spec.observed: np.asarray(table[spec.target], dtype=np.float64)})


def _needs_pointmass(m: PModule) -> bool:
    return any(not isinstance(mod.posterior, PointMass) for mod in m.modules())


def pretrain_deterministic(cfg: RunConfig, table: Table, log: RunLog) -> PModule:
    spec = MODEL_SPECS["mlp-classifier"]
    rng = RngState(cfg.seed)
    with using_rng(rng.derive("init")):
        det = MLPClassifier(bayesian=False)
    _observe_target(det, spec, table)
    report = fit_vi(det, _model_pass(spec.inputs(table)), cfg.pretrain_steps, _adam(cfg), rng=rng.derive("pretrain"))
    if report.elbo_trace:
        log(f"pretrained deterministic MLP for {cfg.pretrain_steps} steps: log-likelihood {report.elbo_trace[-1]:.6f}")
    det.observe(None)
    return det


def build_model(cfg: RunConfig, spec: ModelSpec, table: Optional[Table], log: RunLog) -> PModule:
    if spec.name == "lifted-mlp" and table is not None:
        det = pretrain_deterministic(cfg, table, log)
        with using_rng(RngState(cfg.seed).derive("lift")):
            m = lift_scope(det, cfg.lift_scope, cfg.prior_scale)
        log(f"lifted {cfg.lift_scope or '<root>'} with prior scale {cfg.prior_scale}")
        return m
    with using_rng(RngState(cfg.seed).derive("init")):
        return spec.factory(cfg)


# -- posterior summaries ----------------------------------------------------------


def _guide_summary(guide) -> Optional[dict]:
    if isinstance(guide, NormalGuide):
        loc = guide.params["loc"].data
        s = np.exp(guide.params["log_scale"].data)
        if guide.positive:
            mean = np.exp(loc + 0.5 * s * s)
            sd = np.sqrt((np.exp(s * s) - 1.0)) * mean
            return {"mean": mean, "sd": sd}
        return {"mean": loc, "sd": s}
    if isinstance(guide, PointMassGuide):
        return {"mean": guide.current_value().data, "sd": np.zeros_like(guide.current_value().data)}
    return None


def posterior_summary(m: PModule, samples: Optional[Dict[str, np.ndarray]] = None) -> dict:
    """Mean and sd of each scalar latent of the root module."""
    out = {}
    for name, rv in m._rvs.items():
        if rv.observed or rv.value is None or rv.value.size != 1:
            continue
        guide = rv.guide
        if samples is not None and isinstance(guide, PointMassGuide):
            pname = next(n for n, p in m.named_parameters() if p is guide.unconstrained)
            u = samples[pname].reshape(len(samples[pname]), -1)[:, 0]
            v = np.exp(u) if guide.positive else u
            out[name] = {"mean": float(v.mean()), "sd": float(v.std())}
            continue
        summ = _guide_summary(guide)
        if summ is not None:
            out[name] = {k: float(np.asarray(v).reshape(-1)[0]) for k, v in summ.items()}
    return out


def guide_summaries(m: PModule) -> dict:
    """Every scalar guide of the root module by key; stochastic branches keep one guide each."""
    out = {}
    for key, guide in sorted(m.posterior.guides.items()):
        summ = _guide_summary(guide)
        if summ is not None and np.asarray(summ["mean"]).size == 1:
            out[key] = {k: float(np.asarray(v).reshape(-1)[0]) for k, v in summ.items()}
    return out


# -- fit --------------------------------------------------------------------------


@dataclass
class FitOutcome:
    model: PModule
    spec: ModelSpec
    report: dict
    samples: Optional[Dict[str, np.ndarray]]
    log: RunLog


def run_fit(cfg: RunConfig, log: Optional[RunLog] = None) -> FitOutcome:
    """Fit in memory; raises DataError / NumericalAbort before anything is written."""
    log = log if log is not None else RunLog()
    spec = MODEL_SPECS[cfg.model]
    table = load_table(cfg, spec, "train")
    x = spec.inputs(table)
    log(f"fit model={cfg.model} method={cfg.method} rows={len(x)} steps={cfg.steps}")
    m = build_model(cfg, spec, table, log)
    if cfg.method in ("map", "mcmc") and _needs_pointmass(m):
        m.apply(set_posteriors(PointMass))
        log(f"method {cfg.method}: applied set_posteriors(PointMass) to every module")
    _observe_target(m, spec, table)
    rng = RngState(cfg.seed)
    model_pass = _model_pass(x)
    samples = None
    report: dict
    if cfg.method == "vi":
        fr = fit_vi(m, model_pass, cfg.steps, _adam(cfg), cfg.n_samples, rng=rng.derive("fit"))
        report = {"elbo_trace": fr.elbo_trace}
        log(f"vi finished: final elbo {_last(fr):.6f}")
    elif cfg.method == "map":
        fr = fit_map(m, model_pass, cfg.steps, _adam(cfg), rng=rng.derive("fit"))
        report = {"log_joint_trace": fr.elbo_trace}
        log(f"map finished: final log-joint {_last(fr):.6f}")
    else:
        warm = fit_map(m, model_pass, cfg.warmup, _adam(cfg), rng=rng.derive("warmup"))
        log(f"mcmc warm start: {cfg.warmup} map steps, log-joint {_last(warm):.6f}")
        res = fit_mcmc(
            m,
            model_pass,
            cfg.steps,
            cfg.effective_burn_in,
            cfg.step_scale,
            rng=rng.derive("fit"),
            n_chains=cfg.n_chains,
        )
        samples = res.unconstrained
        report = res.to_dict()
        report.pop("method")
        report.pop("seed")
        log(
            f"mcmc finished: {cfg.steps} steps, burn-in {cfg.effective_burn_in}, "
            f"acceptance rate {res.acceptance_rate:.4f}"
        )
    report.update(
        {
            "model": cfg.model,
            "method": cfg.method,
            "steps": cfg.steps,
            "n_rows": int(len(x)),
            "posterior": posterior_summary(m, samples),
            "guides": guide_summaries(m),
            "n_parameters": int(sum(p.size for p in m.parameters())),
            "manifest": "manifest.json",
            **_provenance(cfg),
        }
    )
    return FitOutcome(m, spec, report, samples, log)


def _last(fr: FitReport) -> float:
    return fr.elbo_trace[-1] if fr.elbo_trace else float("nan")


def _manifest_meta(cfg: RunConfig, model: str) -> dict:
    # the output directory is not recorded, so artifacts do not depend on where they land
    return {"model": model, "config": cfg.fingerprint(), **_provenance(cfg)}


def cmd_fit(cfg: RunConfig) -> Dict[str, str]:
    outcome = run_fit(cfg)
    meta = _manifest_meta(cfg, cfg.model)

    def save(path):
        persist.save_model(outcome.model, path, samples=outcome.samples, meta=meta)

    return _write_artifacts(cfg, outcome.log, {"manifest.json": save, "fit_report.json": outcome.report})


# -- loading manifests ------------------------------------------------------------


@dataclass
class LoadedModel:
    model: PModule
    spec: ModelSpec
    samples: Optional[Dict[str, np.ndarray]]
    fit_config: RunConfig
    meta: dict


def load_manifest(path: str) -> LoadedModel:
    try:
        with open(path, encoding="utf-8") as fh:
            state = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read manifest {path!r}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"manifest {path!r} is not valid JSON: {exc}") from None
    meta = state.get("meta", {})
    name = meta.get("model")
    if name not in MODEL_SPECS and name != DETERMINISTIC_MLP:
        raise DataError(f"manifest {path!r} names unknown model {name!r}")
    fit_cfg = RunConfig(**meta["config"])
    if name == DETERMINISTIC_MLP:
        spec = MODEL_SPECS["mlp-classifier"]
        with using_rng(RngState(fit_cfg.seed).derive("init")):
            m = MLPClassifier(bayesian=False)
    else:
        spec = MODEL_SPECS[name]
        with using_rng(RngState(fit_cfg.seed).derive("init")):
            m = spec.factory(fit_cfg)
    try:
        samples = persist.load_state_dict(m, state)
    except persist.ManifestError as exc:
        raise DataError(f"manifest {path!r}: {exc}") from None
    return LoadedModel(m, spec, samples or None, fit_cfg, meta)


# -- prediction -------------------------------------------------------------------


def _interval(draws: np.ndarray, mean: np.ndarray, level: float):
    if level >= 1.0:
        return np.full_like(mean, -np.inf), np.full_like(mean, np.inf)
    lo, hi = np.quantile(draws, [(1.0 - level) / 2.0, (1.0 + level) / 2.0], axis=0)
    # keep lower <= mean <= upper even for skewed or tiny draw sets
    return np.minimum(lo, mean), np.maximum(hi, mean)


def _sample_rows(samples: Dict[str, np.ndarray], n_draws: int) -> np.ndarray:
    k = len(next(iter(samples.values())))
    return np.round(np.linspace(0, k - 1, n_draws)).astype(np.int64)


def predictive_draws(
    m: PModule,
    spec: ModelSpec,
    x: np.ndarray,
    n_draws: int,
    rng: RngState,
    samples: Optional[Dict[str, np.ndarray]] = None,
) -> Dict[str, np.ndarray]:
    """Posterior-predictive draws with the likelihood unobserved.

    Regression returns ``mu``, ``scale`` and ``y`` arrays of shape
    (n_draws, rows); classification returns ``probs`` (n_draws, rows, K).
    """
    named = dict(m.named_parameters())
    rows = _sample_rows(samples, n_draws) if samples else None
    out: Dict[str, list] = {}
    with no_grad():
        m.observe(None)
        # a restored model has no random-variable records until a pass runs; prime on a
        # side stream so the draws below consume ``rng`` identically either way
        with using_rng(rng.derive("prime")):
            m(x)
    with using_rng(rng), no_grad():
        for i in range(n_draws):
            if samples:
                for name, arr in samples.items():
                    named[name].data = np.array(arr[rows[i]], dtype=np.float64)
            sample(m)
            m(x)
            if spec.task == "regression":
                out.setdefault("mu", []).append(m._mu.data.copy())
                out.setdefault("scale", []).append(np.broadcast_to(m._scale.data, x.shape).copy())
                out.setdefault("y", []).append(m.rv(spec.observed).value.data.copy())
            else:
                logits = m._logits.data
                z = np.exp(logits - logits.max(axis=-1, keepdims=True))
                out.setdefault("probs", []).append(z / z.sum(axis=-1, keepdims=True))
    return {k: np.array(v) for k, v in out.items()}


def summarize_predictive(spec: ModelSpec, draws: Dict[str, np.ndarray], level: float) -> Dict[str, np.ndarray]:
    if spec.task == "regression":
        y = draws["y"]
        mean = y.mean(axis=0)
        lower, upper = _interval(y, mean, level)
        return {
            "mean": mean,
            "sd": y.std(axis=0),
            "lower": lower,
            "upper": upper,
            "epistemic_sd": draws["mu"].std(axis=0),
            "aleatoric_sd": draws["scale"].mean(axis=0),
        }
    p = draws["probs"][..., 1]
    mean = p.mean(axis=0)
    lower, upper = _interval(p, mean, level)
    if level >= 1.0:
        lower, upper = np.zeros_like(mean), np.ones_like(mean)
    return {
        "mean": mean,
        "sd": p.std(axis=0),
        "lower": lower,
        "upper": upper,
        "predicted_class": draws["probs"].mean(axis=0).argmax(axis=-1).astype(np.int64),
    }


def predict(loaded: LoadedModel, x: np.ndarray, n_draws: int, level: float, seed: int):
    draws = predictive_draws(
        loaded.model, loaded.spec, x, n_draws, RngState(seed).derive("predict"), loaded.samples
    )
    return draws, summarize_predictive(loaded.spec, draws, level)


def _prediction_table(spec: ModelSpec, table: Table, summary: Dict[str, np.ndarray]) -> Table:
    out = {c: np.asarray(table[c], dtype=np.float64) for c in spec.features}
    out.update(summary)
    return out


def cmd_predict(cfg: RunConfig, manifest: str) -> Dict[str, str]:
    log = RunLog()
    loaded = load_manifest(manifest)
    spec = loaded.spec
    table = load_table(cfg, spec, "predict", require_target=False)
    x = spec.inputs(table)
    _, summary = predict(loaded, x, cfg.n_draws, cfg.level, cfg.seed)
    log(f"predict model={loaded.meta['model']} rows={len(x)} n_draws={cfg.n_draws} level={cfg.level}")
    rows = _prediction_table(spec, table, summary)
    columns = list(spec.features) + list(summary)
    prov = _provenance(cfg)
    payload = {
        **prov,
        "fit_config_hash": loaded.meta.get("config_hash"),
        "model": loaded.meta["model"],
        "level": cfg.level,
        "n_draws": cfg.n_draws,
        "columns": columns,
        "rows": [{c: rows[c][i] for c in columns} for i in range(len(x))],
    }

    def save_csv(path):
        comment = f"config_hash={prov['config_hash']} seed={prov['seed']} fit_config_hash={payload['fit_config_hash']}"
        write_csv(path, rows, columns, comment=comment)

    return _write_artifacts(cfg, log, {"predictions.csv": save_csv, "predictions.json": payload})


# -- calibration ------------------------------------------------------------------


def coverage(y: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> float:
    return float(np.mean((y >= lower) & (y <= upper)))


def calibration(spec: ModelSpec, draws: Dict[str, np.ndarray], target: np.ndarray, level: float) -> dict:
    """Coverage at ``level`` plus a reliability table by decile."""
    if spec.task == "regression":
        summary = summarize_predictive(spec, draws, level)
        table = []
        for nominal in np.round(np.arange(1, 11) / 10.0, 1):
            s = summarize_predictive(spec, draws, float(nominal))
            table.append({"nominal": float(nominal), "empirical": coverage(target, s["lower"], s["upper"])})
        return {
            "coverage": coverage(target, summary["lower"], summary["upper"]),
            "reliability": table,
            "mean_interval_width": float(np.mean(summary["upper"] - summary["lower"])),
        }
    probs = draws["probs"].mean(axis=0)
    # credible class sets: most probable classes until their mass reaches level
    order = np.argsort(-probs, axis=-1, kind="stable")
    sorted_p = np.take_along_axis(probs, order, axis=-1)
    cum = np.cumsum(sorted_p, axis=-1)
    size = (cum < level - 1e-12).sum(axis=-1) + 1
    label = target.astype(np.int64)
    rank = np.argmax(order == label[:, None], axis=-1)
    covered = rank < size
    p1 = probs[:, 1]
    bins = np.minimum((p1 * 10).astype(np.int64), 9)
    table = []
    ece = 0.0
    for b in range(10):
        mask = bins == b
        n = int(mask.sum())
        row = {"bin": [b / 10.0, (b + 1) / 10.0], "count": n}
        if n:
            row["mean_predicted"] = float(p1[mask].mean())
            row["observed_frequency"] = float(label[mask].mean())
            ece += n / len(label) * abs(row["mean_predicted"] - row["observed_frequency"])
        table.append(row)
    return {
        "coverage": float(covered.mean()),
        "accuracy": float(np.mean(probs.argmax(axis=-1) == label)),
        "expected_calibration_error": ece,
        "reliability": table,
    }


def cmd_diagnose(cfg: RunConfig, manifest: str) -> Dict[str, str]:
    log = RunLog()
    loaded = load_manifest(manifest)
    spec = loaded.spec
    heldout_cfg = cfg
    if cfg.data is None and cfg.synthetic is None:
        # default held-out set: the fit's generator with 500 fresh rows
        heldout_cfg = RunConfig(**{**asdict(cfg), "synthetic": _with_n(loaded.fit_config.synthetic, 500)})
    table = load_table(heldout_cfg, spec, "heldout")
    x = spec.inputs(table)
    draws, _ = predict(loaded, x, cfg.n_draws, cfg.level, cfg.seed)
    report = calibration(spec, draws, np.asarray(table[spec.target], dtype=np.float64), cfg.level)
    report.update(
        {
            **_provenance(cfg),
            "fit_config_hash": loaded.meta.get("config_hash"),
            "model": loaded.meta["model"],
            "level": cfg.level,
            "n_draws": cfg.n_draws,
            "n_rows": int(len(x)),
        }
    )
    log(f"diagnose model={loaded.meta['model']} rows={len(x)} level={cfg.level} coverage={report['coverage']:.4f}")
    return _write_artifacts(cfg, log, {"calibration.json": report})


def _with_n(spec: Optional[str], n: int) -> str:
    items = [s for s in (spec or "").split(",") if s.strip() and not s.strip().startswith("n=")]
    return ",".join(items + [f"n={n}"])


# -- stochastic control flow demo -------------------------------------------------


def run_branching(seed: int, n_passes: int) -> dict:
    m = Branching(likelihood=False)
    rng = RngState(seed).derive("demo")
    data = np.ones(1)
    outputs: Dict[str, List[float]] = {}
    weights: Dict[str, List[float]] = {}
    bad_ledgers = 0
    guide_counts = []
    both_seen_at = None
    with using_rng(rng), no_grad():
        for i in range(n_passes):
            out = m(data)
            if m.ledger() != ["weight"]:
                bad_ledgers += 1
            outputs.setdefault(m._branch, []).append(float(out.data[0]))
            weights.setdefault(m._branch, []).append(float(m.rv("weight").value.data))
            guide_counts.append(len(m.posterior.guides))
            if both_seen_at is None and len(outputs) == 2:
                both_seen_at = i
    branches = {}
    for name in sorted(outputs):
        o = np.array(outputs[name])
        w = np.array(weights[name])
        branches[name] = {
            "count": len(o),
            "frequency": len(o) / n_passes,
            "output_mean": float(o.mean()),
            "output_sd": float(o.std()),
            "weight_mean": float(w.mean()),
            "weight_sd": float(w.std()),
        }
    stable = (
        both_seen_at is not None and all(c == guide_counts[-1] for c in guide_counts[both_seen_at:])
    )
    return {
        "n_passes": n_passes,
        "branches": branches,
        "ledger_violations": bad_ledgers,
        "one_weight_per_ledger": bad_ledgers == 0,
        "guide_count": len(m.posterior.guides),
        "both_branches_seen_at_pass": both_seen_at,
        "guide_count_stable_after_both": stable,
    }


def cmd_demo_branching(cfg: RunConfig) -> Dict[str, str]:
    log = RunLog()
    report = run_branching(cfg.seed, cfg.n_passes)
    report.update(_provenance(cfg))
    for name, b in report["branches"].items():
        log(f"branch {name}: {b['count']} passes ({b['frequency']:.4f})")
    log(f"guides: {report['guide_count']}, ledger violations: {report['ledger_violations']}")
    return _write_artifacts(cfg, log, {"branching.json": report})


# -- lift -------------------------------------------------------------------------


def cmd_lift(cfg: RunConfig, manifest: Optional[str] = None) -> Dict[str, str]:
    """Lift a deterministic MLP (pretrained here unless a manifest is given)."""
    log = RunLog()
    spec = MODEL_SPECS["lifted-mlp"]
    table = load_table(cfg, spec, "train")
    files: Dict[str, object] = {}
    if manifest is not None:
        loaded = load_manifest(manifest)
        if loaded.meta.get("model") != DETERMINISTIC_MLP:
            raise DataError(f"{manifest!r} is not a deterministic MLP manifest")
        det = loaded.model
        log(f"loaded deterministic MLP from {os.path.basename(manifest)}")
    else:
        det = pretrain_deterministic(cfg, table, log)
        det_meta = _manifest_meta(cfg, DETERMINISTIC_MLP)

        def save_det(path):
            persist.save_model(det, path, meta=det_meta)

        files["pretrained.json"] = save_det
    x = spec.inputs(table)
    det_state = persist.state_dict(det)
    rng = RngState(cfg.seed)
    with using_rng(rng.derive("compare")), no_grad():
        det(x)
    det_logits = det._logits.data.copy()
    with using_rng(rng.derive("lift")):
        lifted = lift_scope(copy.deepcopy(det), cfg.lift_scope, cfg.prior_scale)
    with using_rng(rng.derive("compare")), no_grad():
        lifted(x)
    max_diff = float(np.abs(lifted._logits.data - det_logits).max())
    log(f"lifted {cfg.lift_scope or '<root>'}: forward at init differs by {max_diff:.3e}")
    meta = _manifest_meta(cfg, "lifted-mlp")

    def save_lifted(path):
        persist.save_model(lifted, path, meta=meta)

    files["manifest.json"] = save_lifted
    kinds = {p: r["posterior"]["kind"] for p, r in persist.state_dict(lifted)["modules"].items()}
    files["lift_report.json"] = {
        **_provenance(cfg),
        "lift_scope": cfg.lift_scope,
        "prior_scale": cfg.prior_scale,
        "init_forward_max_abs_diff": max_diff,
        "posterior_kinds": kinds,
        "pretrained_kinds": {p: r["posterior"]["kind"] for p, r in det_state["modules"].items()},
    }
    return _write_artifacts(cfg, log, files)
