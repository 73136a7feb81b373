"""Model manifests: JSON mapping scope paths to binary tensor records.

Layout::

    {
      "format": "probmod-manifest", "version": 1,
      "modules": {"<scope>": {"class": ..., "posterior": {...}}},
      "parameters": {"<scope>.<name>": "<base64 PTNS record>"},
      "guides": {"<scope>": [{"key", "leaf", "kind", "positive", "dynamic",
                              "params": {"loc": "<record>", ...}}]},
      "values": {"<scope>.<rv>": "<record>"},
      "manual": {"<scope>": {"<name>": "<record>"}},
      "priors": {"<scope>.<rv>": {"family": ..., "params": {...}}},
      "samples": {"<parameter name>": "<record>"},   # optional
      "meta": {...}                                   # free-form
    }

Tensor records use the ``PTNS`` binary layout from :mod:`probmod.tensor`.
Modules without random variables or guides are recorded with posterior
kind ``"deterministic"``. Priors with constant parameters (such as the
anchored priors made by :func:`~probmod.nn.lift`) are stored so that a
reloaded model keeps them.
"""

from __future__ import annotations

import base64
import json
import os
from typing import Dict, Optional

import numpy as np

from . import distributions as D
from .module import PModule
from .nn import _Layer
from .posterior import (
    Guide,
    Manual,
    NormalGuide,
    PointMassGuide,
    PriorGuide,
    dynamic_detect,
    posterior_from_config,
)
from .tensor import Tensor, from_bytes, to_bytes

__all__ = [
    "ManifestError",
    "state_dict",
    "load_state_dict",
    "save_model",
    "load_model",
    "set_parameters",
    "encode",
    "decode",
]

FORMAT = "probmod-manifest"
VERSION = 1


class ManifestError(ValueError):
    pass


def encode(arr) -> str:
    return base64.b64encode(to_bytes(arr)).decode("ascii")


def decode(text: str) -> np.ndarray:
    return from_bytes(base64.b64decode(text)).data


def _join(prefix: str, name: str) -> str:
    return f"{prefix}.{name}" if prefix else name


def _posterior_kind(mod: PModule) -> dict:
    if isinstance(mod, _Layer) and not mod.bayesian:
        return {"kind": "deterministic"}
    if not mod._rvs and not mod.posterior.guides and not isinstance(mod.posterior, Manual):
        return {"kind": "deterministic", "template": mod.posterior.config()}
    return mod.posterior.config()


def _guide_record(g: Guide) -> dict:
    return {
        "key": g.key,
        "leaf": g.leaf,
        "kind": g.kind,
        "positive": bool(getattr(g, "positive", False)),
        "dynamic": bool(g.dynamic),
        "params": {n: encode(p.data) for n, p in g.params.items()},
    }


_FAMILIES = {cls.__name__: cls for cls in (D.Normal, D.HalfNormal, D.LogNormal, D.Categorical)}


def _prior_record(prior: D.Distribution) -> Optional[dict]:
    if prior.family not in _FAMILIES:
        return None
    if any(p.is_computed or p.requires_grad for p in prior.params.values()):
        return None
    return {"family": prior.family, "params": {n: encode(p.data) for n, p in prior.params.items()}}


def state_dict(m: PModule, samples: Optional[Dict[str, np.ndarray]] = None, meta: Optional[dict] = None) -> dict:
    modules, params, guides, values, manual, priors = {}, {}, {}, {}, {}, {}
    for prefix, mod in m.named_modules():
        modules[prefix] = {"class": type(mod).__name__, "posterior": _posterior_kind(mod)}
        for name, p in mod._params.items():
            params[_join(prefix, name)] = encode(p.data)
        if isinstance(mod.posterior, Manual):
            manual[prefix] = {n: encode(p.data) for n, p in mod.posterior.named_parameters()}
        recs = [_guide_record(g) for g in mod.posterior.guides.values() if g.kind != "manual"]
        if recs:
            guides[prefix] = recs
        for name, rv in mod._rvs.items():
            if rv.value is not None and not rv.observed:
                values[_join(prefix, name)] = encode(rv.value.data)
            rec = _prior_record(rv.prior)
            if rec is not None:
                priors[_join(prefix, name)] = rec
    out = {
        "format": FORMAT,
        "version": VERSION,
        "modules": modules,
        "parameters": params,
        "guides": guides,
        "values": values,
        "manual": manual,
        "priors": priors,
        "meta": meta or {},
    }
    if samples:
        out["samples"] = {k: encode(v) for k, v in samples.items()}
    return out


def _rebuild_guide(rec: dict) -> Guide:
    kind = rec["kind"]
    params = {n: decode(v) for n, v in rec["params"].items()}
    if kind == "normal":
        g = NormalGuide(rec["key"], rec["leaf"], params["loc"], params["log_scale"], positive=rec["positive"])
    elif kind == "pointmass":
        if rec["positive"]:
            g = PointMassGuide(rec["key"], rec["leaf"], np.exp(params["log_value"]), positive=True)
            g.params["log_value"].data = params["log_value"]
        else:
            g = PointMassGuide(rec["key"], rec["leaf"], params["value"])
    elif kind == "prior":
        g = PriorGuide(rec["key"], rec["leaf"], dynamic=rec["dynamic"])
    else:
        raise ManifestError(f"unknown guide kind {kind!r}")
    return g


def load_state_dict(m: PModule, state: dict) -> Dict[str, np.ndarray]:
    """Restore ``state`` into a freshly constructed model of the same structure.

    Returns the stored sample arrays (empty when there are none).
    """
    if state.get("format") != FORMAT:
        raise ManifestError("not a model manifest")
    if state.get("version") != VERSION:
        raise ManifestError(f"unsupported manifest version {state.get('version')}")
    mods = dict(m.named_modules())
    missing = sorted(set(state["modules"]) - set(mods))
    if missing:
        raise ManifestError(f"manifest modules absent from model: {missing}")
    for prefix, rec in state["modules"].items():
        mod = mods[prefix]
        cfg = rec["posterior"]
        if cfg["kind"] == "deterministic":
            if "template" in cfg:
                mod.posterior = posterior_from_config(cfg["template"])
        elif cfg["kind"] != "manual":
            mod.posterior = posterior_from_config(cfg)
        for g in state["guides"].get(prefix, []):
            guide = _rebuild_guide(g)
            mod.posterior.guides[guide.key] = guide
        for rv in mod._rvs.values():
            if rv.guide_key not in mod.posterior.guides:
                rv.guide_key = None
    for path, text in state["parameters"].items():
        prefix, _, name = path.rpartition(".")
        mod = mods.get(prefix)
        if mod is None or name not in mod._params:
            raise ManifestError(f"parameter {path!r} has no counterpart in the model")
        arr = decode(text)
        if arr.shape != mod._params[name].shape:
            raise ManifestError(f"parameter {path!r}: shape {arr.shape} != {mod._params[name].shape}")
        mod._params[name].data = arr
    for prefix, recs in state.get("manual", {}).items():
        post = mods[prefix].posterior
        if not isinstance(post, Manual):
            raise ManifestError(f"module {prefix!r} has no Manual posterior to restore into")
        for name, text in recs.items():
            if name not in post._params:
                raise ManifestError(f"manual parameter {name!r} missing on {prefix!r}")
            post._params[name].data = decode(text)
    for path, rec in state.get("priors", {}).items():
        prefix, _, name = path.rpartition(".")
        mod = mods.get(prefix)
        if mod is not None and name in mod._rvs:
            cls = _FAMILIES[rec["family"]]
            mod._rvs[name].prior = cls(**{n: decode(v) for n, v in rec["params"].items()})
    for path, text in state["values"].items():
        prefix, _, name = path.rpartition(".")
        mod = mods.get(prefix)
        if mod is not None and name in mod._rvs:
            rv = mod._rvs[name]
            rv.value = Tensor(decode(text))
            key = mod.posterior.guide_key(name, rv.prior, dynamic_detect(rv.prior))
            if key in mod.posterior.guides:
                rv.guide_key = key
                rv.guide_dist = mod.posterior.guides[key].distribution(rv.prior)
    return {k: decode(v) for k, v in state.get("samples", {}).items()}


def save_model(m: PModule, path: str, samples=None, meta=None) -> dict:
    state = state_dict(m, samples, meta)
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(state, fh, indent=1, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)
    return state


def load_model(m: PModule, path: str) -> Dict[str, np.ndarray]:
    with open(path) as fh:
        state = json.load(fh)
    return load_state_dict(m, state)


def set_parameters(m: PModule, values: Dict[str, np.ndarray]) -> None:
    """Overwrite named parameters (as listed by ``named_parameters``)."""
    named = dict(m.named_parameters())
    for name, arr in values.items():
        if name not in named:
            raise KeyError(f"unknown parameter {name!r}")
        named[name].data = np.array(arr, dtype=np.float64)
