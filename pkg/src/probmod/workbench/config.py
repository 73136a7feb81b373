"""Run configuration: flat ``key=value`` files, CLI overrides, provenance hash."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass
from typing import Dict, Optional

MODELS = ("linreg", "hetreg", "branching", "mlp-classifier", "lifted-mlp")
METHODS = ("vi", "map", "mcmc")
SEED_ENV = "PROBMOD_SEED"


class ConfigError(ValueError):
    """Invalid configuration; the CLI exits with status 2."""


@dataclass
class RunConfig:
    """Every knob a workbench command reads.

    ``data`` is a CSV path; ``synthetic`` is a generator spec such as
    ``"a=1.5,b=-2,sigma=0.5,n=200"``. When neither is given the model's
    default generator is used.
    """

    model: str = "linreg"
    method: str = "vi"
    seed: Optional[int] = None
    steps: int = 3000
    lr: float = 2e-2
    beta2: float = 0.99
    n_samples: int = 1
    burn_in: Optional[int] = None
    step_scale: float = 0.05
    n_chains: int = 1
    warmup: int = 500
    data: Optional[str] = None
    synthetic: Optional[str] = None
    out: str = "out"
    n_draws: int = 200
    level: float = 0.9
    n_passes: int = 10000
    lift_scope: str = "classifier"
    prior_scale: float = 0.1
    pretrain_steps: int = 500

    def validate(self) -> "RunConfig":
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}; choose from {', '.join(MODELS)}")
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if self.seed is None or self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        for name in ("steps", "warmup", "n_passes", "pretrain_steps"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        for name in ("n_samples", "n_chains", "n_draws"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if self.lr <= 0 or self.step_scale < 0 or self.prior_scale <= 0:
            raise ConfigError("lr and prior_scale must be positive, step_scale non-negative")
        if not 0.0 <= self.beta2 < 1.0:
            raise ConfigError("beta2 must lie in [0, 1)")
        if not 0.0 < self.level <= 1.0:
            raise ConfigError("level must lie in (0, 1]")
        if self.burn_in is not None and not 0 <= self.burn_in <= self.steps:
            raise ConfigError("burn_in must lie in [0, steps]")
        if self.data is not None and self.synthetic is not None:
            raise ConfigError("give either data or synthetic, not both")
        return self

    @property
    def effective_burn_in(self) -> int:
        return self.burn_in if self.burn_in is not None else self.steps // 5

    def fingerprint(self) -> dict:
        """Fields that determine results (the output directory does not)."""
        d = dataclasses.asdict(self)
        d.pop("out")
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.fingerprint(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _coerce(name: str, text: str):
    f = _FIELDS[name]
    kind = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
    if text.lower() in ("", "none", "null") and "Optional" in kind:
        return None
    try:
        if "int" in kind:
            return int(text)
        if "float" in kind:
            return float(text)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {text!r} as {kind}") from None
    return text


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, object]:
    """Parse ``key=value`` lines; ``#`` starts a comment."""
    out: Dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FIELDS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        out[key] = _coerce(key, value)
    return out


def load_config_file(path: str) -> Dict[str, object]:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path!r}: {exc.strerror}") from None
    return parse_config_text(text, path)


def build_config(file_values: Dict[str, object], overrides: Dict[str, object], env=None) -> RunConfig:
    """Merge defaults < config file < command-line flags; seed falls back to the env var."""
    env = os.environ if env is None else env
    values: Dict[str, object] = dict(file_values)
    values.update({k: v for k, v in overrides.items() if v is not None})
    if values.get("seed") is None:
        raw = env.get(SEED_ENV)
        if raw is not None:
            try:
                values["seed"] = int(raw)
            except ValueError:
                raise ConfigError(f"{SEED_ENV}={raw!r} is not an integer") from None
        else:
            values["seed"] = 0
    unknown = set(values) - set(_FIELDS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return RunConfig(**values).validate()
