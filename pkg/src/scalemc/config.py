"""Flat ``key = value`` experiment configuration.

Lines starting with ``#`` and trailing ``# ...`` are comments. Model and
sampler options use dotted keys (``model.dim = 10``, ``sampler.step = auto``).
A config written by :meth:`ExperimentConfig.to_text` reads back equal.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .errors import ConfigError

MODELS = ("gaussian", "gaussian-conjugate", "logistic", "bmf", "mixture", "rosenbrock")
MH_SAMPLERS = ("rwm", "mala", "hmc", "guided", "horowitz", "dbps")
SG_SAMPLERS = ("ula", "sgld", "sgld-cv", "sgld-ps", "sghmc", "sghmc-cv")
PDMP_SAMPLERS = ("zigzag", "bps", "coord", "boomerang")
SAMPLERS = MH_SAMPLERS + ("ring",) + SG_SAMPLERS + PDMP_SAMPLERS
DIAGNOSTICS = ("rhat", "ess", "tvd", "ksd")
PRESETS = ("gaussian-ula-vs-mala", "sgld-step-grid")

_INT = ("iters", "grid", "seed", "data_seed", "chains", "workers")
_FLOAT = ("horizon", "burn_in")


def _parse_list(value: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in value.split(",") if v.strip())


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce a run; ``(config, seed)`` fixes the output."""

    model: str = "gaussian"
    sampler: str = "rwm"
    model_params: dict = field(default_factory=dict)
    sampler_params: dict = field(default_factory=dict)
    data: str | None = None
    data_seed: int = 0
    iters: int = 10000
    horizon: float = 1000.0
    grid: int = 1000
    burn_in: float = 0.0
    seed: int = 0
    chains: int = 1
    workers: int = 1
    theta0: tuple = ()
    out: str = "samples.csv"
    skeleton_out: str | None = None
    report: str | None = None
    diagnostics: tuple = ()
    preset: str | None = None

    # ------------------------------------------------------------ parsing

    @classmethod
    def from_text(cls, text: str, validate: bool = True) -> "ExperimentConfig":
        kw: dict = {"model_params": {}, "sampler_params": {}}
        bad, msgs = [], []
        names = {f.name for f in fields(cls)} - {"model_params", "sampler_params"}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                bad.append(f"line {lineno}")
                msgs.append(f"line {lineno}: expected key = value")
                continue
            key, value = (s.strip() for s in line.split("=", 1))
            if key.startswith("model."):
                kw["model_params"][key[6:]] = value
            elif key.startswith("sampler."):
                kw["sampler_params"][key[8:]] = value
            elif key not in names:
                bad.append(key)
                msgs.append(f"unknown key {key!r}")
            else:
                try:
                    kw[key] = _convert(key, value)
                except ValueError as e:
                    bad.append(key)
                    msgs.append(f"{key}: {e}")
        if bad:
            raise ConfigError("; ".join(msgs), bad)
        cfg = cls(**kw)
        return cfg.validate() if validate else cfg

    @classmethod
    def from_file(cls, path, validate: bool = True) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}", ["config"]) from e
        return cls.from_text(text, validate)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in ("model_params", "sampler_params"):
                prefix = f.name.split("_")[0]
                lines += [f"{prefix}.{k} = {v[k]}" for k in sorted(v)]
            elif v is None:
                continue
            elif isinstance(v, tuple):
                if v:
                    lines.append(f"{f.name} = {', '.join(str(x) for x in v)}")
            elif isinstance(v, float):
                lines.append(f"{f.name} = {v!r}")
            else:
                lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_text())

    def with_overrides(self, **kw) -> "ExperimentConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        mp = {**self.model_params, **kw.pop("model_params", {})}
        sp = {**self.sampler_params, **kw.pop("sampler_params", {})}
        return replace(self, model_params=mp, sampler_params=sp, **kw)

    # ------------------------------------------------------------ checks

    def validate(self) -> "ExperimentConfig":
        """Check every field and report all violations together."""
        bad, msgs = [], []

        def fail(name, msg):
            bad.append(name)
            msgs.append(f"{name}: {msg}")

        if self.preset is not None and self.preset not in PRESETS:
            fail("preset", f"must be one of {PRESETS}")
        if self.model not in MODELS:
            fail("model", f"must be one of {MODELS}")
        if self.sampler not in SAMPLERS:
            fail("sampler", f"must be one of {SAMPLERS}")
        if self.iters < 1:
            fail("iters", "must be >= 1")
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            fail("horizon", "must be positive and finite")
        if self.grid < 1:
            fail("grid", "must be >= 1")
        limit = self.horizon if self.sampler in PDMP_SAMPLERS else self.iters
        if limit > 0 and not 0 <= self.burn_in < limit:
            fail("burn_in", "must satisfy 0 <= burn_in < horizon (PDMP) or iters")
        if self.seed < 0:
            fail("seed", "must be >= 0")
        if self.data_seed < 0:
            fail("data_seed", "must be >= 0")
        if self.chains < 1:
            fail("chains", "must be >= 1")
        if self.workers < 1:
            fail("workers", "must be >= 1")
        for d in self.diagnostics:
            if d not in DIAGNOSTICS:
                fail("diagnostics", f"unknown diagnostic {d!r}; choose from {DIAGNOSTICS}")
        if "rhat" in self.diagnostics and self.chains < 2:
            fail("chains", "rhat needs at least 2 chains")
        for i, x in enumerate(self.theta0):
            if not isinstance(x, float) or not math.isfinite(x):
                fail("theta0", f"entry {i} is not a finite number")
        if bad:
            raise ConfigError("; ".join(msgs), sorted(set(bad), key=bad.index))
        return self


def _convert(key: str, value: str):
    if key in _INT:
        return int(value)
    if key in _FLOAT:
        return float(value)
    if key == "theta0":
        return tuple(float(v) for v in _parse_list(value))
    if key == "diagnostics":
        return _parse_list(value)
    return value if value else None


def parse_number(value, name: str, kind=float):
    """Parse a sampler/model option, raising ConfigError naming the field."""
    try:
        return kind(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{name}: cannot parse {value!r} as {kind.__name__}", [name]) from e
