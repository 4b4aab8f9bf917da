"""Flat ``key = value`` experiment configuration.

One setting per line, ``#`` starts a comment, keys are dotted::

    mode = value
    domain.kind = disk
    gamma.kind = exp
    gamma.a = 0.5 0.0
    points = uniform:8
    schedule.h0 = 0.1

Vectors are whitespace separated.  Every key has a typed default; unknown
keys and unparsable values are reported with their line number.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..fem import ConductivityField
from ..geometry import Domain, build_domain
from ..recon import RecoverySchedule

__all__ = ["ConfigError", "ExperimentConfig", "parse_config", "load_config", "MODES"]

MODES = ("calibrate", "value", "normal", "pipeline", "besov-rate", "trace-check", "hardy-check")


class ConfigError(ValueError):
    """Invalid configuration; carries the offending key and line when known."""

    def __init__(self, message, key=None, line=None):
        where = []
        if key is not None:
            where.append(f"key {key!r}")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.key = key
        self.line = line


def _floats(text):
    return tuple(float(t) for t in text.replace(",", " ").split())


def _vector(n):
    def parse(text):
        v = _floats(text)
        if len(v) != n:
            raise ValueError(f"expected {n} numbers, got {len(v)}")
        return v

    return parse


def _positive(kind):
    def parse(text):
        v = kind(text)
        if not v > 0:
            raise ValueError("must be positive")
        return v

    return parse


def _choice(*options):
    def parse(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text

    return parse


def _model(text):
    if text in ("last", "affine", "scan", "quadratic", "hlog"):
        return text
    beta = float(text)
    if not 0 < beta <= 1:
        raise ValueError("fixed exponent must lie in (0, 1]")
    return beta


def _optional_int(text):
    return None if text in ("none", "") else int(text)


def _points(text):
    if text.startswith("uniform:"):
        k = int(text.split(":", 1)[1])
        if k < 1:
            raise ValueError("uniform:k needs k >= 1")
        return text
    return _floats(text)


def _vertices(text):
    v = _floats(text)
    if len(v) % 2 or len(v) < 6:
        raise ValueError("need an even count of at least 6 numbers (x y pairs)")
    return v


def _ints(text):
    return tuple(int(t) for t in text.replace(",", " ").split())


_S = RecoverySchedule()

# key -> (parser, default)
SCHEMA = {
    "mode": (_choice(*MODES), "value"),
    "seed": (int, 0),
    "output.dir": (str, "results"),
    "domain.kind": (_choice("disk", "square", "star", "polygon"), "disk"),
    "domain.cos": (_floats, (1.0,)),
    "domain.sin": (_floats, ()),
    "domain.vertices": (_vertices, ()),
    "gamma.kind": (_choice(*ConductivityField.KINDS), "constant"),
    "gamma.scale": (_positive(float), 1.0),
    "gamma.c": (_positive(float), 1.0),
    "gamma.a": (_vector(2), (0.5, 0.0)),
    "gamma.b": (float, 0.5),
    "gamma.amplitude": (float, 0.5),
    "gamma.center": (_vector(2), (0.0, 0.0)),
    "gamma.width": (_positive(float), 0.5),
    "gamma.jitter": (float, 0.0),
    "points": (_points, (0.0,)),
    "schedule.h0": (_positive(float), _S.h0),
    "schedule.steps": (_positive(int), _S.steps),
    "schedule.local_ratio": (_positive(float), _S.local_ratio),
    "schedule.ball_factor": (_positive(float), _S.ball_factor),
    "schedule.global_size": (_positive(float), _S.global_size),
    "schedule.grading": (_positive(float), _S.grading),
    "schedule.value_model": (_model, _S.value_model),
    "schedule.normal_model": (_model, _S.normal_model),
    "schedule.value_calibration": (_choice("continuum", "discrete"), _S.value_calibration),
    "schedule.normal_calibration": (_choice("continuum", "discrete"), _S.normal_calibration),
    "schedule.value_tail": (_optional_int, _S.value_tail),
    "schedule.normal_tail": (_optional_int, _S.normal_tail),
    "schedule.stage_a_model": (_model, _S.stage_a_model),
    "schedule.stage_a_tail": (_optional_int, _S.stage_a_tail),
    "schedule.stage_a_calibration": (_choice("continuum", "discrete"), _S.stage_a_calibration),
    "normal.trace": (_choice("exact", "pipeline"), "exact"),
    "pipeline.samples": (_positive(int), 16),
    "besov.s": (_positive(float), 1.0),
    "besov.p": (_positive(float), 4.0),
    "besov.q": (_positive(float), 2.0),
    "besov.N": (_positive(int), 512),
    "besov.points": (_positive(int), 50),
    "interface.height": (float, 0.5),
    "interface.lipschitz": (float, 0.0),
    "interface.teeth": (_positive(int), 4),
    "trace.lambdas": (_ints, (4, 8, 16, 32, 64, 128)),
    "trace.battery": (_positive(int), 50),
    "trace.N": (_positive(int), 256),
    "hardy.battery": (_positive(int), 20),
    "hardy.N": (_positive(int), 64),
}

# keys that do not change what is computed
_NON_SEMANTIC = {"output.dir"}


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated settings; missing keys take their defaults."""

    values: dict = field(default_factory=dict)
    source: str = "<defaults>"

    def __post_init__(self):
        merged = {k: default for k, (_, default) in SCHEMA.items()}
        for key, val in self.values.items():
            if key not in SCHEMA:
                raise ConfigError("unknown key", key)
            merged[key] = val
        object.__setattr__(self, "values", merged)
        self._validate()

    def __getitem__(self, key):
        return self.values[key]

    def with_values(self, **updates) -> "ExperimentConfig":
        """Copy with dotted keys replaced (pass ``schedule__h0=...`` for ``schedule.h0``)."""
        vals = dict(self.values)
        vals.update({k.replace("__", "."): v for k, v in updates.items()})
        return ExperimentConfig(vals, self.source)

    @property
    def mode(self) -> str:
        return self.values["mode"]

    @property
    def seed(self) -> int:
        return self.values["seed"]

    @property
    def output_dir(self) -> Path:
        return Path(self.values["output.dir"])

    def domain(self) -> Domain:
        kind = self.values["domain.kind"]
        if kind == "star":
            return build_domain({"kind": "star", "cos": self.values["domain.cos"], "sin": self.values["domain.sin"]})
        if kind == "polygon":
            v = np.reshape(self.values["domain.vertices"], (-1, 2))
            return build_domain({"kind": "polygon", "vertices": v.tolist()})
        return build_domain(kind)

    def gamma(self) -> ConductivityField:
        kind = self.values["gamma.kind"]
        keys = {"constant": ("c",), "exp": ("a",), "radial": ("b",), "bump": ("amplitude", "center", "width")}[kind]
        params = {k: self.values[f"gamma.{k}"] for k in keys}
        return ConductivityField(kind, scale=self.values["gamma.scale"], **params)

    def schedule(self) -> RecoverySchedule:
        names = RecoverySchedule.__dataclass_fields__
        return RecoverySchedule(**{k: self.values[f"schedule.{k}"] for k in names})

    def points(self, domain: Domain | None = None) -> list[float]:
        """Boundary parameters; ``uniform:k`` spreads ``k`` points evenly in arclength."""
        desc = self.values["points"]
        if isinstance(desc, str):
            domain = domain or self.domain()
            k = int(desc.split(":", 1)[1])
            return [j * domain.length / k for j in range(k)]
        return list(desc)

    def _validate(self):
        try:
            dom = self.domain()
            if self.mode in ("calibrate", "value", "normal", "pipeline"):
                self.gamma()
                sched = self.schedule()
                if sched.steps < 3 and any(
                    m != "last" for m in (sched.value_model, sched.normal_model)
                ):
                    raise ConfigError("extrapolation needs schedule.steps >= 3", "schedule.steps")
                for s in self.points(dom):
                    if dom.is_corner(float(np.mod(s, dom.length)), tol=1e-9):
                        raise ConfigError(f"boundary point {s} is a corner", "points")
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def canonical(self) -> dict:
        """Semantic content as plain JSON types (defaults included)."""
        out = {}
        for k, v in sorted(self.values.items()):
            if k in _NON_SEMANTIC:
                continue
            if isinstance(v, tuple):
                v = [float(x) if isinstance(x, float) else x for x in v]
            elif isinstance(v, float) and math.isfinite(v):
                v = float(repr(v))
            out[k] = v
        return out

    def hash(self) -> str:
        """SHA-256 of :meth:`canonical`; invariant under formatting and key order."""
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def to_text(self) -> str:
        """Config file text; settings at their default are written commented out."""
        lines = []
        for k, v in self.values.items():
            default = v == SCHEMA[k][1]
            if isinstance(v, tuple):
                v = " ".join(repr(x) for x in v)
            elif v is None:
                v = "none"
            lines.append(f"{'# ' if default else ''}{k} = {v}")
        return "\n".join(lines) + "\n"


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    """Parse ``key = value`` lines into an :class:`ExperimentConfig`."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", line=lineno)
        key, _, val = (part.strip() for part in line.partition("="))
        if key not in SCHEMA:
            raise ConfigError("unknown key", key, lineno)
        if key in values:
            raise ConfigError("duplicate key", key, lineno)
        parser = SCHEMA[key][0]
        try:
            values[key] = parser(val)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad value {val!r}: {exc}", key, lineno) from None
    return ExperimentConfig(values, source)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path))
