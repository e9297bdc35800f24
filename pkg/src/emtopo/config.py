"""Flat ``key.path = value`` experiment configuration with a stable fingerprint.

Lines are ``section.key = value``; ``#`` starts a comment. Numbers accept
``pi`` multiples (``4pi``, ``8*pi``, ``pi/2``). Vectors are comma separated.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field

import numpy as np

from .forward import UNIT_BALL_VOLUME, Inclusion, IncidentPlaneWave, TrialInclusion
from .geometry import SearchGrid, build_direction_set, build_product_quadrature
from .kernels import WaveParameters

DEFAULT_POLAR_ORDER = 32
DEFAULT_AZIMUTHAL_COUNT = 64


class ConfigError(ValueError):
    """Invalid configuration; carries the offending key and line when known."""

    def __init__(self, message, key=None, line=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(key)
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.key = key
        self.line = line


_PI = re.compile(r"^\s*([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)?\s*\*?\s*pi\s*(?:/\s*(\d+\.?\d*))?\s*$")


def parse_number(text: str) -> float:
    text = text.strip()
    m = _PI.match(text)
    if m:
        coef = float(m.group(1)) if m.group(1) else 1.0
        den = float(m.group(2)) if m.group(2) else 1.0
        return coef * np.pi / den
    return float(text)


def _vector(text):
    parts = [p for p in text.split(",")]
    if len(parts) != 3:
        raise ValueError("expected three comma-separated numbers")
    return tuple(parse_number(p) for p in parts)


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def _choice(*options):
    def conv(text):
        t = text.strip()
        if t not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return t

    return conv


def _int(text):
    value = int(text.strip())
    return value


def _list(text):
    return tuple(t.strip() for t in text.split(",") if t.strip())


# key -> (converter, default); None default means required
SCHEMA = {
    "medium.epsilon0": (parse_number, 1.0),
    "medium.mu0": (parse_number, 1.0),
    "medium.kappa": (parse_number, None),
    "inclusion.center": (_vector, (0.0, 0.0, 0.0)),
    "inclusion.rho": (parse_number, 0.01),
    "inclusion.volume": (parse_number, UNIT_BALL_VOLUME),
    "inclusion.epsilon1": (parse_number, 1.0),
    "inclusion.mu1": (parse_number, 1.0),
    "trial.volume": (parse_number, UNIT_BALL_VOLUME),
    "trial.epsilon2": (parse_number, 1.0),
    "trial.mu2": (parse_number, 1.0),
    "incident.mode": (_choice("single", "set"), "single"),
    "incident.theta": (_vector, (1.0, 0.0, 0.0)),
    "incident.theta_perp": (_vector, (0.0, 1.0, 0.0)),
    "incident.M": (_int, 5),
    "incident.N": (_int, 5),
    "incident.layout": (_choice("uniform", "equal_area"), "uniform"),
    "grid.half_width": (parse_number, 1.0),
    "grid.count": (_int, 201),
    "grid.z": (parse_number, 0.0),
    "quadrature.polar_order": (_int, DEFAULT_POLAR_ORDER),
    "quadrature.azimuthal_count": (_int, DEFAULT_AZIMUTHAL_COUNT),
    "noise.mode": (_choice("none", "random", "relative"), "none"),
    "noise.sigma": (parse_number, 0.0),
    "noise.percent": (parse_number, 10.0),
    "noise.seed": (_int, 0),
    "image.evaluator": (_choice("indicator", "predictor"), "indicator"),
    "image.pgm": (_bool, True),
    "image.normalize": (_bool, True),
    "stats.checks": (_list, ()),
    "stats.trials": (_int, 0),
    "stats.seed": (_int, 0),
    "stats.sigma": (parse_number, 1.0),
    "stats.polar_order": (_int, 16),
    "stats.azimuthal_count": (_int, 32),
    "output.name": (str.strip, "run"),
}

# keys that do not change any computed number
_COSMETIC = ("output.", "image.pgm")


@dataclass(frozen=True)
class ExperimentConfig:
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def replace(self, **updates) -> "ExperimentConfig":
        """Copy with keys given as ``section__key=value``."""
        vals = dict(self.values)
        for k, v in updates.items():
            key = k.replace("__", ".")
            if key not in SCHEMA:
                raise ConfigError("unknown key", key)
            vals[key] = v
        return validate(ExperimentConfig(vals))

    # -- derived objects

    @property
    def wave_parameters(self) -> WaveParameters:
        return WaveParameters.from_kappa(
            self["medium.kappa"], self["medium.epsilon0"], self["medium.mu0"]
        )

    def inclusion(self) -> Inclusion:
        return Inclusion.sphere(
            self["inclusion.center"],
            self["inclusion.rho"],
            self["inclusion.epsilon1"],
            self["inclusion.mu1"],
            self.wave_parameters,
            self["inclusion.volume"],
        )

    def trial(self) -> TrialInclusion:
        return TrialInclusion.sphere(
            self["trial.epsilon2"], self["trial.mu2"], self.wave_parameters, self["trial.volume"]
        )

    def quadrature(self):
        return build_product_quadrature(
            self["quadrature.polar_order"], self["quadrature.azimuthal_count"]
        )

    def direction_set(self):
        return build_direction_set(self["incident.M"], self["incident.N"], self["incident.layout"])

    def single_wave(self) -> IncidentPlaneWave:
        return IncidentPlaneWave(
            self["incident.theta"], self["incident.theta_perp"], self.wave_parameters
        )

    def grid(self) -> SearchGrid:
        return SearchGrid.square(self["grid.half_width"], self["grid.count"], self["grid.z"])

    def contrast_mode(self) -> str | None:
        """'eps', 'mu', or None for mixed or matched contrasts."""
        wp = self.wave_parameters
        eps = self["inclusion.epsilon1"] != wp.epsilon0 or self["trial.epsilon2"] != wp.epsilon0
        mu = self["inclusion.mu1"] != wp.mu0 or self["trial.mu2"] != wp.mu0
        if eps and not mu:
            return "eps"
        if mu and not eps:
            return "mu"
        return None

    # -- serialization

    def canonical(self, include_cosmetic: bool = True) -> str:
        lines = []
        for key in sorted(self.values):
            if not include_cosmetic and key.startswith(_COSMETIC):
                continue
            lines.append(f"{key} = {format_value(self.values[key])}")
        return "\n".join(lines) + "\n"

    @property
    def fingerprint(self) -> str:
        return hashlib.sha256(self.canonical(False).encode()).hexdigest()[:16]


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ",".join(format_value(x) if not isinstance(x, str) else x for x in v)
    return str(v)


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    v = cfg.values
    for key, (_, default) in SCHEMA.items():
        if key not in v:
            if default is None:
                raise ConfigError("required key missing", key)
            v[key] = default

    def need(cond, key, msg):
        if not cond:
            raise ConfigError(msg, key)

    for key in (
        "medium.epsilon0",
        "medium.mu0",
        "medium.kappa",
        "inclusion.rho",
        "inclusion.volume",
        "inclusion.epsilon1",
        "inclusion.mu1",
        "trial.volume",
        "trial.epsilon2",
        "trial.mu2",
        "grid.half_width",
    ):
        need(v[key] > 0, key, "must be positive")
    need(v["grid.count"] >= 2, "grid.count", "must be >= 2")
    need(v["quadrature.polar_order"] >= 2, "quadrature.polar_order", "must be >= 2")
    need(v["quadrature.azimuthal_count"] >= 4, "quadrature.azimuthal_count", "must be >= 4")
    need(v["incident.M"] >= 1, "incident.M", "must be >= 1")
    need(v["incident.N"] >= 1, "incident.N", "must be >= 1")
    need(v["noise.sigma"] >= 0, "noise.sigma", "must be nonnegative")
    need(0 < v["noise.percent"] <= 100, "noise.percent", "must be in (0, 100]")
    need(0 <= v["noise.seed"] < 2**64, "noise.seed", "must be an unsigned 64-bit integer")
    need(0 <= v["stats.seed"] < 2**64, "stats.seed", "must be an unsigned 64-bit integer")
    need(v["stats.trials"] >= 0, "stats.trials", "must be nonnegative")
    theta = np.asarray(v["incident.theta"])
    perp = np.asarray(v["incident.theta_perp"])
    need(abs(np.linalg.norm(theta) - 1) < 1e-12, "incident.theta", "must be a unit vector")
    need(abs(np.linalg.norm(perp) - 1) < 1e-12, "incident.theta_perp", "must be a unit vector")
    need(abs(theta @ perp) < 1e-12, "incident.theta_perp", "must be orthogonal to theta")
    need(bool(re.fullmatch(r"[A-Za-z0-9_.-]+", v["output.name"])), "output.name", "invalid file stem")
    return cfg


def parse_config(text: str) -> ExperimentConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", line=lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError("unknown key", key, lineno)
        if key in values:
            raise ConfigError("duplicate key", key, lineno)
        try:
            values[key] = SCHEMA[key][0](value)
        except ValueError as exc:
            raise ConfigError(str(exc) or "bad value", key, lineno) from None
    return validate(ExperimentConfig(values))


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
