"""Experiment configuration: flat ``key = value`` text with dotted keys.

Values accept fractions (``obs.h = 1/32``) and powers (``sim.T = 2^15``).
Unknown keys and every violated constraint are reported together.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .errors import ConfigError
from .sde_sim import KramersForm, LangevinParams, PhaseState, Quadratic, SimConfig

_FLOAT = "float"
_INT = "int"
_STR = "str"

# key -> (type, default)
SCHEMA = {
    "model.family": (_STR, "kramers"),
    "model.gamma": (_FLOAT, 0.5),
    "model.alpha": (_FLOAT, 4.0),
    "model.beta": (_FLOAT, 1.0 / math.sqrt(10.0)),
    "model.sigma": (_FLOAT, 1.0),
    "sim.dt": (_FLOAT, 1.0 / 1024),
    "sim.T": (_FLOAT, 1.0e4),
    "sim.burn_in": (_FLOAT, 1000.0),
    "sim.seed": (_INT, 0),
    "sim.scheme": (_STR, "IT2"),
    "sim.x0": (_FLOAT, 0.5),
    "sim.y0": (_FLOAT, 0.5),
    "obs.h": (_FLOAT, 1.0 / 32),
    "fit.method": (_STR, "ct"),
    "fit.structure": (_STR, "M3"),
    "fit.q": (_INT, 0),
    "fit.restarts": (_INT, 5),
    "forecast.N0": (_INT, 1000),
    "forecast.N_ens": (_INT, 20),
    "forecast.K": (_STR, "auto"),
    "forecast.dt_solve": (_FLOAT, 1.0 / 64),
    "forecast.m": (_INT, 5),
    "replicate.n_datasets": (_INT, 20),
    "stats.n_bins": (_INT, 81),
    "stats.max_lag": (_INT, 200),
}

FAMILIES = ("linear", "kramers")
METHODS = ("ct", "narma")
STRUCTURES = ("ARMA", "M1", "M2", "M3", "M4")

_NUMBER = re.compile(r"^\s*([-+0-9.eE]+)\s*(?:([/^])\s*([-+0-9.eE]+))?\s*$")


def parse_number(text: str) -> float:
    """Parse ``1.5``, ``1/1024``, ``2^15`` or ``1e4``."""
    m = _NUMBER.match(text)
    if not m:
        raise ValueError(f"not a number: {text!r}")
    a, op, b = m.groups()
    if op is None:
        return float(a)
    if op == "/":
        return float(Fraction(a) / Fraction(b))
    return float(a) ** float(b)


def _convert(key: str, raw: str):
    kind = SCHEMA[key][0]
    if kind == _STR:
        return raw.strip()
    value = parse_number(raw)
    if kind == _INT:
        if value != int(value):
            raise ValueError(f"{key} must be an integer, got {raw!r}")
        return int(value)
    return value


def parse_assignments(lines, source: str = "<config>") -> tuple[dict, list]:
    """Parse ``key = value`` lines; returns ``(values, problems)``."""
    values, problems = {}, []
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"{source}:{lineno}: expected 'key = value'")
            continue
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            problems.append(f"{source}:{lineno}: unknown key {key!r}")
            continue
        try:
            values[key] = _convert(key, raw)
        except ValueError as exc:
            problems.append(f"{source}:{lineno}: {key}: {exc}")
    return values, problems


@dataclass(frozen=True)
class ExperimentConfig:
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    @classmethod
    def load(cls, path=None, overrides=(), seed=None, forecasting=False) -> "ExperimentConfig":
        """Defaults, then the file at ``path``, then ``key=value`` overrides."""
        values = {k: default for k, (_, default) in SCHEMA.items()}
        problems = []
        if path is not None:
            text = Path(path).read_text().splitlines()
            got, bad = parse_assignments(text, str(path))
            values.update(got)
            problems += bad
        got, bad = parse_assignments(overrides, "--set")
        values.update(got)
        problems += bad
        if seed is not None:
            values["sim.seed"] = int(seed)
        cfg = cls(values)
        problems += cfg.problems(forecasting)
        if problems:
            raise ConfigError(problems)
        return cfg

    def replace(self, **updates) -> "ExperimentConfig":
        """Copy with ``section__key=value`` updates (``sim__T=...``)."""
        values = dict(self.values)
        for name, value in updates.items():
            key = name.replace("__", ".")
            if key not in SCHEMA:
                raise ConfigError([f"unknown key {key!r}"])
            values[key] = value
        cfg = ExperimentConfig(values)
        cfg.validate()
        return cfg

    # ---- derived quantities ------------------------------------------

    @property
    def family(self) -> str:
        return self["model.family"]

    @property
    def h(self) -> float:
        return self["obs.h"]

    @property
    def n_obs(self) -> int:
        return int(round(self["sim.T"] / self.h))

    @property
    def horizon(self) -> int:
        k = self["forecast.K"]
        if k == "auto":
            return int(round(10.0 / self.h))
        return int(parse_number(k))

    def params(self) -> LangevinParams:
        if self.family == "linear":
            potential = Quadratic(self["model.alpha"])
        else:
            potential = KramersForm(self["model.beta"])
        return LangevinParams(self["model.gamma"], potential, self["model.sigma"])

    def sim_config(self, seed=None) -> SimConfig:
        dt = self["sim.dt"]
        return SimConfig(
            dt=dt,
            n_steps=int(round(self["sim.T"] / dt)),
            seed=self["sim.seed"] if seed is None else seed,
            initial=PhaseState(self["sim.x0"], self["sim.y0"]),
            scheme=self["sim.scheme"],
            burn_in=self["sim.burn_in"],
        )

    def validate(self, forecasting: bool = False) -> None:
        problems = self.problems(forecasting)
        if problems:
            raise ConfigError(problems)

    def problems(self, forecasting: bool = False) -> list:
        """Every violated constraint, by key name.

        The piece-budget check ``K*(N0+1)*h <= T/2`` applies only when
        ``forecasting`` is set, since the desk defaults for other commands
        use shorter runs.
        """
        v, problems = self.values, []
        if v["model.family"] not in FAMILIES:
            problems.append(f"model.family must be one of {FAMILIES}")
        for key in ("model.gamma", "model.sigma", "sim.dt", "sim.T", "obs.h", "forecast.dt_solve"):
            if not v[key] > 0:
                problems.append(f"{key} must be positive")
        if v["model.family"] == "linear" and not v["model.alpha"] > 0:
            problems.append("model.alpha must be positive")
        if v["model.family"] == "kramers" and not v["model.beta"] > 0:
            problems.append("model.beta must be positive")
        if v["sim.burn_in"] < 0:
            problems.append("sim.burn_in must be >= 0")
        if v["sim.seed"] < 0:
            problems.append("sim.seed must be >= 0")
        if v["sim.scheme"] not in ("EM", "IT2"):
            problems.append("sim.scheme must be EM or IT2")
        if v["fit.method"] not in METHODS:
            problems.append(f"fit.method must be one of {METHODS}")
        if v["fit.structure"] not in STRUCTURES:
            problems.append(f"fit.structure must be one of {STRUCTURES}")
        if v["fit.q"] < 0:
            problems.append("fit.q must be >= 0")
        if v["fit.structure"] == "M4" and v["fit.q"] < 1:
            problems.append("fit.q must be >= 1 for structure M4")
        if v["fit.restarts"] < 0:
            problems.append("fit.restarts must be >= 0")
        for key in ("forecast.N0", "forecast.N_ens", "replicate.n_datasets", "stats.n_bins", "stats.max_lag"):
            if v[key] < 1:
                problems.append(f"{key} must be >= 1")
        if v["forecast.m"] < 2:
            problems.append("forecast.m must be >= 2")
        k = v["forecast.K"]
        if k != "auto":
            try:
                k_val = parse_number(k)
                if k_val != int(k_val) or k_val <= v["forecast.m"]:
                    problems.append("forecast.K must be 'auto' or an integer above forecast.m")
            except ValueError:
                problems.append("forecast.K must be 'auto' or an integer")
        if v["sim.dt"] > 0 and v["obs.h"] > 0:
            ratio = v["obs.h"] / v["sim.dt"]
            if ratio < 1 or abs(ratio - round(ratio)) > 1e-9 * ratio:
                problems.append("obs.h must be an integer multiple of sim.dt")
        if forecasting and not problems:
            ratio = v["obs.h"] / v["forecast.dt_solve"]
            if ratio < 1 or abs(ratio - round(ratio)) > 1e-9 * ratio:
                problems.append("forecast.dt_solve: obs.h must be an integer multiple of it")
            need = self.horizon * (v["forecast.N0"] + 1) * v["obs.h"]
            if need > v["sim.T"] / 2 * (1 + 1e-12):
                problems.append(
                    f"forecast.K: pieces need K*(N0+1)*h = {need:g} time units but sim.T/2 = {v['sim.T'] / 2:g}"
                )
        return problems

    def to_text(self) -> str:
        lines = []
        for key in SCHEMA:
            value = self.values[key]
            lines.append(f"{key} = {value!r}" if isinstance(value, float) else f"{key} = {value}")
        return "\n".join(lines) + "\n"
