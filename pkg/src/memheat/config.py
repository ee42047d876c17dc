"""Scenario configuration: TOML text with sections and ``key = value`` entries."""

from __future__ import annotations

import copy
import re
import sys
from dataclasses import dataclass

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError

SCENARIOS = ("simulate", "linear-decay", "verify-kernel", "decomposition", "ensemble", "invariants")

DEFAULTS = {
    "seed": 0,
    "n_seeds": 1,
    "kernel": {"family": "exponential", "delta": 1.0},
    "nonlinearity": {"coefficients": []},
    "forcing": {"coefficients": [], "modes": []},
    "discretization": {
        "n_modes": 64,
        "n_nodes": 64,
        "node_rule": "composite",
        "weighting": "auto",
        "dt": 1e-2,
        "t_final": 50.0,
        "cadence": 10,
        "warmup": [],
    },
    "initial": {"radius": 1.0, "space": "V", "u_decay": 3.0, "eta_decay": 3.0, "profile": "smooth"},
    "checks": {
        "datko_tail_start": 40.0,
        "absorb_after": 20.0,
        "radii": [1.0, 2.0, 5.0],
        "radius_factor": 1.5,
        "trials": 1000,
        "gronwall_instances": 20,
    },
    "output": {"dir": "memheat-out", "plots": True},
    "run": {"workers": 1},
}

# sections a scenario must spell out explicitly
REQUIRED = {
    "verify-kernel": ("kernel",),
    "linear-decay": ("kernel", "discretization"),
    "simulate": ("kernel", "nonlinearity", "discretization"),
    "decomposition": ("kernel", "nonlinearity", "forcing", "discretization"),
    "ensemble": ("kernel", "nonlinearity", "discretization"),
    "invariants": ("kernel",),
}

_TYPES = {
    ("discretization", "n_modes"): int,
    ("discretization", "n_nodes"): int,
    ("discretization", "cadence"): int,
    ("discretization", "dt"): float,
    ("discretization", "t_final"): float,
    ("initial", "radius"): float,
    ("run", "workers"): int,
    ("checks", "trials"): int,
    ("checks", "gronwall_instances"): int,
}


@dataclass(frozen=True)
class ScenarioConfig:
    """A parsed and default-expanded configuration."""

    scenario: str
    data: dict
    source: str | None = None
    base_dir: str | None = None

    @property
    def seeds(self):
        return [int(self.data["seed"]) + i for i in range(int(self.data["n_seeds"]))]

    def section(self, name):
        return self.data[name]

    @property
    def output_dir(self):
        return self.data["output"]["dir"]

    def resolved(self):
        return {"scenario": self.scenario, **copy.deepcopy(self.data)}


def _locate(text, key):
    """Line and column of the first ``key =`` in ``text`` (1-based), or (None, None)."""
    if not text:
        return None, None
    pat = re.compile(r"^\s*" + re.escape(key) + r"\s*=", re.M)
    m = pat.search(text)
    if not m:
        pat = re.compile(r"^\s*\[" + re.escape(key) + r"\]", re.M)
        m = pat.search(text)
    if not m:
        return None, None
    line = text.count("\n", 0, m.start()) + 1
    col = m.start() - (text.rfind("\n", 0, m.start()) + 1) + 1
    lead = len(m.group(0)) - len(m.group(0).lstrip())
    return line, col + lead


def parse_config(text, scenario=None, overrides=None, base_dir=None):
    """Parse TOML ``text`` into a :class:`ScenarioConfig`.

    ``scenario`` (from the command line) takes precedence over the
    ``scenario`` key.  ``overrides`` is a flat mapping applied last, e.g.
    ``{"seed": 3, "output.dir": "x", "run.workers": 2}``.

    Raises
    ------
    ConfigError
        With the line and column of the offending input where known.
    """
    if text is None or not text.strip():
        raise ConfigError("empty configuration", line=1, column=1)
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line, col = _decode_position(exc, text)
        raise ConfigError(f"cannot parse configuration: {_strip_position(str(exc))}", line, col) from None

    name = scenario or raw.get("scenario")
    if name is None:
        raise ConfigError("no scenario given (set 'scenario = ...' or pass --scenario)", 1, 1)
    if name not in SCENARIOS:
        line, col = _locate(text, "scenario")
        raise ConfigError(f"unknown scenario {name!r}; expected one of {', '.join(SCENARIOS)}", line, col)
    if "scenario" not in raw and scenario is None:
        raise ConfigError("no scenario given", 1, 1)

    for sec in REQUIRED[name]:
        if sec not in raw:
            raise ConfigError(f"scenario {name!r} needs a [{sec}] section", 1, 1)

    data = copy.deepcopy(DEFAULTS)
    for key, value in raw.items():
        if key == "scenario":
            continue
        if key not in data:
            line, col = _locate(text, key)
            raise ConfigError(f"unknown key or section {key!r}", line, col)
        if isinstance(data[key], dict):
            if not isinstance(value, dict):
                line, col = _locate(text, key)
                raise ConfigError(f"{key!r} must be a section", line, col)
            if key == "kernel":
                data[key] = dict(value)
            else:
                for k2, v2 in value.items():
                    if k2 not in data[key]:
                        line, col = _locate(text, k2)
                        raise ConfigError(f"unknown key {k2!r} in [{key}]", line, col)
                    data[key][k2] = _coerce(key, k2, v2, text)
        else:
            data[key] = value

    for k, v in (overrides or {}).items():
        if v is None:
            continue
        if "." in k:
            sec, sub = k.split(".", 1)
            data[sec][sub] = v
        else:
            data[k] = v
    _validate(name, data, text)
    return ScenarioConfig(name, data, text, base_dir)


def load_config(path, scenario=None, overrides=None):
    import os

    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc.strerror}") from None
    return parse_config(text, scenario, overrides, base_dir=os.path.dirname(os.path.abspath(path)))


def _coerce(section, key, value, text):
    want = _TYPES.get((section, key))
    if want is None:
        return value
    try:
        if want is int and isinstance(value, float) and not value.is_integer():
            raise ValueError
        if isinstance(value, bool):
            raise ValueError
        return want(value)
    except (TypeError, ValueError):
        line, col = _locate(text, key)
        raise ConfigError(f"[{section}] {key} must be {want.__name__}, got {value!r}", line, col) from None


def _validate(name, data, text):
    d = data["discretization"]
    for key in ("dt", "t_final"):
        if not d[key] > 0:
            line, col = _locate(text, key)
            raise ConfigError(f"[discretization] {key} must be positive", line, col)
    for key in ("n_modes", "n_nodes", "cadence"):
        if d[key] < 1:
            line, col = _locate(text, key)
            raise ConfigError(f"[discretization] {key} must be at least 1", line, col)
    for pair in d["warmup"]:
        if not (isinstance(pair, list) and len(pair) == 2 and pair[0] > 0 and pair[1] > 0):
            line, col = _locate(text, "warmup")
            raise ConfigError("[discretization] warmup must be a list of [duration, dt] pairs", line, col)
    if int(data["n_seeds"]) < 1:
        line, col = _locate(text, "n_seeds")
        raise ConfigError("n_seeds must be at least 1", line, col)
    if "family" not in data["kernel"]:
        line, col = _locate(text, "kernel")
        raise ConfigError("[kernel] needs a 'family'", line, col)


def _decode_position(exc, text):
    line = getattr(exc, "lineno", None)
    col = getattr(exc, "colno", None)
    if line is None:
        m = re.search(r"line (\d+), column (\d+)", str(exc))
        if m:
            line, col = int(m.group(1)), int(m.group(2))
    return line or 1, col or 1


def _strip_position(msg):
    return re.sub(r"\s*\(at line \d+, column \d+\)", "", msg)
