"""Scenario configuration: flat ``key = value`` files with ``#`` comments.

Unspecified keys fall back to the published parameter table and run
settings. The only model value that is not published is ``phi``; it and
the solver settings are reported as artifact defaults in the echo.
"""

import dataclasses
import math
from typing import Optional

import numpy as np

from ._kernels import PARAM_ORDER
from .control import ObjectiveWeights
from .errors import InvariantViolation, ParseError, UnknownKey
from .integrate import DEFAULT_STEP, TimeGrid
from .model import UNPUBLISHED_DEFAULTS, ModelParams, State

PUBLISHED_INITIAL_STATE = State(0.2, 0.07, 0.05, 0.5)

# key -> (default, source); tf depends on the command and is resolved later
SETTINGS = {
    "X0": (PUBLISHED_INITIAL_STATE.X, "published"),
    "S0": (PUBLISHED_INITIAL_STATE.S, "published"),
    "I0": (PUBLISHED_INITIAL_STATE.I, "published"),
    "A0": (PUBLISHED_INITIAL_STATE.A, "published"),
    "t0": (0.0, "artifact default"),
    "tf": (None, "published"),
    "h": (DEFAULT_STEP, "artifact default"),
    "P1": (ObjectiveWeights().P1, "published"),
    "P2": (ObjectiveWeights().P2, "published"),
    "P3": (ObjectiveWeights().P3, "published"),
    "Q": (ObjectiveWeights().Q, "published"),
    "R": (ObjectiveWeights().R, "published"),
    "relaxation": (0.5, "artifact default"),
    "tol": (1e-3, "artifact default"),
    "max_iter": (200, "artifact default"),
    "scan_param": (None, "artifact default"),
    "scan_lo": (None, "artifact default"),
    "scan_hi": (None, "artifact default"),
    "scan_n": (None, "artifact default"),
    "scan_values": (None, "artifact default"),
    "attractor_tf": (600.0, "published"),
    "transient_fraction": (0.5, "artifact default"),
    "output_dir": (None, "artifact default"),
}
INT_KEYS = {"max_iter", "scan_n"}
STR_KEYS = {"scan_param", "output_dir"}
LIST_KEYS = {"scan_values"}
ALIASES = {"lambda": "lam"}

DEFAULT_TF = {"simulate": 600.0, "equilibria": 600.0, "stability": 600.0,
              "hopf-scan": 600.0, "bifurcation": 600.0, "optimal-control": 60.0}


@dataclasses.dataclass(frozen=True)
class ScanSpec:
    param: str
    values: tuple

    @property
    def lo(self):
        return self.values[0]

    @property
    def hi(self):
        return self.values[-1]

    @property
    def n(self):
        return len(self.values)


@dataclasses.dataclass(frozen=True)
class ScenarioConfig:
    params: ModelParams
    initial_state: State
    t0: float
    tf: Optional[float]
    h: float
    weights: ObjectiveWeights
    relaxation: float
    tol: float
    max_iter: int
    scan: Optional[ScanSpec]
    attractor_tf: float
    transient_fraction: float
    output_dir: Optional[str]
    overrides: tuple
    sources: dict

    def grid(self, command="simulate"):
        tf = self.tf if self.tf is not None else DEFAULT_TF[command]
        return TimeGrid.from_step(tf, self.h, self.t0)

    def echo(self, command="simulate"):
        """Lines ``key = value  # source`` covering every resolved setting."""
        lines = []
        for name in PARAM_ORDER:
            key = "lambda" if name == "lam" else name
            src = self.sources.get(name, "table1")
            if src == "artifact default":
                src = "artifact default (unpublished)"
            lines.append(f"{key} = {getattr(self.params, name)!r}  # {src}")
        values = {
            "X0": self.initial_state.X, "S0": self.initial_state.S,
            "I0": self.initial_state.I, "A0": self.initial_state.A,
            "t0": self.t0, "tf": self.grid(command).tf, "h": self.grid(command).h,
            "P1": self.weights.P1, "P2": self.weights.P2, "P3": self.weights.P3,
            "Q": self.weights.Q, "R": self.weights.R,
            "relaxation": self.relaxation, "tol": self.tol, "max_iter": self.max_iter,
            "attractor_tf": self.attractor_tf, "transient_fraction": self.transient_fraction,
        }
        for key, value in values.items():
            lines.append(f"{key} = {value!r}  # {self.sources.get(key, SETTINGS[key][1])}")
        if self.scan is not None:
            vals = ", ".join(repr(v) for v in self.scan.values)
            lines.append(f"scan {self.scan.param} = [{vals}]  # {self.sources.get('scan_param', 'config')}")
        return lines


def _convert(key, raw, lineno):
    raw = raw.strip()
    if raw == "":
        raise ParseError(f"missing value for {key!r}", lineno)
    if key in STR_KEYS:
        return raw
    try:
        if key in INT_KEYS:
            value = float(raw)
            if value != int(value):
                raise ValueError
            return int(value)
        if key in LIST_KEYS:
            return tuple(float(v) for v in raw.split(",") if v.strip())
        value = float(raw)
    except ValueError:
        raise ParseError(f"cannot parse value {raw!r} for {key!r}", lineno) from None
    if not math.isfinite(value):
        raise ParseError(f"value for {key!r} must be finite", lineno)
    return value


def _canonical(key, lineno):
    key = ALIASES.get(key, key)
    if key not in PARAM_ORDER and key not in SETTINGS:
        raise UnknownKey(key, lineno)
    return key


def parse_text(text):
    """Parse config text into ``{key: (value, lineno)}``."""
    entries = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {line!r}", lineno)
        key, raw = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ParseError("empty key", lineno)
        key = _canonical(key, lineno)
        if key in entries:
            raise ParseError(f"duplicate key {key!r}", lineno)
        entries[key] = (_convert(key, raw, lineno), lineno)
    return entries


def parse_override(item):
    """Parse one ``--set key=value`` argument into ``(key, value)``."""
    if "=" not in item:
        raise ParseError(f"override {item!r} is not of the form key=value")
    key, raw = (part.strip() for part in item.split("=", 1))
    key = _canonical(key, None)
    return key, _convert(key, raw, None)


def build_config(entries, overrides=()):
    """Resolve parsed entries plus overrides into a validated config."""
    values = {k: v for k, (v, _) in entries.items()}
    sources = {k: "config" for k in values}
    for key, value in overrides:
        values[key] = value
        sources[key] = "override"
    for name, default in UNPUBLISHED_DEFAULTS.items():
        sources.setdefault(name, "artifact default")

    kw = {n: values[n] for n in PARAM_ORDER if n in values}
    params = ModelParams(**kw).validate()

    def get(key):
        return values.get(key, SETTINGS[key][0])

    s0 = State(get("X0"), get("S0"), get("I0"), get("A0"))
    if min(s0) < 0:
        raise InvariantViolation("initial state must be nonnegative")
    weights = ObjectiveWeights(get("P1"), get("P2"), get("P3"), get("Q"), get("R"))
    try:
        weights.validate()
    except ValueError as exc:
        raise InvariantViolation(str(exc)) from None
    if get("h") <= 0:
        raise InvariantViolation("step h must be positive")
    if get("tf") is not None and get("tf") <= get("t0"):
        raise InvariantViolation("tf must exceed t0")
    if not 0 < get("relaxation") <= 1:
        raise InvariantViolation("relaxation must lie in (0, 1]")
    if get("tol") <= 0 or get("max_iter") < 1:
        raise InvariantViolation("tol must be positive and max_iter at least 1")
    if get("attractor_tf") <= 0 or not 0 <= get("transient_fraction") < 1:
        raise InvariantViolation("attractor_tf > 0 and 0 <= transient_fraction < 1 required")
    scan = _build_scan(values)
    return ScenarioConfig(
        params=params, initial_state=s0, t0=float(get("t0")),
        tf=None if get("tf") is None else float(get("tf")), h=float(get("h")),
        weights=weights, relaxation=float(get("relaxation")), tol=float(get("tol")),
        max_iter=int(get("max_iter")), scan=scan, attractor_tf=float(get("attractor_tf")),
        transient_fraction=float(get("transient_fraction")), output_dir=get("output_dir"),
        overrides=tuple(overrides), sources=sources)


def _build_scan(values):
    param = values.get("scan_param")
    grid_keys = [k for k in ("scan_lo", "scan_hi", "scan_n") if k in values]
    if param is None:
        if grid_keys or "scan_values" in values:
            raise InvariantViolation("scan settings given without scan_param")
        return None
    param = ALIASES.get(param, param)
    if param not in PARAM_ORDER:
        raise InvariantViolation(f"scan_param {param!r} is not a model parameter")
    if "scan_values" in values:
        if grid_keys:
            raise InvariantViolation("give either scan_values or scan_lo/scan_hi/scan_n, not both")
        vals = tuple(values["scan_values"])
        if not vals:
            raise InvariantViolation("scan_values is empty")
    else:
        if len(grid_keys) != 3:
            raise InvariantViolation("scan needs scan_lo, scan_hi and scan_n")
        lo, hi, n = values["scan_lo"], values["scan_hi"], values["scan_n"]
        if not lo < hi:
            raise InvariantViolation("scan_lo must be below scan_hi")
        if n < 2:
            raise InvariantViolation("scan_n must be at least 2")
        vals = tuple(np.linspace(lo, hi, n).tolist())
    return ScanSpec(param, vals)


def load_config(path, overrides=()):
    """Read and resolve a config file.

    Args:
        path: file in ``key = value`` format.
        overrides: ``key=value`` strings applied after the file.
    """
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return build_config(parse_text(text), [parse_override(o) for o in overrides])
