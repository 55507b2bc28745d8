"""Experiment configuration: TOML parsing, validation, object construction.

Configs are strict: unknown keys are errors, and validation reports every
problem at once rather than stopping at the first.  Numeric conventions follow
the solver modules (epsilon values must be reciprocals of integers so the
oscillation lattice aligns with the strip period).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field as dc_field
from fractions import Fraction

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:      # python < 3.11
    import tomli as tomllib

from .coeffs import DatumPart, DirichletDatum, TorusFunction, TrigSeries
from .homog import DomainSpec


class ConfigError(ValueError):
    """Carries the full list of validation problems."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


_SCHEMA = {
    "tensor": {"kind", "resolution", "axis", "value", "matrix", "profile",
               "series", "entries", "d", "n"},
    "datum": {"slow", "parts"},
    "source": {"kind", "value", "amplitude", "modes"},
    "domain": {"kind", "bounds", "vertices", "center", "radius", "sides", "phase"},
    "sweep": {"epsilons", "order", "interior_margin", "points_per_eps",
              "alpha_geom", "kappa"},
    "bl": {"normal", "offset", "offset_prime", "height",
           "tangential_resolution", "theta_modes", "anchor"},
    "dioph": {"kappa", "exponent", "truncation", "samples", "kappas"},
    "solver": {"rtol", "maxiter"},
    "output": {"directory", "seed", "threads", "emit_fields"},
}

_SLOW_KEYS = {"kind", "value", "coeffs", "sin_amplitude", "cos_amplitude",
              "mode", "slope2"}

_DEFAULTS = {
    "tensor": {"kind": "constant", "value": 1.0, "resolution": 64, "d": 2, "n": 1},
    "source": {"kind": "zero"},
    "domain": {"kind": "strip"},
    "sweep": {"epsilons": ["1/8", "1/16", "1/32"], "order": 1,
              "interior_margin": 0.2, "points_per_eps": 8, "alpha_geom": 0.5,
              "kappa": 0.01},
    "bl": {"normal": [0.0, 1.0], "offset": 0.0, "height": 0.0,
           "tangential_resolution": 96, "theta_modes": 8, "anchor": [0.0, 0.0]},
    "dioph": {"kappa": 0.01, "exponent": 2.0, "truncation": 50, "samples": 1000,
              "kappas": [0.02, 0.04, 0.08]},
    "solver": {"rtol": 1e-10, "maxiter": 10000},
    "output": {"directory": "out", "seed": 1234, "threads": 1,
               "emit_fields": False},
}


@dataclass
class ExperimentConfig:
    tensor: dict
    datum: dict
    source: dict
    domain: dict
    sweep: dict
    bl: dict
    dioph: dict
    solver: dict
    output: dict
    raw: dict = dc_field(repr=False, default_factory=dict)

    def canonical(self):
        return {k: getattr(self, k) for k in
                ("tensor", "datum", "source", "domain", "sweep", "bl",
                 "dioph", "solver", "output")}

    def hash(self):
        blob = json.dumps(self.canonical(), sort_keys=True, default=_jsonable)
        return hashlib.sha256(blob.encode()).hexdigest()


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _parse_eps(value, problems):
    if isinstance(value, str):
        try:
            frac = Fraction(value)
        except (ValueError, ZeroDivisionError):
            problems.append(f"malformed epsilon {value!r}")
            return None
        value = float(frac)
    try:
        value = float(value)
    except (TypeError, ValueError):
        problems.append(f"malformed epsilon {value!r}")
        return None
    if not 0 < value <= 1:
        problems.append(f"epsilon {value} outside (0, 1]")
        return None
    inv = 1.0 / value
    if abs(inv - round(inv)) > 1e-9:
        problems.append(f"epsilon {value} is not the reciprocal of an integer")
        return None
    return 1.0 / round(inv)


def parse_config(path) -> ExperimentConfig:
    """Load and validate a TOML experiment config.

    Raises ConfigError listing every unknown key, missing field, malformed
    number, and semantic violation found.
    """
    with open(path, "rb") as fh:
        try:
            raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError([f"TOML parse error: {exc}"]) from exc
    problems = []
    for section in raw:
        if section not in _SCHEMA:
            problems.append(f"unknown section [{section}]")
    sections = {}
    for name, allowed in _SCHEMA.items():
        given = raw.get(name, {})
        if not isinstance(given, dict):
            problems.append(f"section [{name}] must be a table")
            given = {}
        for key in given:
            if key not in allowed:
                problems.append(f"unknown key {key!r} in section [{name}]")
        merged = dict(_DEFAULTS.get(name, {}))
        merged.update({k: v for k, v in given.items() if k in allowed})
        sections[name] = merged

    # numeric sanity
    eps_raw = sections["sweep"].get("epsilons", [])
    eps = [e for e in (_parse_eps(v, problems) for v in eps_raw) if e is not None]
    if len(eps) == len(eps_raw) and eps and not all(
            a > b for a, b in zip(eps, eps[1:])):
        problems.append("epsilons must be strictly decreasing")
    sections["sweep"]["epsilons"] = eps

    for key, owner in (("kappa", "sweep"), ("kappa", "dioph")):
        val = sections[owner].get(key)
        try:
            if float(val) <= 0:
                problems.append(f"kappa must be positive (section [{owner}])")
        except (TypeError, ValueError):
            problems.append(f"malformed kappa {val!r} in [{owner}]")
    for key in ("rtol",):
        try:
            if float(sections["solver"][key]) <= 0:
                problems.append("solver tolerances must be positive")
        except (TypeError, ValueError):
            problems.append(f"malformed solver.{key}")
    if sections["tensor"].get("kind") == "layered" and "profile" not in sections["tensor"]:
        problems.append("layered tensor requires a [tensor.profile] table")
    if sections["tensor"].get("kind") in ("trigonometric", "scalar-isotropic") \
            and "series" not in sections["tensor"] \
            and "entries" not in sections["tensor"]:
        problems.append(f"{sections['tensor']['kind']} tensor requires a series")
    order = sections["sweep"].get("order")
    if order not in (0, 1, 2):
        problems.append(f"sweep order must be 0, 1 or 2 (got {order!r})")
    datum = sections["datum"]
    if "slow" in datum:
        for key in datum["slow"]:
            if key not in _SLOW_KEYS:
                problems.append(f"unknown key {key!r} in [datum.slow]")
    for i, part in enumerate(datum.get("parts", [])):
        for key in part:
            if key not in {"envelope", "oscillation"}:
                problems.append(f"unknown key {key!r} in [[datum.parts]] #{i}")
        if "oscillation" not in part:
            problems.append(f"datum part #{i} is missing its oscillation table")
    if problems:
        raise ConfigError(problems)
    return ExperimentConfig(raw=raw, **{k: sections[k] for k in sections})


# ---------------------------------------------------------------------------
# object construction
# ---------------------------------------------------------------------------

def _slow_function(desc, n_comp=1):
    kind = (desc or {}).get("kind", "zero")
    value = float((desc or {}).get("value", 0.0))
    if kind == "zero":
        return lambda x: np.zeros(x.shape[:-1] + (n_comp,))
    if kind == "constant":
        return lambda x: np.full(x.shape[:-1] + (n_comp,), value)
    if kind == "affine":
        coeffs_ = np.asarray(desc.get("coeffs", [0.0, 0.0]), float)
        return lambda x: (value + x @ coeffs_)[..., None]
    if kind == "periodic":
        s_amp = float(desc.get("sin_amplitude", 0.0))
        c_amp = float(desc.get("cos_amplitude", 0.0))
        mode = float(desc.get("mode", 1))
        slope2 = float(desc.get("slope2", 0.0))

        def fn(x):
            arg = 2 * np.pi * mode * x[..., 0]
            out = value + s_amp * np.sin(arg) + c_amp * np.cos(arg) \
                + slope2 * x[..., 1]
            return out[..., None]

        return fn
    raise ConfigError([f"unknown slow-part kind {kind!r}"])


def build_datum(config: ExperimentConfig) -> DirichletDatum:
    desc = config.datum
    slow = _slow_function(desc.get("slow"))
    parts = []
    for part in desc.get("parts", []):
        env = _slow_function(part.get("envelope", {"kind": "constant",
                                                   "value": 1.0}))
        series = TrigSeries.from_descriptor(part["oscillation"], 2)
        parts.append(DatumPart(envelope=env,
                               oscillation=TorusFunction.from_series(series)))
    return DirichletDatum(slow=slow, parts=tuple(parts))


def build_source(config: ExperimentConfig):
    desc = config.source
    kind = desc.get("kind", "zero")
    if kind == "zero":
        return None
    if kind == "constant":
        return float(desc.get("value", 0.0))
    if kind == "sin_product":
        amp = float(desc.get("amplitude", 1.0))
        k1, k2 = (int(v) for v in desc.get("modes", [1, 1]))

        def fn(x):
            return (amp * np.sin(np.pi * k1 * x[..., 0])
                    * np.sin(np.pi * k2 * x[..., 1]))[..., None]

        return fn
    raise ConfigError([f"unknown source kind {kind!r}"])


def build_domain(config: ExperimentConfig) -> DomainSpec:
    desc = config.domain
    kind = desc.get("kind", "strip")
    if kind == "strip":
        return DomainSpec(kind="strip")
    if kind == "rectangle":
        bounds = desc.get("bounds", [[0.0, 1.0], [0.0, 1.0]])
        return DomainSpec(kind="rectangle",
                          bounds=tuple(tuple(float(v) for v in b) for b in bounds))
    if kind == "polygon":
        return DomainSpec(kind="polygon",
                          vertices=np.asarray(desc["vertices"], float))
    if kind == "disk":
        return DomainSpec(kind="disk",
                          center=tuple(desc.get("center", (0.5, 0.5))),
                          radius=float(desc.get("radius", 0.4)),
                          sides=desc.get("sides"),
                          phase=float(desc.get("phase", 0.0)))
    raise ConfigError([f"unknown domain kind {kind!r}"])
