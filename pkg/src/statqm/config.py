"""Scenario configuration: YAML in, validated objects out.

Every section is checked against a fixed key set before anything runs;
errors carry the file, line and dotted key that caused them.
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .coupling import Classical, PolynomialFamily, PowerLaw, Quantum
from .dynamics import SCHEMES, EvolutionConfig, Potential
from .errors import ConfigError
from .fields import FieldState, GridSpec, SampledField, gaussian_state, normalize, read_columns

# section -> {key: default}; a default of REQUIRED must be given explicitly
REQUIRED = object()

SECTIONS = {
    "grid": {"x_min": REQUIRED, "x_max": REQUIRED, "n": REQUIRED},
    "evolution": {"dt": REQUIRED, "t_final": REQUIRED, "record_every": 1, "scheme": "rk4",
                  "mass": 1.0, "s_const": 1.0, "fd_scheme": "central4", "momentum_rule": "quantum",
                  "viscosity": 0.0, "cfl": 0.25, "norm_tol": 1e-8, "overflow": 1e12},
    "output": {"dumps": False},
    "spectrum": {"bins": None, "at": "initial"},
    "maxent": {"landscape": None, "energies": None, "target": REQUIRED, "trials": 100, "delta": 1e-3},
}

VARIANTS = {
    "initial": ("preset", {
        "gaussian": {"mu": 0.0, "sigma": 1.0, "p0": 0.0},
        "ho_ground": {"omega": 1.0},
        "file": {"path": REQUIRED},
    }),
    "potential": ("kind", {
        "none": {},
        "linear": {"F": REQUIRED},
        "harmonic": {"omega": REQUIRED},
        "file": {"path": REQUIRED},
    }),
    "coupling": ("kind", {
        "classical": {},
        "power_law": {"n": REQUIRED, "coeff": REQUIRED},
        "quantum": {"hbar_eff": 1.0, "mass": 1.0},
        "polynomial_family": {"A": 0.0, "coeffs": {}},
    }),
}

TOP_LEVEL = set(SECTIONS) | set(VARIANTS) | {"seed"}


def _line_map(node, path=(), out=None) -> dict:
    """Dotted key path -> 1-based line number, from a composed YAML node."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            p = path + (str(k.value),)
            out[p] = k.start_mark.line + 1
            _line_map(v, p, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            p = path + (str(i),)
            out[p] = v.start_mark.line + 1
            _line_map(v, p, out)
    return out


@dataclass
class ScenarioConfig:
    """A validated scenario; ``data`` is the resolved dict with all defaults filled in."""

    data: dict
    source: Path | None = None

    @property
    def seed(self) -> int:
        return int(self.data.get("seed", 0))

    def with_seed(self, seed: int | None) -> "ScenarioConfig":
        if seed is None:
            return self
        data = copy.deepcopy(self.data)
        data["seed"] = int(seed)
        return ScenarioConfig(data, self.source)

    def dump(self) -> str:
        return yaml.safe_dump(self.data, sort_keys=True, default_flow_style=False)

    def _base(self) -> Path:
        return self.source.parent if self.source is not None else Path.cwd()

    def resolve_path(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self._base() / p

    # --- builders -------------------------------------------------------

    def grid(self) -> GridSpec:
        g = self.data["grid"]
        return GridSpec(float(g["x_min"]), float(g["x_max"]), int(g["n"]))

    def coupling(self):
        c = self.data["coupling"]
        kind = c["kind"]
        if kind == "classical":
            return Classical()
        if kind == "power_law":
            return PowerLaw(c["n"], c["coeff"])
        if kind == "quantum":
            return Quantum(float(c["hbar_eff"]), float(c["mass"]))
        return PolynomialFamily(float(c["A"]), {int(n): float(v) for n, v in c["coeffs"].items()})

    def potential(self) -> Potential:
        p = self.data["potential"]
        kind = p["kind"]
        if kind == "none":
            return Potential()
        if kind == "linear":
            return Potential.linear(p["F"])
        if kind == "harmonic":
            return Potential.harmonic(p["omega"], self.data["evolution"]["mass"])
        cols = read_columns(self.resolve_path(p["path"]))
        grid = self.grid()
        if "x" not in cols or "value" not in cols or not np.allclose(cols["x"], grid.x, rtol=0, atol=1e-9):
            raise ConfigError(f"potential file {p['path']}: need columns x,value on the scenario grid")
        return Potential.from_samples(SampledField(grid, cols["value"]))

    def initial_state(self) -> FieldState:
        ini = self.data["initial"]
        grid = self.grid()
        evo = self.data["evolution"]
        if ini["preset"] == "gaussian":
            return gaussian_state(grid, ini["mu"], ini["sigma"], ini["p0"])
        if ini["preset"] == "ho_ground":
            sigma = math.sqrt(evo["s_const"] / (2 * evo["mass"] * ini["omega"]))
            return gaussian_state(grid, 0.0, sigma, 0.0)
        cols = read_columns(self.resolve_path(ini["path"]))
        if not {"x", "rho", "S"} <= set(cols) or not np.allclose(cols["x"], grid.x, rtol=0, atol=1e-9):
            raise ConfigError(f"initial file {ini['path']}: need columns x,rho,S on the scenario grid")
        return FieldState(grid, normalize(cols["rho"], grid), cols["S"], 0.0)

    def evolution(self) -> EvolutionConfig:
        e = self.data["evolution"]
        return EvolutionConfig(
            dt=e["dt"], t_final=e["t_final"], record_every=e["record_every"], scheme=e["scheme"],
            potential=self.potential(), coupling=self.coupling(), mass=e["mass"], s_const=e["s_const"],
            norm_tol=e["norm_tol"], overflow=e["overflow"], fd_scheme=e["fd_scheme"],
            momentum_rule=e["momentum_rule"], viscosity=e["viscosity"], cfl=e["cfl"])


# --- loading ---------------------------------------------------------------

class _Validator:
    def __init__(self, lines: dict, source: str):
        self.lines = lines
        self.source = source

    def fail(self, path, msg):
        line = None
        for k in range(len(path), 0, -1):
            line = self.lines.get(tuple(path[:k]))
            if line is not None:
                break
        where = f"{self.source}:{line}" if line else self.source
        key = ".".join(str(p) for p in path) or "<root>"
        raise ConfigError(f"{where}: {key}: {msg}")

    def section(self, raw, path, schema):
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            self.fail(path, "expected a mapping")
        for k in raw:
            if k not in schema:
                self.fail(path + (str(k),), f"unknown key (allowed: {', '.join(sorted(schema))})")
        out = {}
        for k, default in schema.items():
            if k in raw:
                out[k] = raw[k]
            elif default is REQUIRED:
                self.fail(path + (k,), "missing required key")
            else:
                out[k] = copy.deepcopy(default)
        return out

    def variant(self, raw, path, tag, options, default_tag):
        if raw is None:
            raw = {tag: default_tag}
        if not isinstance(raw, dict):
            self.fail(path, "expected a mapping")
        name = raw.get(tag, default_tag)
        if name not in options:
            self.fail(path + (tag,), f"unknown {tag} {name!r} (allowed: {', '.join(options)})")
        schema = {tag: name, **options[name]}
        return self.section(raw, path, schema)


def _number(v, path, val, *, integer=False, positive=False, non_negative=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        val.fail(path, f"expected a number, got {v!r}")
    if integer and int(v) != v:
        val.fail(path, f"expected an integer, got {v!r}")
    if not math.isfinite(v):
        val.fail(path, "must be finite")
    if positive and not v > 0:
        val.fail(path, "must be positive")
    if non_negative and v < 0:
        val.fail(path, "must be non-negative")
    return int(v) if integer else float(v)


def _choice(v, path, val, options):
    if v not in options:
        val.fail(path, f"expected one of {list(options)}, got {v!r}")
    return v


def validate(raw, source: str = "<config>", lines: dict | None = None, needs=("grid",)) -> dict:
    """Check ``raw`` against the schema and return the resolved dict."""
    val = _Validator(lines or {}, source)
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        val.fail((), "top level must be a mapping")
    for k in raw:
        if k not in TOP_LEVEL:
            val.fail((str(k),), f"unknown key (allowed: {', '.join(sorted(TOP_LEVEL))})")
    for k in needs:
        if k not in raw:
            val.fail((k,), "missing required section")
    data = {"seed": _number(raw.get("seed", 0), ("seed",), val, integer=True, non_negative=True)}

    if "grid" in raw:
        g = val.section(raw["grid"], ("grid",), SECTIONS["grid"])
        g["x_min"] = _number(g["x_min"], ("grid", "x_min"), val)
        g["x_max"] = _number(g["x_max"], ("grid", "x_max"), val)
        g["n"] = _number(g["n"], ("grid", "n"), val, integer=True)
        if g["n"] < 8:
            val.fail(("grid", "n"), "need at least 8 points")
        if g["x_max"] <= g["x_min"]:
            val.fail(("grid", "x_max"), "must exceed x_min")
        data["grid"] = g

    if "evolution" in raw or "evolution" in needs:
        e = val.section(raw.get("evolution"), ("evolution",), SECTIONS["evolution"])
        p = ("evolution",)
        for k in ("dt", "mass", "s_const", "cfl", "norm_tol", "overflow"):
            e[k] = _number(e[k], p + (k,), val, positive=True)
        e["t_final"] = _number(e["t_final"], p + ("t_final",), val, non_negative=True)
        e["viscosity"] = _number(e["viscosity"], p + ("viscosity",), val, non_negative=True)
        e["record_every"] = _number(e["record_every"], p + ("record_every",), val, integer=True, positive=True)
        _choice(e["scheme"], p + ("scheme",), val, SCHEMES)
        _choice(e["fd_scheme"], p + ("fd_scheme",), val, ("central", "central4"))
        _choice(e["momentum_rule"], p + ("momentum_rule",), val, ("quantum", "hybrid"))
        steps = e["t_final"] / e["dt"]
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            val.fail(p + ("t_final",), "must be an integer multiple of dt")
        data["evolution"] = e
    else:
        data["evolution"] = {"mass": 1.0, "s_const": 1.0}

    tag, options = VARIANTS["initial"]
    ini = val.variant(raw.get("initial"), ("initial",), tag, options, "gaussian")
    for k in ("mu", "p0"):
        if k in ini:
            ini[k] = _number(ini[k], ("initial", k), val)
    for k in ("sigma", "omega"):
        if k in ini:
            ini[k] = _number(ini[k], ("initial", k), val, positive=True)
    data["initial"] = ini

    tag, options = VARIANTS["potential"]
    pot = val.variant(raw.get("potential"), ("potential",), tag, options, "none")
    if "F" in pot:
        pot["F"] = _number(pot["F"], ("potential", "F"), val)
    if "omega" in pot:
        pot["omega"] = _number(pot["omega"], ("potential", "omega"), val, positive=True)
    data["potential"] = pot

    tag, options = VARIANTS["coupling"]
    cp = val.variant(raw.get("coupling"), ("coupling",), tag, options, "classical")
    p = ("coupling",)
    if cp["kind"] == "power_law":
        cp["n"] = _number(cp["n"], p + ("n",), val, integer=True)
        cp["coeff"] = _number(cp["coeff"], p + ("coeff",), val)
        if cp["n"] < 1:
            val.fail(p + ("n",), "power-law exponent must be >= 1")
    elif cp["kind"] == "quantum":
        cp["hbar_eff"] = _number(cp["hbar_eff"], p + ("hbar_eff",), val, positive=True)
        cp["mass"] = _number(cp["mass"], p + ("mass",), val, positive=True)
    elif cp["kind"] == "polynomial_family":
        cp["A"] = _number(cp["A"], p + ("A",), val)
        if not isinstance(cp["coeffs"], dict):
            val.fail(p + ("coeffs",), "expected a mapping n -> C_n")
        coeffs = {}
        for n, c in cp["coeffs"].items():
            n = _number(n, p + ("coeffs", str(n)), val, integer=True)
            if n in (1, 2):
                val.fail(p + ("coeffs", str(n)), "index n must satisfy n <= 0 or n >= 3")
            coeffs[n] = _number(c, p + ("coeffs", str(n)), val)
        cp["coeffs"] = dict(sorted(coeffs.items()))
    data["coupling"] = cp

    data["output"] = val.section(raw.get("output"), ("output",), SECTIONS["output"])
    if not isinstance(data["output"]["dumps"], bool):
        val.fail(("output", "dumps"), "expected true or false")

    if "spectrum" in raw:
        sp = val.section(raw["spectrum"], ("spectrum",), SECTIONS["spectrum"])
        if sp["bins"] is not None:
            sp["bins"] = _number(sp["bins"], ("spectrum", "bins"), val, integer=True, positive=True)
        _choice(sp["at"], ("spectrum", "at"), val, ("initial", "final"))
        data["spectrum"] = sp

    if "maxent" in raw:
        mx = val.section(raw["maxent"], ("maxent",), SECTIONS["maxent"])
        p = ("maxent",)
        if (mx["landscape"] is None) == (mx["energies"] is None):
            val.fail(p, "give exactly one of 'landscape' (CSV path) or 'energies' (list)")
        if mx["energies"] is not None:
            if not isinstance(mx["energies"], list) or len(mx["energies"]) < 2:
                val.fail(p + ("energies",), "expected a list of at least two numbers")
            mx["energies"] = [_number(v, p + ("energies", str(i)), val) for i, v in enumerate(mx["energies"])]
        elif not isinstance(mx["landscape"], str):
            val.fail(p + ("landscape",), "expected a file path")
        mx["target"] = _number(mx["target"], p + ("target",), val)
        mx["trials"] = _number(mx["trials"], p + ("trials",), val, integer=True, non_negative=True)
        mx["delta"] = _number(mx["delta"], p + ("delta",), val, non_negative=True)
        data["maxent"] = mx

    cfg = ScenarioConfig(data)
    if "grid" in data and "evolution" in raw:
        try:
            EvolutionConfig(dt=data["evolution"]["dt"], t_final=data["evolution"]["t_final"],
                            scheme=data["evolution"]["scheme"], coupling=cfg.coupling(),
                            mass=data["evolution"]["mass"], s_const=data["evolution"]["s_const"])
        except ValueError as err:
            val.fail(("evolution", "scheme"), str(err))
    return data


def parse(text: str, source: str = "<config>", needs=("grid",)) -> dict:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        raw = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise ConfigError(f"{source}: invalid YAML: {err}") from err
    lines = _line_map(node) if node is not None else {}
    return validate(raw, source, lines, needs)


def load(path, needs=("grid",)) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    cfg = ScenarioConfig(parse(text, str(path), needs), path)
    check_files(cfg)
    return cfg


def check_files(cfg: ScenarioConfig):
    for section, key in (("initial", "path"), ("potential", "path"), ("maxent", "landscape")):
        p = cfg.data.get(section, {}).get(key)
        if p is not None and not cfg.resolve_path(p).is_file():
            raise ConfigError(f"{cfg.source}: {section}.{key}: file not found: {p}")
