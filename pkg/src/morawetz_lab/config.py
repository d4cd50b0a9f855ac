"""Scenario configuration files (TOML) and their validation.

A scenario file must start with ``schema = "morawetz-lab/scenario@1"``.
Unknown sections or keys are rejected, and every error names the offending
field and, where it can be located, the line.
"""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass, field
from pathlib import Path

import tomli
import tomli_w

from .errors import ConfigError
from .model import ModelParams, PotentialProfile

SCHEMA = "morawetz-lab/scenario@1"

CHECKS = (
    "energy_conservation",
    "noether",
    "exponential_bound",
    "energy_balance",
    "classical_morawetz",
    "refined_morawetz",
    "i_functional",
    "gen_energy",
    "identity_classical",
    "identity_refined",
    "positivity",
    "cutoff_domination",
    "approx_divergence",
    "windowed_supports",
    "parseval",
    "j_estimate",
    "closing",
    "lemma",
)
SWEEP_AXES = ("T", "epsilon", "resolution", "ell")
CONVERGE_DIAGNOSTICS = ("energy_balance", "identity_classical", "identity_refined", "approx_divergence", "solution")


@dataclass(frozen=True)
class GridConfig:
    """Spatial spacing and CFL factor; the domain size follows from T and the data."""

    spacing: float = 0.1
    cfl: float = 0.5
    half_length: float | None = None

    def __post_init__(self):
        if self.spacing <= 0:
            raise ValueError("spacing must be > 0")
        if not 0 < self.cfl <= 1:
            raise ValueError("cfl must lie in (0, 1]")


@dataclass(frozen=True)
class DataSpec:
    kind: str = "gaussian"
    center: float = 0.0
    width: float = 1.0
    wavenumber: float = 0.0
    phase: str = "complex"
    rightward: bool = False
    amplitude: float = 1.0

    def __post_init__(self):
        if self.kind not in ("gaussian", "zero"):
            raise ValueError(f"unknown data kind {self.kind!r}")
        if self.phase not in ("real", "imaginary", "complex"):
            raise ValueError(f"unknown phase {self.phase!r}")
        if self.width <= 0:
            raise ValueError("width must be > 0")


@dataclass(frozen=True)
class RunSpec:
    """``record_stride`` sets the near-trap sampling, ``energy_interval`` the
    spacing in time of the full-grid samples used for energies."""

    record_stride: int = 1
    energy_interval: float = 0.5
    near_window: float = 3.0
    output_dir: str = "out"

    def __post_init__(self):
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")
        if self.energy_interval <= 0:
            raise ValueError("energy_interval must be > 0")
        if self.near_window < 2.5:
            raise ValueError("near_window must be >= 2.5 to contain supp chix")


@dataclass(frozen=True)
class SpectralSpec:
    enabled: bool = True
    tau_max: float = 64.0
    pad_factor: float = 1.0

    def __post_init__(self):
        if self.tau_max <= 0:
            raise ValueError("tau_max must be > 0")
        if self.pad_factor < 0:
            raise ValueError("pad_factor must be >= 0")


@dataclass(frozen=True)
class SweepSpec:
    axis: str = "T"
    values: tuple[float, ...] = ()

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ValueError(f"axis must be one of {SWEEP_AXES}")
        if len(self.values) < 2:
            raise ValueError("a sweep needs at least 2 values")


@dataclass(frozen=True)
class ConvergeSpec:
    """Refinement ladder: ``spacings`` must halve; ``ramp_smoothness`` sets the cutoff ramps."""

    spacings: tuple[float, ...] = (0.1, 0.05, 0.025, 0.0125)
    t_horizon: float | None = None
    ramp_smoothness: int = 4
    taus: tuple[float, ...] = (1.0, 4.0, 32.0)
    diagnostics: tuple[str, ...] = CONVERGE_DIAGNOSTICS

    def __post_init__(self):
        if len(self.spacings) < 3:
            raise ValueError("need at least 3 spacings")
        for a, b in zip(self.spacings, self.spacings[1:]):
            if abs(a / b - 2.0) > 1e-9:
                raise ValueError("spacings must halve at each step")
        unknown = [d for d in self.diagnostics if d not in CONVERGE_DIAGNOSTICS]
        if unknown or not self.diagnostics:
            raise ValueError(f"diagnostics must be a nonempty subset of {list(CONVERGE_DIAGNOSTICS)}")
        if self.ramp_smoothness < 2:
            raise ValueError("ramp_smoothness must be >= 2")


@dataclass(frozen=True)
class ScenarioConfig:
    id: str
    model: ModelParams = field(default_factory=ModelParams)
    profile: PotentialProfile = field(default_factory=PotentialProfile)
    grid: GridConfig = field(default_factory=GridConfig)
    modes: tuple[int, ...] = (0,)
    data: DataSpec = field(default_factory=DataSpec)
    run: RunSpec = field(default_factory=RunSpec)
    spectral: SpectralSpec = field(default_factory=SpectralSpec)
    checks: tuple[str, ...] = ()
    sweep: SweepSpec | None = None
    converge: ConvergeSpec | None = None
    schema: str = SCHEMA

    def __post_init__(self):
        if self.schema != SCHEMA:
            raise ValueError(f"schema must be {SCHEMA!r}")
        if not self.modes or any(int(l) != l or l < 0 for l in self.modes):
            raise ValueError("modes must be a nonempty list of nonnegative integers")
        if len(set(self.modes)) != len(self.modes):
            raise ValueError("modes must not repeat")
        unknown = [c for c in self.checks if c not in CHECKS]
        if unknown:
            raise ValueError(f"unknown checks {unknown}; known: {list(CHECKS)}")
        if len(set(self.checks)) != len(self.checks):
            raise ValueError("checks must not repeat")
        if "energy_conservation" in self.checks and self.model.epsilon != 0:
            raise ValueError("energy_conservation needs epsilon = 0")

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)


# -- parsing ------------------------------------------------------------------

_SECTIONS = {
    "model": ModelParams,
    "potential": PotentialProfile,
    "grid": GridConfig,
    "data": DataSpec,
    "run": RunSpec,
    "spectral": SpectralSpec,
    "sweep": SweepSpec,
    "converge": ConvergeSpec,
}
_TOP_KEYS = {"schema", "id", "modes", "checks"}
_TUPLE_FIELDS = {"values", "spacings", "taus"}
_STR_TUPLE_FIELDS = {"diagnostics"}


def _locate(text: str, section: str | None, key: str) -> int | None:
    """1-based line of ``key = ...`` inside ``[section]`` (top level if None)."""
    current = None
    for n, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"^\[([^\]]+)\]", s)
        if m:
            current = m.group(1).strip()
            continue
        if current == section and re.match(rf"^{re.escape(key)}\s*=", s):
            return n
    return None


def _where(text, section, key) -> str:
    name = f"[{section}].{key}" if section else key
    line = _locate(text, section, key) if key else None
    if line is None and section and not key:
        line = next((n for n, l in enumerate(text.splitlines(), 1) if l.strip() == f"[{section}]"), None)
    return f"{name} (line {line})" if line else name


def _build(cls, table: dict, section: str, text: str):
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    for key in table:
        if key not in names:
            raise ConfigError(f"{_where(text, section, key)}: unknown key; allowed: {sorted(names)}")
    kwargs = {}
    for key, value in table.items():
        if key in _TUPLE_FIELDS:
            if not isinstance(value, list):
                raise ConfigError(f"{_where(text, section, key)}: expected a list")
            value = tuple(float(v) for v in value)
        elif key in _STR_TUPLE_FIELDS:
            if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
                raise ConfigError(f"{_where(text, section, key)}: expected a list of strings")
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        bad = next((k for k in kwargs if k in str(exc)), None)
        raise ConfigError(f"{_where(text, section, bad) if bad else '[' + section + ']'}: {exc}") from None


def parse_config(text: str) -> ScenarioConfig:
    """Parse and validate a scenario from TOML text."""
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"TOML syntax error: {exc}") from None
    for key, value in doc.items():
        if isinstance(value, dict):
            if key not in _SECTIONS and key != "checks" and key != "modes":
                raise ConfigError(f"[{key}] (line {_locate_section(text, key)}): unknown section; "
                                  f"allowed: {sorted(_SECTIONS) + ['checks', 'modes']}")
        elif key not in _TOP_KEYS:
            raise ConfigError(f"{_where(text, None, key)}: unknown top-level key")
    if "schema" not in doc:
        raise ConfigError("schema: missing; the first line must be schema = \"%s\"" % SCHEMA)
    if doc["schema"] != SCHEMA:
        raise ConfigError(f"{_where(text, None, 'schema')}: unsupported schema {doc['schema']!r}, expected {SCHEMA!r}")
    if "id" not in doc or not isinstance(doc["id"], str) or not doc["id"]:
        raise ConfigError("id: missing or empty scenario id")

    parts = {name: _build(cls, doc[name], name, text) for name, cls in _SECTIONS.items() if name in doc}
    modes = _list_field(doc, text, "modes", "ell", int)
    checks = _list_field(doc, text, "checks", "enabled", str)
    try:
        return ScenarioConfig(
            id=doc["id"],
            model=parts.get("model", ModelParams()),
            profile=parts.get("potential", PotentialProfile()),
            grid=parts.get("grid", GridConfig()),
            modes=tuple(modes) if modes is not None else (0,),
            data=parts.get("data", DataSpec()),
            run=parts.get("run", RunSpec()),
            spectral=parts.get("spectral", SpectralSpec()),
            checks=tuple(checks) if checks is not None else (),
            sweep=parts.get("sweep"),
            converge=parts.get("converge"),
        )
    except ValueError as exc:
        msg = str(exc)
        key = "enabled" if "check" in msg else "ell" if "mode" in msg else None
        sec = "checks" if key == "enabled" else "modes" if key == "ell" else None
        where = _where(text, sec, key) if key else "scenario"
        raise ConfigError(f"{where}: {msg}") from None


def _locate_section(text, name):
    return next((n for n, l in enumerate(text.splitlines(), 1) if l.strip() == f"[{name}]"), "?")


def _list_field(doc, text, section, key, kind):
    """Accepts ``[section] key = [...]``."""
    if section not in doc:
        return None
    table = doc[section]
    if not isinstance(table, dict) or set(table) != {key}:
        raise ConfigError(f"[{section}] (line {_locate_section(text, section)}): expected exactly the key {key!r}")
    values = table[key]
    if not isinstance(values, list) or not all(isinstance(v, kind) and not isinstance(v, bool) for v in values):
        raise ConfigError(f"{_where(text, section, key)}: expected a list of {kind.__name__}")
    return values


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    try:
        return parse_config(text)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


# -- emitting -----------------------------------------------------------------


def _table(obj) -> dict:
    out = {}
    for f in dataclasses.fields(obj):
        if not f.init:
            continue
        v = getattr(obj, f.name)
        if v is None:
            continue
        out[f.name] = list(v) if isinstance(v, tuple) else v
    return out


def config_to_dict(cfg: ScenarioConfig) -> dict:
    doc = {"schema": cfg.schema, "id": cfg.id}
    doc["model"] = _table(cfg.model)
    doc["potential"] = _table(cfg.profile)
    doc["grid"] = _table(cfg.grid)
    doc["modes"] = {"ell": list(cfg.modes)}
    doc["data"] = _table(cfg.data)
    doc["run"] = _table(cfg.run)
    doc["spectral"] = _table(cfg.spectral)
    doc["checks"] = {"enabled": list(cfg.checks)}
    if cfg.sweep is not None:
        doc["sweep"] = _table(cfg.sweep)
    if cfg.converge is not None:
        doc["converge"] = _table(cfg.converge)
    return doc


def emit_config(cfg: ScenarioConfig) -> str:
    return tomli_w.dumps(config_to_dict(cfg))


def shipped_scenarios() -> dict[str, Path]:
    """Scenario files installed with the package, keyed by file stem."""
    root = Path(__file__).with_name("scenarios")
    return {p.stem: p for p in sorted(root.glob("*.toml"))}
