"""
config.py
─────────
Run configuration: typed models, the INI-style config file and its writer.

File layout (sections optional, `#` and `;` start comments):

    [model]
    state_kind = fock
    chi        = 1e-4
    n_total    = 200

    [sim]
    n_traj       = 55000
    seed         = 1
    sample_times = 0, 10, 20, 30, 40

    [oracle]
    cap = 20

    [output]
    path   = results/fig3
    format = csv

    [run]
    mode = both

Unknown sections or keys, and values that do not parse, are ConfigError
with the offending line number.

USAGE:
    from ctapsteer.simulation.config import load_config, write_config

    config = load_config("fig3.ini", overrides={"sim": {"seed": 7}})
    write_config(config, "fig3-copy.ini")
"""

import configparser
import os
import re
from enum import Enum
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .model import ModelParams, SimParams, validate
from .oracle import OracleParams


class ConfigError(ValueError):
    """Unusable configuration. `line` is set for file errors, `violations` for range checks."""

    def __init__(self, message: str, line: Optional[int] = None, violations: Optional[list[str]] = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line       = line
        self.violations = violations or []


class RunMode(str, Enum):
    STOCHASTIC = "stochastic"
    ORACLE     = "oracle"
    BOTH       = "both"


class OutputFormat(str, Enum):
    CSV  = "csv"
    JSON = "json"


def _default_output_path() -> str:
    return os.path.join(os.environ.get("CTAPSTEER_OUTPUT_DIR", "results"), "ctap")


class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    model:         ModelParams  = Field(default_factory=ModelParams)
    sim:           SimParams    = Field(default_factory=SimParams)
    oracle:        OracleParams = Field(default_factory=OracleParams)
    mode:          RunMode      = Field(default=RunMode.STOCHASTIC, description="Which engines to run")
    output_path:   str          = Field(default_factory=_default_output_path, description="Stem of every output file")
    output_format: OutputFormat = Field(default=OutputFormat.CSV, description="Series file format")
    check_dt:      bool         = Field(default=False, description="Rerun at dt/2 and report the change")

    @property
    def runs_stochastic(self) -> bool:
        return self.mode in (RunMode.STOCHASTIC, RunMode.BOTH)

    @property
    def runs_oracle(self) -> bool:
        return self.mode in (RunMode.ORACLE, RunMode.BOTH)


# Where each file key lands: section → {key: (RunConfig field, sub-field or None)}
_SECTIONS = {
    "model":  {name: ("model", name) for name in ModelParams.model_fields},
    "sim":    {name: ("sim", name) for name in SimParams.model_fields},
    "oracle": {name: ("oracle", name) for name in OracleParams.model_fields},
    "output": {"path": ("output_path", None), "format": ("output_format", None)},
    "run":    {"mode": ("mode", None), "check_dt": ("check_dt", None)},
}

_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")
_KEY_RE     = re.compile(r"^\s*([^=:#;\s][^=:]*?)\s*[=:]")


# ── READING ───────────────────────────────────────────────────────────────────

def _line_numbers(text: str) -> dict:
    """(section, key) → 1-based line, and (section, None) → header line."""
    lines, section = {}, None
    for number, line in enumerate(text.splitlines(), 1):
        header = _SECTION_RE.match(line)
        if header:
            section = header.group(1).strip()
            lines.setdefault((section, None), number)
            continue
        key = _KEY_RE.match(line)
        if key and section is not None and not line[:1].isspace():
            lines.setdefault((section, key.group(1).strip().lower()), number)
    return lines


def _parse_value(field_name: str, raw: str):
    raw = raw.strip()
    if field_name == "sample_times":
        if raw.lower() in ("", "none"):
            return None
        return tuple(part.strip() for part in raw.split(",") if part.strip())
    if field_name == "divergence_threshold" and raw.lower() in ("", "none"):
        return None
    return raw


def _read_file(path: str) -> tuple[dict, dict]:
    with open(path, "rb") as f:
        data = f.read()
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as e:
        line = data[:e.start].count(b"\n") + 1
        raise ConfigError(f"not UTF-8 text: byte 0x{data[e.start]:02x}", line=line) from e

    parser = configparser.ConfigParser(
        interpolation         = None,
        comment_prefixes      = ("#", ";"),
        inline_comment_prefixes = ("#", ";"),
        strict                = True,
    )
    try:
        parser.read_string(text, source=path)
    except configparser.MissingSectionHeaderError as e:
        raise ConfigError("key outside any [section]", line=e.lineno) from e
    except configparser.ParsingError as e:
        line = e.errors[0][0] if e.errors else None
        raise ConfigError("cannot parse line", line=line) from e
    except (configparser.DuplicateSectionError, configparser.DuplicateOptionError) as e:
        raise ConfigError(e.message.split(":")[-1].strip(), line=e.lineno) from e

    lines = _line_numbers(text)
    raw   = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]", line=lines.get((section, None)))
        for key, value in parser.items(section):
            if key not in _SECTIONS[section]:
                raise ConfigError(f"unknown key '{key}' in [{section}]", line=lines.get((section, key)))
            raw.setdefault(section, {})[key] = value
    return raw, lines


def _assemble(raw: dict, lines: dict) -> RunConfig:
    fields = {"model": {}, "sim": {}, "oracle": {}}
    where  = {}
    for section, values in raw.items():
        for key, value in values.items():
            target, sub = _SECTIONS[section][key]
            if isinstance(value, str):
                value = _parse_value(sub or target, value)
            if sub is None:
                fields[target] = value
                where[(target,)] = (section, key)
            else:
                fields[target][sub] = value
                where[(target, sub)] = (section, key)

    try:
        return RunConfig(**fields)
    except ValidationError as e:
        error = e.errors()[0]
        loc   = tuple(str(part) for part in error["loc"])
        for depth in (2, 1):
            if loc[:depth] in where:
                section, key = where[loc[:depth]]
                raise ConfigError(
                    f"invalid value for '{key}' in [{section}]: {error['msg']}",
                    line=lines.get((section, key)),
                ) from e
        raise ConfigError(f"invalid configuration: {error['msg']} at {'.'.join(loc)}") from e


def check_config(config: RunConfig) -> list[str]:
    """Range checks plus the oracle cap; returns warnings or raises ConfigError."""
    report     = validate(config.model, config.sim)
    violations = list(report.violations)
    if config.runs_oracle and config.model.n_total > config.oracle.cap:
        violations.append(
            f"oracle mode needs n_total <= {config.oracle.cap}, got {config.model.n_total}"
        )
    if violations:
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(violations), violations=violations)
    return report.warnings


def load_config(path: Optional[str] = None, overrides: Optional[dict] = None, check: bool = True) -> RunConfig:
    """
    Read a config file (or start from defaults when path is None), apply
    overrides ({section: {key: value}}, the CLI flags) and validate.
    """
    raw, lines = _read_file(path) if path else ({}, {})

    for section, values in (overrides or {}).items():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        for key, value in values.items():
            if key not in _SECTIONS[section]:
                raise ConfigError(f"unknown key '{key}' in [{section}]")
            if value is not None:
                raw.setdefault(section, {})[key] = value
                lines.pop((section, key), None)

    config = _assemble(raw, lines)
    if check:
        check_config(config)
    return config


# ── WRITING ───────────────────────────────────────────────────────────────────

def _format_value(value) -> str:
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ", ".join(_format_value(v) for v in value)
    return str(value)


def render_config(config: RunConfig) -> str:
    """Config file text that load_config reads back to an equal RunConfig."""
    out = []
    for section, keys in _SECTIONS.items():
        out.append(f"[{section}]")
        for key, (target, sub) in keys.items():
            value = getattr(config, target)
            if sub is not None:
                value = getattr(value, sub)
            if value is None:
                continue
            out.append(f"{key} = {_format_value(value)}")
        out.append("")
    return "\n".join(out)


def write_config(config: RunConfig, path: str) -> str:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(render_config(config))
    return path
