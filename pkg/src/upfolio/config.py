"""Experiment configuration files.

Flat INI-style text, one file per scenario: sections with key = value pairs.
Every key is declared in a per-scenario schema with a type and either a
default or a required marker; unknown sections or keys are rejected so a
typo cannot silently fall back to a default. The raw file bytes are hashed
into the run manifest.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError

_REQUIRED = object()


def _parse_int(text: str) -> int:
    try:
        return int(text)
    except ValueError as exc:
        raise ConfigError(f"expected integer, got {text!r}") from exc


def _parse_pos_int(text: str) -> int:
    value = _parse_int(text)
    if value < 1:
        raise ConfigError(f"expected positive integer, got {value}")
    return value


def _parse_float(text: str) -> float:
    try:
        return float(text)
    except ValueError as exc:
        raise ConfigError(f"expected number, got {text!r}") from exc


def _parse_pos_float(text: str) -> float:
    value = _parse_float(text)
    if not (value > 0) or not np.isfinite(value):
        raise ConfigError(f"expected positive number, got {text!r}")
    return value


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"expected boolean, got {text!r}")


def _parse_int_list(text: str) -> list[int]:
    items = [_parse_pos_int(tok) for tok in text.replace(",", " ").split()]
    if not items:
        raise ConfigError("expected at least one integer")
    return items


def _parse_matrix(text: str) -> np.ndarray:
    rows = [row.strip() for row in text.split(";") if row.strip()]
    try:
        matrix = np.array([[float(tok) for tok in row.split()] for row in rows])
    except ValueError as exc:
        raise ConfigError(f"malformed matrix {text!r}") from exc
    if matrix.ndim != 2:
        raise ConfigError(f"ragged matrix {text!r}")
    return matrix


def _choice(*options):
    def parse(text: str) -> str:
        if text not in options:
            raise ConfigError(f"expected one of {options}, got {text!r}")
        return text
    return parse


# Schema: scenario -> section -> key -> (parser, default-or-required)
SCHEMAS: dict[str, dict[str, dict[str, tuple]]] = {
    "counterexample": {
        "scenario": {"name": (_choice("counterexample"), _REQUIRED)},
        "run": {"seed": (_parse_int, 0)},
        "market": {"delta": (_parse_pos_float, _REQUIRED),
                   "horizon": (_parse_pos_int, _REQUIRED)},
        "check": {"tolerance": (_parse_pos_float, 1e-6)},
    },
    "universality": {
        "scenario": {"name": (_choice("universality"), _REQUIRED)},
        "run": {"seed": (_parse_int, 0)},
        "market": {"kind": (_choice("markov_grid"), "markov_grid"),
                   "states": (_parse_matrix, _REQUIRED),
                   "transition": (_parse_matrix, _REQUIRED),
                   "start": (_parse_int, 0),
                   "horizon": (_parse_pos_int, _REQUIRED)},
        "family": {"kind": (_choice("fgp_dense", "constant_cloud", "market_only"), _REQUIRED),
                   "size": (_parse_pos_int, 1)},
        "check": {"horizons": (_parse_int_list, None),
                  "tolerance": (_parse_pos_float, 0.01),
                  "regret_slope_max": (_parse_pos_float, None),
                  "regret_fit_min": (_parse_pos_int, 100)},
    },
    "ldp": {
        "scenario": {"name": (_choice("ldp"), _REQUIRED)},
        "run": {"seed": (_parse_int, 0)},
        "market": {"kind": (_choice("alternating_gap", "markov_grid", "counterexample"),
                            _REQUIRED),
                   "gap": (_parse_pos_float, None),
                   "delta": (_parse_pos_float, None),
                   "states": (_parse_matrix, None),
                   "transition": (_parse_matrix, None),
                   "start": (_parse_int, 0),
                   "horizon": (_parse_pos_int, _REQUIRED)},
        "family": {"kind": (_choice("balanced_vs_market", "fgp_dense", "cylinders"),
                            _REQUIRED),
                   "size": (_parse_pos_int, 20),
                   "count": (_parse_pos_int, 10),
                   "coords": (_parse_pos_int, 5)},
        "check": {"epsilon": (_parse_pos_float, 0.025),
                  "tolerance": (_parse_pos_float, 0.005),
                  "horizons": (_parse_int_list, _REQUIRED)},
    },
    "fgp_verify": {
        "scenario": {"name": (_choice("fgp_verify"), _REQUIRED)},
        "run": {"seed": (_parse_int, 0)},
        "family": {"size": (_parse_pos_int, 100),
                   "dim": (_parse_pos_int, 2)},
        "check": {"samples": (_parse_pos_int, 1000),
                  "slack_tolerance": (_parse_pos_float, 1e-10),
                  "identity_tolerance": (_parse_pos_float, 1e-10),
                  "inject_violation": (_parse_bool, False)},
        "matrix": {"prior_sizes": (_parse_int_list, [1, 5, 50]),
                   "path_horizon": (_parse_pos_int, 300),
                   "path_count": (_parse_pos_int, 2)},
    },
}


@dataclass
class ExperimentConfig:
    """Validated scenario parameters plus the hash of the source text."""

    scenario: str
    values: dict = field(default_factory=dict)
    sha256: str = ""
    seed: int = 0

    def get(self, section: str, key: str):
        return self.values[(section, key)]


def load_config(path, scenario: str, *, seed_override: int | None = None) -> ExperimentConfig:
    """Parse and validate a config file against the scenario's schema."""
    if scenario not in SCHEMAS:
        raise ConfigError(f"unknown scenario {scenario!r}")
    schema = SCHEMAS[scenario]
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(raw.decode("utf-8"))
    except (configparser.Error, UnicodeDecodeError) as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc

    values: dict = {}
    for section in parser.sections():
        if section not in schema:
            raise ConfigError(f"unknown section [{section}]")
        for key, text in parser.items(section):
            if key not in schema[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            parse, _ = schema[section][key]
            try:
                values[(section, key)] = parse(text)
            except ConfigError as exc:
                raise ConfigError(f"[{section}] {key}: {exc}") from exc
    for section, keys in schema.items():
        for key, (_, default) in keys.items():
            if (section, key) in values:
                continue
            if default is _REQUIRED:
                raise ConfigError(f"missing required key {key!r} in section [{section}]")
            values[(section, key)] = default

    name = values[("scenario", "name")]
    if name != scenario:
        raise ConfigError(f"config is for scenario {name!r}, not {scenario!r}")
    seed = values[("run", "seed")] if seed_override is None else int(seed_override)
    return ExperimentConfig(scenario=scenario, values=values,
                            sha256=hashlib.sha256(raw).hexdigest(), seed=seed)
