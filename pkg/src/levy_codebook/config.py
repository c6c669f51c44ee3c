"""Run configuration: JSON schema, line-anchored error messages and model builders."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from .codebook import GridSpec
from .errors import ConfigError, LevyCodebookError
from .levy import JumpSpec, pi_exponent, subordinator_exponent
from .models import (BnsParams, affine_blocks, bns_blocks, bns_phi, bns_violation_blocks,
                     pii_blocks)

__all__ = ["RunConfig", "load_config", "parse_config", "SCHEMA"]

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}

_JUMPS = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["none", "compound-poisson-exp", "compound-poisson-discrete", "gamma"]},
        "rate": {"type": "number", "minimum": 0},
        "theta": _POS,
        "shape": _POS,
        "atoms": {"type": "array", "items": {"type": "array", "items": _NUM,
                                             "minItems": 2, "maxItems": 2}},
    },
}

_EXPONENT = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "sigma": {"type": "number", "minimum": 0},
        "diffusion": {"type": "number", "minimum": 0},
        "jumps": {"oneOf": [_JUMPS, {"type": "array", "items": _JUMPS}]},
    },
    "not": {"required": ["sigma", "diffusion"]},
}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["model"],
    "properties": {
        "model": {"enum": ["bs", "pii", "affine", "bns"]},
        "sigma": _POS,
        "lambda": _POS,
        "delta": {"type": "number", "maximum": 0},
        "eta": _JUMPS,
        "psiL": _EXPONENT,
        "x0": _NUM,
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "required": ["t_max", "dT", "u_max", "du"],
            "properties": {"t_max": _POS, "dT": _POS, "u_max": _POS, "du": _POS},
        },
        "spot": _POS,
        "strikes": {"oneOf": [
            {"type": "array", "items": _POS, "minItems": 1},
            {"type": "object", "additionalProperties": False, "required": ["min", "max", "count"],
             "properties": {"min": _POS, "max": _POS, "count": {"type": "integer", "minimum": 1}}},
        ]},
        "maturities": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
        "pricing": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"x_step": _POS, "du": _POS, "alpha": {"type": "number",
                                                                 "exclusiveMinimum": 0,
                                                                 "exclusiveMaximum": 1}},
        },
        "evolve": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "horizon": _POS,
                "picard_dt": _POS,
                "event_dt": _POS,
                "tol": _POS,
                "max_iter": {"type": "integer", "minimum": 1},
                "checkpoints": {"type": "array", "items": {"type": "number", "minimum": 0}},
                "agreement_tol": _POS,
            },
        },
        "mc": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "paths": {"type": "integer", "minimum": 2},
                # calls are checked at a quarter, half and all of the horizon
                "steps": {"type": "integer", "minimum": 4, "multipleOf": 4},
                "horizon": _POS,
                "frequencies": {"type": "array", "items": _NUM},
                "k_se": _POS,
            },
        },
        "roundtrip": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"u_max": _POS, "du": _POS, "cf_floor": _POS, "x_max": _POS,
                           "x_step": _POS, "tol": _POS},
        },
        "checks": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"arbitrage_tol": _POS, "pi_tol": _POS, "tau_tol": _POS},
        },
        "surface": {"type": "string"},
        "violation": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
    },
}

_DEFAULT_GRID = {"t_max": 1.0, "dT": 0.05, "u_max": 40.0, "du": 0.05}


def _line_of(text, path):
    """Best-effort line number of the JSON element at ``path`` (1-based)."""
    lines = text.splitlines()
    line = 0
    for key in path:
        if isinstance(key, str):
            needle = json.dumps(key) + ":"
            for n in range(line, len(lines)):
                if needle in lines[n].replace('" :', '":'):
                    line = n
                    break
    return line + 1


def _exponent(d, name):
    if "sigma" in d:
        return pi_exponent(float(d["sigma"]) ** 2)
    jumps = d.get("jumps")
    if isinstance(jumps, dict):
        jumps = [jumps]
    jumps = tuple(JumpSpec.from_dict(j) for j in jumps) if jumps else None
    try:
        return pi_exponent(float(d.get("diffusion", 0.0)), jumps)
    except LevyCodebookError as e:
        raise ConfigError(f"{name}: {e}") from e


@dataclass
class RunConfig:
    """Validated configuration plus its source path (relative file names resolve against it)."""

    raw: dict
    source: Path | None = None
    text: str = field(default="", repr=False)

    def get(self, section, key, default):
        return self.raw.get(section, {}).get(key, default)

    @property
    def model(self):
        return self.raw["model"]

    @property
    def spot(self):
        return float(self.raw.get("spot", 1.0))

    @property
    def x0(self):
        return float(self.raw.get("x0", 0.0))

    def grid(self, scale_dt=1.0):
        g = dict(_DEFAULT_GRID, **self.raw.get("grid", {}))
        return GridSpec.uniform(g["t_max"], g["dT"] * scale_dt, g["u_max"], g["du"])

    def strikes(self):
        k = self.raw.get("strikes", {"min": 0.5, "max": 2.0, "count": 21})
        if isinstance(k, dict):
            return self.spot * np.linspace(k["min"], k["max"], k["count"])
        return self.spot * np.asarray(k, dtype=float)

    def maturities(self):
        if "maturities" in self.raw:
            return np.asarray(self.raw["maturities"], dtype=float)
        return self.grid().maturities

    def surface_path(self):
        p = Path(self.raw["surface"])
        if not p.is_absolute() and self.source is not None:
            p = self.source.parent / p
        return p

    def psiL(self):
        d = self.raw.get("psiL")
        if d is None:
            if self.model in ("bs", "pii"):
                return pi_exponent(self._require("sigma") ** 2)
            return pi_exponent(0.1 ** 2)
        return _exponent(d, "psiL")

    def _require(self, key):
        if key not in self.raw:
            raise ConfigError(f"model {self.model!r} requires {key!r}")
        return float(self.raw[key])

    def bns_params(self):
        eta = self.raw.get("eta")
        if eta is None:
            raise ConfigError(f"model {self.model!r} requires 'eta'")
        try:
            return BnsParams(self._require("lambda"), self._require("delta"),
                             subordinator_exponent(JumpSpec.from_dict(eta)), self.psiL(), self.x0)
        except ConfigError:
            raise
        except LevyCodebookError as e:
            raise ConfigError(str(e)) from e

    def blocks(self, grid=None):
        """Building blocks of the configured model on ``grid`` (default: config grid)."""
        grid = grid or self.grid()
        if self.model in ("bs", "pii"):
            return pii_blocks(self.psiL(), grid, self.x0)
        p = self.bns_params()
        if self.model == "affine":
            return affine_blocks(p.psiL, bns_phi, p.lam, p.eta, p.delta, grid, p.x0)
        if "violation" in self.raw:
            return bns_violation_blocks(p, grid, float(self.raw["violation"]))
        return bns_blocks(p, grid)


def parse_config(text, source=None):
    """Parse and validate JSON ``text``; every error is a :class:`ConfigError` naming a line."""
    where = str(source) if source is not None else "<config>"
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{where}:{e.lineno}:{e.colno}: {e.msg}") from e
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as e:
        path = list(e.absolute_path)
        if e.validator == "additionalProperties":
            # the offending key is in the message, not the path
            extra = [k for k in e.instance if k not in e.schema.get("properties", {})]
            path = path + extra[:1]
        loc = "/".join(str(p) for p in path) or "<root>"
        raise ConfigError(f"{where}:{_line_of(text, path)}: {loc}: {e.message}") from e
    return RunConfig(raw, Path(source) if source is not None else None, text)


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"{path}: {e.strerror}") from e
    return parse_config(text, path)
