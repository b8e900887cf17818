"""Experiment configuration (single JSON document)."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

KINDS = ("uc", "wae", "fl", "ucw", "ucl", "uc-large")

DEFAULTS: dict = {
    "data": {
        "path": None,
        "kind": "prices",
        "synth": {
            "assets": 6,
            "periods": 6798,
            "seed": 1,
            "regime": {"kind": "regime-switching"},
        },
    },
    "window": 20,
    "burn_in": 20,
    "alphas": [0.005, 1.0],
    "kinds": ["uc", "wae", "fl", "ucw", "ucl"],
    "fractions": {"ucw": [0.3, 0.5], "ucl": [0.3, 0.5]},
    "step_den": 2000,
    "large": {
        "partition": None,
        "masses": "uniform",
        "step_den": 20,
        "fractions": {"ucw": [], "ucl": []},
    },
    "solver_tol": 1e-10,
    "grid_cap": 5_000_000,
    "output_dir": "ensemblefolio-run",
    "seed": 0,
}


def _merge(base: dict, over: dict, path="") -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        if key not in base:
            raise ConfigError(f"unknown config key {path + key!r}")
        if isinstance(base[key], dict) and isinstance(val, dict):
            out[key] = _merge(base[key], val, path + key + ".")
        else:
            out[key] = val
    return out


def _fractions(raw, where) -> list[float]:
    if raw is None:
        return []
    vals = raw if isinstance(raw, list) else [raw]
    out = []
    for p in vals:
        try:
            p = float(p)
        except (TypeError, ValueError):
            raise ConfigError(f"{where}: support fraction {p!r} is not a number") from None
        if not 0 < p <= 1:
            raise ConfigError(f"{where}: support fraction must lie in (0, 1], got {p}")
        out.append(p)
    return out


def _positive_int(value, where) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ConfigError(f"{where} must be a positive integer, got {value!r}")
    return value


@dataclass
class ExperimentConfig:
    data: dict
    window: int
    burn_in: int
    alphas: list[float]
    kinds: list[str]
    fractions: dict[str, list[float]]
    step_den: int
    large: dict
    solver_tol: float
    grid_cap: int
    output_dir: str
    seed: int
    raw: dict = field(repr=False, default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        merged = _merge(DEFAULTS, d)
        # an explicit data path replaces the synthetic default
        if d.get("data", {}).get("path") and "synth" not in d.get("data", {}):
            merged["data"]["synth"] = None
        cfg = cls(**merged, raw=merged)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None

    def validate(self):
        self.window = _positive_int(self.window, "window")
        if self.window < 2:
            raise ConfigError("window must be >= 2")
        self.burn_in = _positive_int(self.burn_in, "burn_in")
        if self.burn_in < self.window:
            raise ConfigError(f"burn_in ({self.burn_in}) must be >= window ({self.window})")
        if not isinstance(self.alphas, list) or not self.alphas:
            raise ConfigError("alphas must be a non-empty list")
        try:
            self.alphas = [float(a) for a in self.alphas]
        except (TypeError, ValueError):
            raise ConfigError("alphas must be numbers") from None
        if any(not a >= 0 for a in self.alphas):
            raise ConfigError("risk aversions must be >= 0")
        if len(set(self.alphas)) != len(self.alphas):
            raise ConfigError("alphas must be distinct")
        if not isinstance(self.kinds, list) or not self.kinds:
            raise ConfigError("kinds must be a non-empty list")
        bad = [k for k in self.kinds if k not in KINDS]
        if bad:
            raise ConfigError(f"unknown ensemble kinds {bad}; choose from {list(KINDS)}")
        self.fractions = {k: _fractions(self.fractions.get(k), f"fractions.{k}") for k in ("ucw", "ucl")}
        for k in ("ucw", "ucl"):
            if k in self.kinds and not self.fractions[k]:
                raise ConfigError(f"kind {k!r} needs at least one entry in fractions.{k}")
        self.step_den = _positive_int(self.step_den, "step_den")
        self.grid_cap = _positive_int(self.grid_cap, "grid_cap")
        if not self.solver_tol > 0:
            raise ConfigError("solver_tol must be > 0")
        if "uc-large" in self.kinds:
            part = self.large.get("partition")
            if not part or not isinstance(part, list) or not all(isinstance(s, list) for s in part):
                raise ConfigError("uc-large needs large.partition as a list of member index lists")
            _positive_int(self.large.get("step_den"), "large.step_den")
            self.large["fractions"] = {k: _fractions((self.large.get("fractions") or {}).get(k), f"large.fractions.{k}")
                                       for k in ("ucw", "ucl")}
            masses = self.large.get("masses", "uniform")
            if masses != "uniform" and not isinstance(masses, list):
                raise ConfigError("large.masses must be 'uniform' or a list of per-set mass lists")
        data = self.data
        if not data.get("path") and not data.get("synth"):
            raise ConfigError("data needs either a path or a synth block")
        if data.get("kind") not in ("prices", "returns"):
            raise ConfigError("data.kind must be 'prices' or 'returns'")

    def to_dict(self) -> dict:
        return {
            "data": self.data, "window": self.window, "burn_in": self.burn_in, "alphas": self.alphas,
            "kinds": self.kinds, "fractions": self.fractions, "step_den": self.step_den,
            "large": self.large, "solver_tol": self.solver_tol, "grid_cap": self.grid_cap,
            "output_dir": self.output_dir, "seed": self.seed,
        }

    def digest(self) -> str:
        """Hash of the settings that affect results (output_dir excluded)."""
        d = self.to_dict()
        d.pop("output_dir")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def default_config_json() -> str:
    return json.dumps(DEFAULTS, indent=2)
