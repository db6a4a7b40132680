"""Run configuration and manifest.

Configs are plain JSON.  Every field has a default, CLI flags override file
values, and validation happens once at load.  Schema (all keys optional):

{
  "grid":         {"length": 120.0, "modes": 1024, "depth": 1.0, "gravity": 1.0},
  "solver":       {"newton_tol": 1e-11, "tail_tol": 1e-10, "dealias": "2/3"},
  "continuation": {"start_froude": 1.05, "target_alpha": 0.802,
                   "target_omega": null, "ds0": 0.02, "ds_min": 1e-6,
                   "ds_max": 0.05, "ds_max_dense": 0.004,
                   "dense_from_alpha": 0.70,
                   "schedule": [[0.0, 120.0, 1024], [0.32, 70.0, 4096],
                                [0.58, 66.0, 8192]],
                   "m_max": 8192, "decay_target": 1e-9, "decay_abort": 5e-2},
  "stability":    {"rate0_factor": 0.1, "rate_levels": 7,
                   "count_modes": 1024, "eig_modes": 2048, "scan_points": 12,
                   "rate_lo_factor": 2e-3, "rate_hi_factor": 10.0,
                   "refine_full": false},
  "verify":       {"length": 70.0, "modes": 2048, "alpha": 0.30,
                   "random_draws": 100},
  "output_dir": "out",
  "workers": 1,
  "seed": 12345,
  "fault_injection": null
}

``fault_injection`` is a test hook ("flip_pressure_sign" is the only
recognized value) used to prove the verification suite detects broken
assembly.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
import time
from dataclasses import dataclass, field

from .branch import GridPolicy, StepControl
from .errors import ConfigError

DEFAULTS = {
    "grid": {"length": 120.0, "modes": 1024, "depth": 1.0, "gravity": 1.0},
    "solver": {"newton_tol": 1e-11, "tail_tol": 1e-10, "dealias": "2/3"},
    "continuation": {
        "start_froude": 1.05,
        "target_alpha": 0.802,
        "target_omega": None,
        "ds0": 0.02,
        "ds_min": 1e-6,
        "ds_max": 0.05,
        "ds_max_dense": 0.004,
        "dense_from_alpha": 0.70,
        "schedule": [[0.0, 120.0, 1024], [0.32, 70.0, 4096],
                     [0.58, 66.0, 8192]],
        "m_max": 8192,
        "decay_target": 1e-9,
        "decay_abort": 5e-2,
    },
    "stability": {
        "rate0_factor": 0.1,
        "rate_levels": 7,
        "count_modes": 1024,
        "eig_modes": 2048,
        "scan_points": 12,
        "rate_lo_factor": 2e-3,
        "rate_hi_factor": 10.0,
        "refine_full": False,
    },
    "verify": {"length": 70.0, "modes": 2048, "alpha": 0.30,
               "random_draws": 100},
    "output_dir": "out",
    "workers": 1,
    "seed": 12345,
    "fault_injection": None,
}


@dataclass
class RunConfig:
    data: dict

    def __getitem__(self, key):
        return self.data[key]

    def section(self, name: str) -> dict:
        return self.data[name]

    def step_control(self) -> StepControl:
        c = self.data["continuation"]
        s = self.data["solver"]
        return StepControl(ds0=c["ds0"], ds_min=c["ds_min"], ds_max=c["ds_max"],
                           ds_max_dense=c["ds_max_dense"],
                           dense_from_alpha=c["dense_from_alpha"],
                           newton_tol=s["newton_tol"])

    def grid_policy(self) -> GridPolicy:
        c = self.data["continuation"]
        g = self.data["grid"]
        schedule = tuple((float(a), float(l), int(m)) for a, l, m in c["schedule"])
        return GridPolicy(schedule=schedule, m_max=c["m_max"],
                          tail_tol=self.data["solver"]["tail_tol"],
                          decay_target=c["decay_target"],
                          decay_abort=c["decay_abort"],
                          depth=g["depth"], gravity=g["gravity"])

    def target(self) -> dict:
        c = self.data["continuation"]
        if c.get("target_omega") is not None:
            return {"omega": float(c["target_omega"])}
        return {"alpha": float(c["target_alpha"])}

    def digest(self) -> str:
        return hashlib.sha256(
            json.dumps(self.data, sort_keys=True).encode()).hexdigest()[:16]


def _merge(base: dict, override: dict, path="") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in base:
            raise ConfigError(f"unknown config key {path + key!r}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = _merge(base[key], value, path + key + ".")
        else:
            out[key] = value
    return out


def _validate(data: dict) -> None:
    grid = data["grid"]
    modes = grid["modes"]
    if modes & (modes - 1) != 0 or modes < 64:
        raise ConfigError(f"grid.modes must be a power of two >= 64, got {modes}")
    if grid["length"] < 40.0 * grid["depth"]:
        raise ConfigError("grid.length must be at least 40 depths")
    for name in ("newton_tol", "tail_tol"):
        if data["solver"][name] <= 0:
            raise ConfigError(f"solver.{name} must be positive")
    for _, length, m in data["continuation"]["schedule"]:
        if m & (m - 1) != 0:
            raise ConfigError("schedule mode counts must be powers of two")
        if length < 40.0 * grid["depth"]:
            raise ConfigError("schedule periods must be at least 40 depths")
    if data["continuation"]["ds_min"] <= 0:
        raise ConfigError("continuation.ds_min must be positive")
    if data["workers"] < 1:
        raise ConfigError("workers must be >= 1")
    fault = data["fault_injection"]
    if fault not in (None, "flip_pressure_sign"):
        raise ConfigError(f"unknown fault_injection {fault!r}")


def load_config(path: str | None = None, overrides: dict | None = None) -> RunConfig:
    data = copy.deepcopy(DEFAULTS)
    if path is not None:
        with open(path) as fh:
            try:
                file_data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file {path} is not valid JSON: {exc}")
        data = _merge(data, file_data)
    if overrides:
        data = _merge(data, overrides)
    _validate(data)
    return RunConfig(data)


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------

def file_digest(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class Manifest:
    config: dict
    command: str
    artifact_version: str = "0.1.0"
    timings: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    _clock: dict = field(default_factory=dict)

    def start(self, name: str) -> None:
        self._clock[name] = time.perf_counter()

    def stop(self, name: str) -> None:
        self.timings[name] = time.perf_counter() - self._clock.pop(name)

    def add_input(self, path: str) -> None:
        self.inputs[os.path.basename(path)] = file_digest(path)

    def add_output(self, path: str) -> None:
        self.outputs[os.path.basename(path)] = file_digest(path)

    def write(self, path: str) -> None:
        doc = {"artifact_version": self.artifact_version,
               "command": self.command,
               "config": self.config,
               "timings_seconds": self.timings,
               "inputs": self.inputs,
               "outputs": self.outputs}
        with open(path, "w") as fh:
            json.dump(doc, fh, sort_keys=True, indent=1)
            fh.write("\n")
