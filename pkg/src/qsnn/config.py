"""Run configuration: defaults, named profiles, INI files and manifests.

Config files use INI sections. Keys follow the symbols of the model where
one exists::

    [data]
    dataset = mnist
    n_train = 10000

    [network]
    hidden = 500
    g_B = 0.6
    g_L = 0.05
    tau_L = 10
    r_max = 250

    [training]
    epochs = 20
    eta = 0.001
    batch_size = 1

    [encoding]
    tau = 4
    T = 50
    T_sp = 20
    measurement = exact

    [teaching]
    r_B = 1
    E_E = 8
    E_I = -8

    [aggregation]
    invert = per_pixel
    flip = mean
    awgn = median

Resolution order, lowest to highest: built-in defaults, the ``--profile``
preset, the config file, explicit command-line flags.
"""

from __future__ import annotations

import configparser
import dataclasses
import json
import platform
import sys
from dataclasses import dataclass, fields
from pathlib import Path

from .encoder import AGGREGATION_MODES, EncodeConfig


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


@dataclass(frozen=True)
class RunConfig:
    # data
    dataset: str = "mnist"
    data_dir: str = ""
    n_train: int = 0  # 0 means the whole split
    n_test: int = 0
    # network
    hidden: int = 500
    g_B: float = 0.6
    g_L: float = 0.05
    tau_L: float = 10.0
    r_max: float = 250.0
    # training
    epochs: int = 20
    eta: float = 0.001
    batch_size: int = 1
    seed: int = 0
    reencode: bool = True
    # encoding
    tau: float = 4.0
    T: float = 50.0
    T_sp: float = 20.0
    dt: float = 1.0
    measurement: str = "exact"
    shots: int = 100
    phase_median_scale: float = 1.0
    # teaching current
    r_B: float = 1.0
    E_E: float = 8.0
    E_I: float = -8.0
    # phase aggregation per noise kind
    agg_invert: str = "per_pixel"
    agg_flip: str = "mean"
    agg_awgn: str = "median"
    # fully connected baseline
    baseline_hidden: int = 500
    baseline_epochs: int = 20
    baseline_batch_size: int = 32
    # execution
    threads: int = 1
    profile: str = "paper"

    def __post_init__(self):
        problems = []
        if self.dataset not in ("mnist", "fashion"):
            problems.append(f"dataset must be mnist or fashion, got {self.dataset!r}")
        for name in ("n_train", "n_test", "epochs", "baseline_epochs"):
            if getattr(self, name) < 0:
                problems.append(f"{name} must be >= 0")
        for name in ("hidden", "batch_size", "shots", "threads", "baseline_hidden", "baseline_batch_size"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be >= 1")
        for name in ("g_B", "g_L", "tau_L", "r_max", "eta", "tau", "T", "dt", "r_B"):
            if not getattr(self, name) > 0:
                problems.append(f"{name} must be positive")
        if not 0 < self.T_sp <= self.T:
            problems.append("T_sp must lie in (0, T]")
        if self.measurement not in ("exact", "sampled"):
            problems.append("measurement must be exact or sampled")
        for kind in ("invert", "flip", "awgn"):
            mode = getattr(self, f"agg_{kind}")
            if mode not in AGGREGATION_MODES:
                problems.append(f"aggregation for {kind} must be one of {AGGREGATION_MODES}")
        if self.profile not in PROFILES:
            problems.append(f"profile must be one of {tuple(PROFILES)}")
        if not problems:
            try:
                self.encode_config()
            except ValueError as exc:
                problems.append(str(exc))
        if problems:
            raise ConfigError("; ".join(problems))

    def encode_config(self) -> EncodeConfig:
        return EncodeConfig(T=self.T, T_sp=self.T_sp, r_max=self.r_max, dt=self.dt,
                            measurement=self.measurement, shots=self.shots,
                            phase_median_scale=self.phase_median_scale)

    def aggregation(self, kind: str) -> str:
        return getattr(self, f"agg_{kind}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "RunConfig":
        return build(self.to_dict(), changes)


PROFILES = {
    "paper": {},
    "desk": {"n_train": 10000, "n_test": 2000, "hidden": 256, "epochs": 5},
}

# INI section of every key; keys in [aggregation] map onto agg_<kind>
SECTIONS = {
    "data": ("dataset", "data_dir", "n_train", "n_test"),
    "network": ("hidden", "g_B", "g_L", "tau_L", "r_max"),
    "training": ("epochs", "eta", "batch_size", "seed", "reencode"),
    "encoding": ("tau", "T", "T_sp", "dt", "measurement", "shots", "phase_median_scale"),
    "teaching": ("r_B", "E_E", "E_I"),
    "aggregation": ("invert", "flip", "awgn"),
    "baseline": ("hidden", "epochs", "batch_size"),
    "run": ("threads", "profile"),
}
_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _field_name(section: str, key: str) -> str:
    if section == "aggregation":
        return f"agg_{key}"
    if section == "baseline":
        return f"baseline_{key}"
    return key


def _coerce(name: str, value):
    kind = _TYPES[name]
    try:
        if kind == "bool":
            if isinstance(value, bool):
                return value
            text = str(value).strip().lower()
            if text in ("1", "true", "yes", "on"):
                return True
            if text in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if kind == "int":
            as_float = float(value)
            if as_float != int(as_float):
                raise ValueError(value)
            return int(as_float)
        if kind == "float":
            return float(value)
        return str(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: cannot read {value!r} as {kind}") from exc


def build(*layers: dict) -> RunConfig:
    """Merge dicts left to right over the defaults and validate."""
    merged = {}
    for layer in layers:
        for name, value in layer.items():
            if name not in _TYPES:
                raise ConfigError(f"unknown config key {name!r}")
            if value is not None:
                merged[name] = _coerce(name, value)
    return RunConfig(**merged)


def read_ini(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keep g_B, T_sp as written
    try:
        parser.read_string(path.read_text())
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    out = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"{path}: unknown section [{section}]")
        for key, value in parser.items(section):
            if key not in SECTIONS[section]:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
            out[_field_name(section, key)] = value
    return out


def resolve(profile: str | None = None, config_path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults < profile preset < config file < overrides (``None`` values skipped)."""
    file_layer = read_ini(config_path) if config_path else {}
    name = profile or file_layer.get("profile") or "paper"
    if name not in PROFILES:
        raise ConfigError(f"unknown profile {name!r}")
    return build(PROFILES[name], {"profile": name}, file_layer, overrides or {})


def write_ini(cfg: RunConfig, path) -> None:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    values = cfg.to_dict()
    for section, keys in SECTIONS.items():
        parser[section] = {k: str(values[_field_name(section, k)]) for k in keys}
    with Path(path).open("w") as fh:
        parser.write(fh)


# --------------------------------------------------------------------------
# manifests
# --------------------------------------------------------------------------

def manifest_name(command: str) -> str:
    return f"manifest_{command.replace('-', '_')}.json"


def versions() -> dict:
    import numpy
    import scipy

    from . import __version__, _accel

    out = {"qsnn": __version__, "python": platform.python_version(), "numpy": numpy.__version__,
           "scipy": scipy.__version__, "backend": _accel.backend_name()}
    try:
        import numba

        out["numba"] = numba.__version__
    except ImportError:  # pragma: no cover
        out["numba"] = None
    return out


def write_manifest(out_dir, command: str, cfg: RunConfig, args: dict, outputs) -> Path:
    path = Path(out_dir) / manifest_name(command)
    doc = {"command": command, "seed": cfg.seed, "config": cfg.to_dict(), "args": args,
           "outputs": sorted(str(o) for o in outputs), "versions": versions(),
           "argv": list(sys.argv[1:])}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def read_manifest(path, command: str | None = None) -> dict:
    """Load a manifest file, or the one ``command`` left in a directory."""
    path = Path(path)
    if path.is_dir():
        if command is None:
            raise ConfigError(f"{path} is a directory; name the manifest file")
        path = path / manifest_name(command)
    if not path.is_file():
        raise ConfigError(f"manifest not found: {path}")
    try:
        doc = json.loads(path.read_text())
        doc["config"] = build(doc["config"])
        doc.setdefault("args", {})
        return doc
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"{path}: unreadable manifest ({exc})") from exc
