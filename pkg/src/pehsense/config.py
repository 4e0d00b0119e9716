"""Experiment configuration: TOML with unit-suffixed keys.

Every section maps to a dataclass. Loading rejects unknown keys and wrong
types with a dotted path to the offending field, so ``devices.custom[2].damping_ratio``
rather than a bare ``ValueError``.
"""
from __future__ import annotations

import dataclasses
import hashlib
import sys
import typing
from dataclasses import dataclass, field
from pathlib import Path

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .harvester import HarvesterDesign, default_device_bank
from .ml import DEFAULT_HYPERPARAMS, KINDS
from .seh import SEHParams
from .stiefel import OVERLAP, PAD


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


SYNTHETIC, MAT, CSV = "synthetic", "mat", "csv"


@dataclass
class LabeledFile:
    file: str = ""
    label: int = 0


@dataclass
class ExperimentSection:
    name: str = "study"
    seed: int = 0
    jobs: int = 1
    output_dir: str = "out"


@dataclass
class DataSection:
    source: str = SYNTHETIC
    sample_rate_Hz: float = 12000.0
    duration_s: float = 10.0  # per label, after truncation
    # synthetic source
    noise_rms_ms2: float = 0.5
    healthy_extra_s: float = 30.0  # surplus healthy recording kept for anomaly fitting
    # mat / csv sources
    directory: str = ""
    variable_pattern: str = "_DE_time$"
    files: list = field(default_factory=list)  # of LabeledFile


@dataclass
class CustomDevice:
    name: str = ""
    natural_frequency_Hz: float = 0.0
    damping_ratio: float = 0.02
    coupling_squared: float = 0.005
    piezo_capacitance_nF: float = 100.0
    load_resistance_kOhm: float = 10.0


@dataclass
class DevicesSection:
    names: list = field(default_factory=list)  # subset of the bank; empty keeps all
    custom: list = field(default_factory=list)  # of CustomDevice; replaces the default bank


@dataclass
class CircuitSection:
    kinds: list = field(default_factory=lambda: ["resistive"])
    capacitance_uF: list = field(default_factory=lambda: [10.0])
    diode_drop_V: float = 0.3
    on_resistance_Ohm: float = 1.0
    rated_voltage_V: float = 25.0
    time_points_s: list = field(default_factory=list)  # empty: end of each window


@dataclass
class StudySection:
    window_s: list = field(default_factory=lambda: [0.1, 0.3])
    device_sets: list = field(default_factory=list)  # lists of names; empty: each device alone
    classifiers: list = field(default_factory=lambda: ["knn"])
    k_folds: int = 5
    beta_sweep: list = field(default_factory=list)
    hyperparams: dict = field(default_factory=dict)


@dataclass
class AugmentationSection:
    beta: float = 0.1
    m: int = 150
    n: int = 100
    pad_or_overlap: str = PAD
    signal_s: float = 1.0
    seed_signals_per_label: int = 5
    test_signals_per_label: int = 5
    count_per_label: int = 30
    rng_seed: int = 0


@dataclass
class AnomalySection:
    enabled: bool = False
    healthy_label: int = 7
    device: str = "Device 3"
    window_s: float = 0.3
    fit_events: int = 100
    z_threshold: float = 3.0


@dataclass
class ExperimentConfig:
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    data: DataSection = field(default_factory=DataSection)
    devices: DevicesSection = field(default_factory=DevicesSection)
    circuit: CircuitSection = field(default_factory=CircuitSection)
    study: StudySection = field(default_factory=StudySection)
    augmentation: AugmentationSection = field(default_factory=AugmentationSection)
    anomaly: AnomalySection = field(default_factory=AnomalySection)
    base_dir: Path = field(default=Path("."), compare=False, repr=False)

    # --- derived objects -------------------------------------------------

    def device_bank(self) -> list:
        if self.devices.custom:
            bank = [HarvesterDesign.single_mode(
                d.name, d.natural_frequency_Hz, d.damping_ratio,
                C_p=d.piezo_capacitance_nF * 1e-9, R_l=d.load_resistance_kOhm * 1e3,
                coupling_squared=d.coupling_squared) for d in self.devices.custom]
        else:
            bank = default_device_bank()
        if self.devices.names:
            by_name = {d.name: d for d in bank}
            bank = [by_name[n] for n in self.devices.names]
        return bank

    def device_sets(self) -> list:
        if self.study.device_sets:
            return [list(s) for s in self.study.device_sets]
        return [[d.name] for d in self.device_bank()]

    def seh_params(self, capacitance_uF: float) -> SEHParams:
        c = self.circuit
        return SEHParams(capacitance_uF * 1e-6, c.diode_drop_V, c.on_resistance_Ohm, c.rated_voltage_V)

    def hyperparams(self, kind: str) -> dict:
        hp = dict(DEFAULT_HYPERPARAMS[kind])
        hp.update(self.study.hyperparams.get(kind, {}))
        return hp

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    def output_dir(self) -> Path:
        return self.resolve(self.experiment.output_dir)

    # --- serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            if f.name == "base_dir":
                continue
            out[f.name] = _to_plain(getattr(self, f.name))
        return out

    def dumps(self) -> str:
        return tomli_w.dumps(self.to_dict())

    def digest(self) -> str:
        # worker count does not change results, so it stays out of the digest
        d = self.to_dict()
        d["experiment"].pop("jobs")
        return hashlib.sha256(tomli_w.dumps(d).encode()).hexdigest()[:16]


def _to_plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, list):
        return [_to_plain(x) for x in obj]
    if isinstance(obj, dict):
        return {k: _to_plain(v) for k, v in obj.items()}
    return obj


# element type of list fields that hold tables
_LIST_ITEM = {
    (DataSection, "files"): LabeledFile,
    (DevicesSection, "custom"): CustomDevice,
}


def _coerce(value, typ, path):
    if typ is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected true/false, got {value!r}")
        return value
    if typ is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if typ is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if typ is str:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    raise TypeError(typ)


def _build(cls, raw, path):
    if not isinstance(raw, dict):
        raise ConfigError(path, "expected a table")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for key in raw:
        if key not in names or key == "base_dir":
            raise ConfigError(f"{path}.{key}" if path else key, "unknown key")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in raw:
            continue
        sub = f"{path}.{f.name}" if path else f.name
        typ = hints[f.name]
        val = raw[f.name]
        if dataclasses.is_dataclass(typ):
            kwargs[f.name] = _build(typ, val, sub)
        elif typ is list:
            if not isinstance(val, list):
                raise ConfigError(sub, f"expected an array, got {val!r}")
            item = _LIST_ITEM.get((cls, f.name))
            kwargs[f.name] = [_build(item, v, f"{sub}[{i}]") for i, v in enumerate(val)] if item else list(val)
        elif typ is dict:
            if not isinstance(val, dict):
                raise ConfigError(sub, "expected a table")
            kwargs[f.name] = val
        else:
            kwargs[f.name] = _coerce(val, typ, sub)
    return cls(**kwargs)


def _numbers(values, path, lo=0.0, strict=True):
    for i, v in enumerate(values):
        p = f"{path}[{i}]"
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(p, f"expected a number, got {v!r}")
        if (strict and not v > lo) or (not strict and not v >= lo):
            raise ConfigError(p, f"must be {'>' if strict else '>='} {lo:g}, got {v!r}")
    return [float(v) for v in values]


def validate(cfg: ExperimentConfig, check_files: bool = True) -> ExperimentConfig:
    """Apply module invariants; raises ConfigError naming the first bad field."""
    e, d, c, s, a, an = cfg.experiment, cfg.data, cfg.circuit, cfg.study, cfg.augmentation, cfg.anomaly
    if e.jobs < 1:
        raise ConfigError("experiment.jobs", "must be >= 1")
    if e.seed < 0:
        raise ConfigError("experiment.seed", "must be >= 0")
    if d.source not in (SYNTHETIC, MAT, CSV):
        raise ConfigError("data.source", f"must be one of synthetic, mat, csv; got {d.source!r}")
    if not d.sample_rate_Hz > 0:
        raise ConfigError("data.sample_rate_Hz", "must be > 0")
    if not d.duration_s > 0:
        raise ConfigError("data.duration_s", "must be > 0")
    if d.noise_rms_ms2 < 0:
        raise ConfigError("data.noise_rms_ms2", "must be >= 0")
    if d.healthy_extra_s < 0:
        raise ConfigError("data.healthy_extra_s", "must be >= 0")
    if d.source in (MAT, CSV):
        if not d.files:
            raise ConfigError("data.files", f"{d.source} source needs at least one labeled file")
        root = cfg.resolve(d.directory)
        if check_files and not root.is_dir():
            raise ConfigError("data.directory", f"directory {str(root)!r} does not exist")
        for i, lf in enumerate(d.files):
            if not 1 <= lf.label <= 10:
                raise ConfigError(f"data.files[{i}].label", f"must lie in 1..10, got {lf.label}")
            if check_files and not (root / lf.file).is_file():
                raise ConfigError(f"data.files[{i}].file", f"file {str(root / lf.file)!r} does not exist")
    for i, dev in enumerate(cfg.devices.custom):
        p = f"devices.custom[{i}]"
        if not dev.name:
            raise ConfigError(f"{p}.name", "must not be empty")
        for key in ("natural_frequency_Hz", "piezo_capacitance_nF", "load_resistance_kOhm", "coupling_squared"):
            if not getattr(dev, key) > 0:
                raise ConfigError(f"{p}.{key}", "must be > 0")
        if not 0 < dev.damping_ratio < 1:
            raise ConfigError(f"{p}.damping_ratio", "must lie in (0, 1)")
    bank_names = [x.name for x in (cfg.devices.custom or default_device_bank())]
    if len(set(bank_names)) != len(bank_names):
        raise ConfigError("devices.custom", "device names must be unique")
    for i, n in enumerate(cfg.devices.names):
        if n not in bank_names:
            raise ConfigError(f"devices.names[{i}]", f"unknown device {n!r}")
    available = cfg.devices.names or bank_names
    if not available:
        raise ConfigError("devices.names", "device set is empty")
    for k in c.kinds:
        if k not in ("resistive", "seh"):
            raise ConfigError("circuit.kinds", f"unknown circuit {k!r}")
    if not c.kinds:
        raise ConfigError("circuit.kinds", "at least one circuit is required")
    _numbers(c.capacitance_uF, "circuit.capacitance_uF")
    if "seh" in c.kinds and not c.capacitance_uF:
        raise ConfigError("circuit.capacitance_uF", "SEH circuit needs at least one capacitance")
    for key in ("on_resistance_Ohm", "rated_voltage_V"):
        if not getattr(c, key) > 0:
            raise ConfigError(f"circuit.{key}", "must be > 0")
    if c.diode_drop_V < 0:
        raise ConfigError("circuit.diode_drop_V", "must be >= 0")
    tps = _numbers(c.time_points_s, "circuit.time_points_s")
    windows = _numbers(s.window_s, "study.window_s")
    if not windows:
        raise ConfigError("study.window_s", "at least one window is required")
    for i, w in enumerate(windows):
        if w > d.duration_s:
            raise ConfigError(f"study.window_s[{i}]", f"window {w} s exceeds data duration {d.duration_s} s")
        if "seh" in c.kinds and any(tp > w + 1e-12 for tp in tps):
            raise ConfigError("circuit.time_points_s", f"time points must lie in (0, {w:g}] for window {w:g} s")
    for i, ds in enumerate(s.device_sets):
        p = f"study.device_sets[{i}]"
        if not isinstance(ds, list) or not ds:
            raise ConfigError(p, "device set is empty")
        for j, n in enumerate(ds):
            if n not in available:
                raise ConfigError(f"{p}[{j}]", f"unknown device {n!r}")
    if not s.classifiers:
        raise ConfigError("study.classifiers", "at least one classifier is required")
    for i, k in enumerate(s.classifiers):
        if k not in KINDS:
            raise ConfigError(f"study.classifiers[{i}]", f"unknown classifier {k!r}; choose from {', '.join(KINDS)}")
    for k, hp in s.hyperparams.items():
        if k not in KINDS:
            raise ConfigError(f"study.hyperparams.{k}", "unknown classifier")
        for key in hp:
            if key not in DEFAULT_HYPERPARAMS[k]:
                raise ConfigError(f"study.hyperparams.{k}.{key}", "unknown hyperparameter")
    if s.k_folds < 2:
        raise ConfigError("study.k_folds", "must be >= 2")
    for i, b in enumerate(s.beta_sweep):
        if isinstance(b, bool) or not isinstance(b, (int, float)) or not 0 <= b <= 1:
            raise ConfigError(f"study.beta_sweep[{i}]", f"beta must lie in [0, 1], got {b!r}")
    if not 0 <= a.beta <= 1:
        raise ConfigError("augmentation.beta", "must lie in [0, 1]")
    if not a.m > a.n >= 1:
        raise ConfigError("augmentation.m", f"reshape needs m > n >= 1, got m={a.m}, n={a.n}")
    if a.pad_or_overlap not in (PAD, OVERLAP):
        raise ConfigError("augmentation.pad_or_overlap", f"must be {PAD!r} or {OVERLAP!r}")
    if not a.signal_s > 0:
        raise ConfigError("augmentation.signal_s", "must be > 0")
    if a.pad_or_overlap == OVERLAP and round(a.signal_s * d.sample_rate_Hz) > a.m * a.n:
        raise ConfigError("augmentation.pad_or_overlap", "overlap needs signal samples <= m * n")
    if round(a.signal_s * d.sample_rate_Hz) < a.m:
        raise ConfigError("augmentation.signal_s", "signal is shorter than one reshape column")
    for key in ("seed_signals_per_label", "count_per_label"):
        if getattr(a, key) < 1:
            raise ConfigError(f"augmentation.{key}", "must be >= 1")
    if a.test_signals_per_label < 0:
        raise ConfigError("augmentation.test_signals_per_label", "must be >= 0")
    if (a.seed_signals_per_label + a.test_signals_per_label) * a.signal_s > d.duration_s + 1e-9:
        raise ConfigError("augmentation.seed_signals_per_label",
                          "seed plus test signals exceed the per-label data duration")
    if not 1 <= an.healthy_label <= 10:
        raise ConfigError("anomaly.healthy_label", "must lie in 1..10")
    if an.enabled and an.device not in available:
        raise ConfigError("anomaly.device", f"unknown device {an.device!r}")
    if not an.window_s > 0:
        raise ConfigError("anomaly.window_s", "must be > 0")
    if an.fit_events < 3:
        raise ConfigError("anomaly.fit_events", "must be >= 3")
    if not an.z_threshold > 0:
        raise ConfigError("anomaly.z_threshold", "must be > 0")
    return cfg


def from_dict(raw: dict, base_dir=".", check_files: bool = True) -> ExperimentConfig:
    cfg = _build(ExperimentConfig, raw, "")
    cfg.base_dir = Path(base_dir)
    return validate(cfg, check_files)


def loads(text: str, base_dir=".", check_files: bool = True) -> ExperimentConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("", f"not valid TOML: {exc}") from exc
    return from_dict(raw, base_dir, check_files)


def load(path, check_files: bool = True) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("", f"cannot read config {str(path)!r}: {exc.strerror}") from exc
    return loads(text, path.parent, check_files)


def dump(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(cfg.dumps(), encoding="utf-8")
