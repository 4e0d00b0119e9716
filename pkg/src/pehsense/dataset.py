"""Trace ingestion, synthetic fault signatures, energy feature tables and k-fold splits."""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field

import numpy as np

from . import matfile
from .harvester import HarvesterDesign, simulate_resistive_batch
from .seh import SEHParams, energy_at_times, simulate_seh_batch
from .signal import AccelerationTrace, energy_time_domain, window_events

DEFAULT_SAMPLE_RATE = 12000.0
RESISTIVE = "resistive"
SEH = "seh"


class FeatureError(RuntimeError):
    """Simulation failure while building a feature table, tagged with device and event."""


# --- ingestion ----------------------------------------------------------------

def read_mat_trace(path, pattern: str = r"_DE_time$", sample_rate: float = DEFAULT_SAMPLE_RATE,
                   label: int | None = None) -> AccelerationTrace:
    """Acceleration trace from a MAT-5 file; CWRU files do not store the sample rate."""
    name, data = matfile.read_vector(path, pattern)
    return AccelerationTrace(data, sample_rate, label, f"{path}:{name}")


def truncate(trace: AccelerationTrace, duration_s: float):
    """Split ``trace`` into its leading ``duration_s`` seconds and the remainder."""
    n = int(round(duration_s * trace.sample_rate))
    if n >= len(trace):
        return trace, None
    head = trace.with_samples(trace.samples[:n], f"{trace.source_id}[:{n}]")
    tail = trace.with_samples(trace.samples[n:], f"{trace.source_id}[{n}:]")
    return head, tail


@dataclass(frozen=True)
class SyntheticFaultSpec:
    harmonics: tuple  # ((frequency_hz, amplitude_ms2), ...)
    noise_rms: float
    duration: float
    sample_rate: float = DEFAULT_SAMPLE_RATE
    label: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "harmonics", tuple((float(f), float(a)) for f, a in self.harmonics))
        nyq = self.sample_rate / 2
        for f, a in self.harmonics:
            if not 0 < f < nyq:
                raise ValueError(f"harmonic at {f} Hz is outside (0, {nyq}) Hz")
            if a < 0:
                raise ValueError(f"harmonic amplitude must be >= 0, got {a}")
        if self.noise_rms < 0:
            raise ValueError("noise RMS must be >= 0")
        if not self.duration > 0 or not self.sample_rate > 0:
            raise ValueError("duration and sample rate must be > 0")


def synth_trace(spec: SyntheticFaultSpec, rng: np.random.Generator, source_id: str = "") -> AccelerationTrace:
    """Random-phase tones plus white Gaussian noise of the stated RMS."""
    n = int(round(spec.duration * spec.sample_rate))
    t = np.arange(n) / spec.sample_rate
    x = np.zeros(n)
    phases = rng.uniform(0, 2 * np.pi, len(spec.harmonics))
    for (f, a), ph in zip(spec.harmonics, phases):
        x += a * np.sin(2 * np.pi * f * t + ph)
    x += spec.noise_rms * rng.standard_normal(n)
    return AccelerationTrace(x, spec.sample_rate, spec.label, source_id or f"synthetic:L{spec.label}")


# Amplitude (m/s^2) of each label's tone at every default-bank frequency.
# Rows: labels 1..10; columns: 50, 100, ..., 500 Hz.
_BENCH_FREQS = (50.0, 100.0, 150.0, 200.0, 250.0, 300.0, 350.0, 400.0, 450.0, 500.0)
_BENCH_SHAFT = ((29.5, 0.8), (88.5, 0.4), (177.0, 0.3), (324.5, 0.2))
HEALTHY_LABEL = 7
HEALTHY_50HZ_AMPLITUDE = 0.02


def _benchmark_amplitudes():
    rng = np.random.default_rng(20240501)
    # ratio between successive levels: large spread = informative device
    spread = {50.0: 1.07, 100.0: 1.12, 150.0: 1.10, 200.0: 1.18, 250.0: 1.14,
              300.0: 1.16, 350.0: 1.12, 400.0: 1.17, 450.0: 1.25, 500.0: 1.14}
    table = np.empty((10, len(_BENCH_FREQS)))
    for j, f in enumerate(_BENCH_FREQS):
        order = rng.permutation(10)
        table[:, j] = 0.1 * spread[f] ** order
    # the healthy bearing carries almost no energy near 50 Hz, so a 50 Hz
    # device separates it from every fault
    table[HEALTHY_LABEL - 1, 0] = HEALTHY_50HZ_AMPLITUDE
    return table


def benchmark_specs(duration: float = 10.0, sample_rate: float = DEFAULT_SAMPLE_RATE,
                    noise_rms: float = 0.5) -> list:
    """Ten labels with distinct tone signatures between 50 and 500 Hz over common shaft harmonics."""
    amps = _benchmark_amplitudes()
    specs = []
    for i in range(10):
        tones = list(_BENCH_SHAFT) + [(f, float(a)) for f, a in zip(_BENCH_FREQS, amps[i])]
        specs.append(SyntheticFaultSpec(tuple(tones), noise_rms, duration, sample_rate, i + 1))
    return specs


def synth_benchmark(seed: int, duration: float = 10.0, sample_rate: float = DEFAULT_SAMPLE_RATE,
                    noise_rms: float = 0.5) -> dict:
    """One trace per label, deterministic under ``seed``."""
    out = {}
    for spec in benchmark_specs(duration, sample_rate, noise_rms):
        rng = np.random.default_rng([seed, spec.label])
        out[spec.label] = [synth_trace(spec, rng, f"synthetic:s{seed}:L{spec.label}")]
    return out


# --- feature tables -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EnergyFeatureTable:
    event_ids: np.ndarray
    labels: np.ndarray
    features: np.ndarray
    feature_names: tuple = ()
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        ids = np.asarray(self.event_ids, dtype=np.int64)
        labels = np.asarray(self.labels, dtype=np.int64)
        feats = np.asarray(self.features, dtype=float)
        if feats.ndim == 1:
            feats = feats.reshape(-1, 1) if feats.size else feats.reshape(len(ids), 0)
        if not (ids.shape[0] == labels.shape[0] == feats.shape[0]):
            raise ValueError("event_ids, labels and features differ in row count")
        if labels.size and (labels.min() < 1 or labels.max() > 10):
            raise ValueError("labels must lie in 1..10")
        if not np.all(np.isfinite(feats)) or np.any(feats < 0):
            raise ValueError("features must be finite and non-negative")
        if len(np.unique(ids)) != ids.size:
            raise ValueError("event ids must be unique")
        names = tuple(self.feature_names) or tuple(f"f{i}" for i in range(feats.shape[1]))
        if len(names) != feats.shape[1]:
            raise ValueError("feature_names does not match feature dimension")
        object.__setattr__(self, "event_ids", ids)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "feature_names", names)

    def __len__(self):
        return self.labels.size

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def select(self, columns) -> "EnergyFeatureTable":
        columns = list(columns)
        return EnergyFeatureTable(self.event_ids, self.labels, self.features[:, columns],
                                  tuple(self.feature_names[c] for c in columns), dict(self.provenance))

    def rows(self, mask) -> "EnergyFeatureTable":
        return EnergyFeatureTable(self.event_ids[mask], self.labels[mask], self.features[mask],
                                  self.feature_names, dict(self.provenance))

    def columns_for(self, device: str) -> list:
        prefix = f"{device}@"
        return [i for i, n in enumerate(self.feature_names) if n.startswith(prefix)]


def _events_by_label(traces_by_label, window_s):
    events = []
    for label in sorted(traces_by_label):
        for tr in traces_by_label[label]:
            for ev in window_events(tr, window_s):
                if ev.label is None:
                    ev = AccelerationTrace(ev.samples, ev.sample_rate, label, ev.source_id)
                events.append(ev)
    return events


def build_feature_table(traces_by_label: dict, devices, circuit: str = RESISTIVE,
                        window_s: float = 0.3, time_points=None, seh_params: SEHParams | None = None,
                        backend=None) -> EnergyFeatureTable:
    """One row per event window; columns run device-major, then time point.

    Resistive rows hold the load energy of the whole window; SEH rows hold the
    stored capacitor energy at each of ``time_points`` (seconds into the event).
    Each event is simulated from rest.
    """
    if not traces_by_label or any(len(v) == 0 for v in traces_by_label.values()):
        raise ValueError("every label needs at least one trace")
    devices = list(devices)
    if circuit == SEH:
        if seh_params is None:
            raise ValueError("SEH features need seh_params")
        time_points = [window_s] if time_points is None else list(time_points)
        if any(not 0 < tp <= window_s + 1e-12 for tp in time_points):
            raise ValueError(f"time points {time_points} must lie in (0, {window_s}]")
    elif circuit != RESISTIVE:
        raise ValueError(f"unknown circuit {circuit!r}")

    events = _events_by_label(traces_by_label, window_s)
    labels = np.array([ev.label for ev in events])
    columns, names = [], []
    for dev in devices:
        if circuit == RESISTIVE:
            try:
                volts = simulate_resistive_batch(dev, events, backend=backend)
            except Exception as exc:
                raise FeatureError(f"{dev.name}: {exc}") from exc
            columns.append(np.array([energy_time_domain(v, dev.R_l) for v in volts])[:, None])
            names.append(f"{dev.name}@{window_s:g}s")
        else:
            try:
                runs = simulate_seh_batch(dev, seh_params, events, backend=backend)
            except Exception as exc:
                raise FeatureError(f"{dev.name}: {exc}") from exc
            columns.append(np.stack([energy_at_times(vc, seh_params.C, time_points) for vc, _ in runs]))
            names.extend(f"{dev.name}@{tp:g}s" for tp in time_points)
    feats = np.hstack(columns) if columns else np.zeros((len(events), 0))
    prov = {
        "devices": [d.name for d in devices],
        "circuit": circuit,
        "window_s": window_s,
        "time_points_s": list(time_points) if circuit == SEH else [],
        "sources": [ev.source_id for ev in events],
    }
    return EnergyFeatureTable(np.arange(len(events)), labels, feats, tuple(names), prov)


def fuse(*tables: EnergyFeatureTable) -> EnergyFeatureTable:
    """Concatenate feature columns of tables covering the same events."""
    if not tables:
        raise ValueError("nothing to fuse")
    base = tables[0]
    for t in tables[1:]:
        if not np.array_equal(t.event_ids, base.event_ids) or not np.array_equal(t.labels, base.labels):
            raise ValueError("fused tables must share event ids and labels row for row")
    feats = np.hstack([t.features for t in tables])
    names = tuple(itertools.chain.from_iterable(t.feature_names for t in tables))
    prov = dict(base.provenance)
    prov["devices"] = list(itertools.chain.from_iterable(t.provenance.get("devices", []) for t in tables))
    return EnergyFeatureTable(base.event_ids, base.labels, feats, names, prov)


def write_feature_csv(path, table: EnergyFeatureTable) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["event_id", "label"] + [f"f{i}" for i in range(table.n_features)])
        for eid, lab, row in zip(table.event_ids.tolist(), table.labels.tolist(), table.features.tolist()):
            w.writerow([eid, lab] + [repr(x) for x in row])


def read_feature_csv(path) -> EnergyFeatureTable:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    head = rows[0]
    if head[:2] != ["event_id", "label"]:
        raise ValueError(f"{path}: expected header starting 'event_id,label'")
    data = rows[1:]
    ids = [int(r[0]) for r in data]
    labels = [int(r[1]) for r in data]
    feats = np.array([[float(x) for x in r[2:]] for r in data]).reshape(len(data), len(head) - 2)
    return EnergyFeatureTable(ids, labels, feats)


# --- folds --------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FoldAssignment:
    k: int
    event_ids: np.ndarray
    folds: np.ndarray  # fold index per row, aligned with event_ids

    def fold_of(self, event_id: int) -> int:
        return int(self.folds[np.flatnonzero(self.event_ids == event_id)[0]])

    def masks(self, table: EnergyFeatureTable):
        """Yield ``(train_mask, test_mask)`` per fold, aligned to ``table`` rows."""
        if not np.array_equal(table.event_ids, self.event_ids):
            raise ValueError("fold assignment does not match table events")
        for f in range(self.k):
            test = self.folds == f
            yield ~test, test


def kfold_split(table: EnergyFeatureTable, k: int = 5, seed: int = 0) -> FoldAssignment:
    """Stratified assignment: rows of each label are shuffled and dealt round-robin.

    The dealing position carries over between labels so fold sizes stay within one.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    labels = table.labels
    uniq, counts = np.unique(labels, return_counts=True)
    rare = uniq[counts < k]
    if rare.size:
        raise ValueError(f"labels {rare.tolist()} have fewer than k={k} rows")
    rng = np.random.default_rng(seed)
    folds = np.empty(labels.size, dtype=np.int64)
    offset = 0
    for lab in uniq:
        idx = np.flatnonzero(labels == lab)
        idx = idx[rng.permutation(idx.size)]
        folds[idx] = (np.arange(idx.size) + offset) % k
        offset = (offset + idx.size) % k
    return FoldAssignment(k, table.event_ids.copy(), folds)
