"""Uniform traces, one-sided FFT magnitudes, energies and event windows."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

AMPLITUDE_ONE_SIDED = "amplitude-one-sided"
"""Normalization tag: a unit-amplitude sinusoid shows magnitude 1 in its bin."""

_NORMALIZATIONS = (AMPLITUDE_ONE_SIDED,)


class TraceError(ValueError):
    """Invalid trace contents or an operation the trace cannot support."""


def _freeze(samples) -> np.ndarray:
    arr = np.array(samples, dtype=float).ravel()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class _Trace:
    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        arr = _freeze(self.samples)
        object.__setattr__(self, "samples", arr)
        if not self.sample_rate > 0:
            raise TraceError(f"sample_rate must be > 0, got {self.sample_rate}")
        if arr.size == 0:
            raise TraceError("trace has no samples")
        if not np.all(np.isfinite(arr)):
            raise TraceError("trace contains non-finite samples")

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        """Covered time, ``len / sample_rate`` (each sample spans one interval)."""
        return self.samples.size / self.sample_rate

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.samples.size) / self.sample_rate


@dataclass(frozen=True, eq=False)
class AccelerationTrace(_Trace):
    """Base acceleration in m/s^2 with an optional condition label (1-10)."""

    label: int | None = None
    source_id: str = ""

    def __post_init__(self):
        super().__post_init__()
        if self.label is not None and not 1 <= int(self.label) <= 10:
            raise TraceError(f"label must be in 1..10, got {self.label}")

    def with_samples(self, samples, source_id: str | None = None) -> "AccelerationTrace":
        return AccelerationTrace(
            samples, self.sample_rate, self.label,
            self.source_id if source_id is None else source_id,
        )


@dataclass(frozen=True, eq=False)
class VoltageTrace(_Trace):
    """Simulated voltage in V."""


@dataclass(frozen=True, eq=False)
class Spectrum:
    frequencies: np.ndarray
    magnitudes: np.ndarray
    normalization: str
    n_samples: int
    sample_rate: float = field(default=0.0)

    def __post_init__(self):
        f = _freeze(self.frequencies)
        m = _freeze(self.magnitudes)
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "magnitudes", m)
        if f.size != m.size:
            raise TraceError("frequencies and magnitudes differ in length")
        if f.size > 1 and np.any(np.diff(f) <= 0):
            raise TraceError("frequencies must be strictly increasing")
        if np.any(m < 0):
            raise TraceError("magnitudes must be non-negative")

    def peak_frequency(self, exclude_dc: bool = True) -> float:
        mags = self.magnitudes.copy()
        if exclude_dc:
            mags[0] = -1.0
        return float(self.frequencies[int(np.argmax(mags))])

    def magnitude_at(self, frequency: float) -> float:
        """Magnitude of the bin nearest to ``frequency``."""
        return float(self.magnitudes[int(np.argmin(np.abs(self.frequencies - frequency)))])


def fft_magnitude(trace: _Trace) -> Spectrum:
    """One-sided amplitude spectrum up to Nyquist.

    Interior bins are scaled by ``2/N`` and the DC (and, for even ``N``, the
    Nyquist) bin by ``1/N``, so a sinusoid of amplitude ``A`` on an exact bin
    reads ``A``.
    """
    x = trace.samples
    n = x.size
    if n < 2:
        raise TraceError("fft_magnitude needs at least 2 samples")
    mags = np.abs(np.fft.rfft(x)) / n
    if n % 2 == 0:
        mags[1:-1] *= 2.0
    else:
        mags[1:] *= 2.0
    freqs = np.fft.rfftfreq(n, d=1.0 / trace.sample_rate)
    return Spectrum(freqs, mags, AMPLITUDE_ONE_SIDED, n, float(trace.sample_rate))


def energy_time_domain(v: VoltageTrace, load_resistance: float) -> float:
    """Energy dissipated in a resistive load, ``sum(v^2) * dt / R``.

    This is the trapezoidal rule on the periodic extension of the trace, so it
    is exactly additive over non-overlapping windows and matches the Parseval
    sum of the same samples to rounding.
    """
    if not load_resistance > 0:
        raise ValueError(f"load resistance must be > 0, got {load_resistance}")
    x = v.samples
    return float(np.dot(x, x) / (v.sample_rate * load_resistance))


def cumulative_energy(v: VoltageTrace, load_resistance: float) -> np.ndarray:
    """Accumulated load energy after each sample (last entry = total)."""
    if not load_resistance > 0:
        raise ValueError(f"load resistance must be > 0, got {load_resistance}")
    return np.cumsum(v.samples**2) / (v.sample_rate * load_resistance)


def energy_parseval(spec: Spectrum, load_resistance: float, duration: float) -> float:
    """Load energy from a one-sided spectrum, ``c * sum(V^2 / R) * df``.

    With ``df = 1/duration`` the constant is ``c = duration^2 / 2`` for interior
    bins and ``duration^2`` for DC and Nyquist.
    """
    if spec.normalization not in _NORMALIZATIONS:
        raise ValueError(f"unknown spectrum normalization {spec.normalization!r}")
    if not load_resistance > 0:
        raise ValueError(f"load resistance must be > 0, got {load_resistance}")
    if not duration > 0:
        raise ValueError(f"duration must be > 0, got {duration}")
    df = 1.0 / duration
    c = np.full(spec.magnitudes.size, 0.5 * duration**2)
    c[0] = duration**2
    if spec.n_samples % 2 == 0:
        c[-1] = duration**2
    return float(np.sum(c * spec.magnitudes**2) / load_resistance * df)


def window_events(trace: _Trace, window_s: float) -> list:
    """Cut ``trace`` into consecutive, disjoint windows of ``window_s`` seconds.

    Each window holds ``round(window_s * sample_rate)`` samples; the trailing
    remainder is dropped.
    """
    n_win = int(round(window_s * trace.sample_rate))
    if n_win < 2:
        raise TraceError(f"window of {window_s} s holds fewer than 2 samples")
    if n_win > len(trace):
        raise TraceError(f"window of {window_s} s is longer than the {trace.duration} s trace")
    count = len(trace) // n_win
    x = trace.samples
    out = []
    for i in range(count):
        seg = x[i * n_win:(i + 1) * n_win]
        if isinstance(trace, AccelerationTrace):
            out.append(trace.with_samples(seg, f"{trace.source_id}#w{i}"))
        else:
            out.append(type(trace)(seg, trace.sample_rate))
    return out


# --- file formats -----------------------------------------------------------

ACCEL_COLUMN = "accel_ms2"
VOLTAGE_COLUMN = "voltage_V"
CAPACITOR_COLUMN = "capacitor_voltage_V"


def write_trace_csv(path, trace: _Trace, column: str | None = None) -> None:
    """Write ``time_s,<column>`` rows; ``column`` defaults by trace type."""
    if column is None:
        column = ACCEL_COLUMN if isinstance(trace, AccelerationTrace) else VOLTAGE_COLUMN
    t = trace.times
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time_s", column])
        for ti, xi in zip(t.tolist(), trace.samples.tolist()):
            w.writerow([repr(ti), repr(xi)])


def read_trace_csv(path, label: int | None = None, sample_rate: float | None = None):
    """Read a two-column trace CSV; the sample rate is inferred from ``time_s``.

    An ``accel_ms2`` column yields an :class:`AccelerationTrace`, anything else a
    :class:`VoltageTrace`.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or len(rows[0]) != 2 or rows[0][0] != "time_s":
        raise TraceError(f"{path}: expected header 'time_s,<quantity>'")
    column = rows[0][1]
    data = np.array([[float(a), float(b)] for a, b in rows[1:]])
    if data.shape[0] < 1:
        raise TraceError(f"{path}: no samples")
    if sample_rate is None:
        if data.shape[0] < 2:
            raise TraceError(f"{path}: cannot infer sample rate from one sample")
        sample_rate = (data.shape[0] - 1) / (data[-1, 0] - data[0, 0])
    if column == ACCEL_COLUMN:
        return AccelerationTrace(data[:, 1], float(sample_rate), label, str(path))
    return VoltageTrace(data[:, 1], float(sample_rate))


def write_trace_raw(path, trace: AccelerationTrace) -> None:
    """Little-endian float64 samples plus a ``.json`` sidecar with metadata."""
    path = Path(path)
    trace.samples.astype("<f8").tofile(path)
    meta = {"sample_rate": float(trace.sample_rate), "label": trace.label,
            "source_id": trace.source_id}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta, sort_keys=True) + "\n")


def read_trace_raw(path) -> AccelerationTrace:
    path = Path(path)
    side = path.with_suffix(path.suffix + ".json")
    if not side.exists():
        raise TraceError(f"{path}: missing sidecar {side.name}")
    meta = json.loads(side.read_text())
    samples = np.fromfile(path, dtype="<f8")
    return AccelerationTrace(samples, float(meta["sample_rate"]), meta.get("label"),
                             meta.get("source_id") or str(path))
