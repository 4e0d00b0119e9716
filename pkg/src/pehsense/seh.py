"""Harvester co-simulated with a full-bridge rectifier charging a storage capacitor.

The switch stays open, so the capacitor only charges.  The bridge acts on
``|v|``: it conducts ``i_l = (|v| - v_fd - v_c) / R_on`` while
``|v| > v_c + v_fd`` and blocks otherwise; the piezo sees ``sign(v) * i_l``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import kernels
from .harvester import ATOL, RTOL, HarvesterDesign, IntegrationError, assemble_state_space, _check_batch
from .signal import AccelerationTrace, VoltageTrace

log = logging.getLogger(__name__)

DEFAULT_DIODE_DROP = 0.3  # V
DEFAULT_ON_RESISTANCE = 1.0  # Ohm
DEFAULT_RATED_VOLTAGE = 25.0  # V

_CHUNK = 32


@dataclass(frozen=True)
class SEHParams:
    C: float
    v_fd: float = DEFAULT_DIODE_DROP
    R_on: float = DEFAULT_ON_RESISTANCE
    v_r: float = DEFAULT_RATED_VOLTAGE

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError(f"capacitance must be > 0, got {self.C}")
        if not self.v_fd >= 0:
            raise ValueError(f"diode drop must be >= 0, got {self.v_fd}")
        if not self.R_on > 0:
            raise ValueError(f"diode on-resistance must be > 0, got {self.R_on}")
        if not self.v_r > 0:
            raise ValueError(f"rated voltage must be > 0, got {self.v_r}")

    def elec(self, C_p: float) -> np.ndarray:
        return np.array([C_p, self.C, self.v_fd, self.R_on, self.v_r], dtype=float)


@dataclass(frozen=True, eq=False)
class CircuitState:
    x: np.ndarray
    v_c: float
    t: float
    saturated: bool = False


def rectifier_current(v, v_c, v_fd, R_on):
    """Charging current of the bridge for piezo voltage ``v`` (array friendly)."""
    return kernels._numpy.bridge_current(np.asarray(v, dtype=float), v_c, v_fd, R_on)


def _run(sys_a, sys_b, inputs, fs, mode, elec, y0, out_idx, backend):
    impl = kernels.get_backend(backend) if backend else kernels
    outs, sats = [], []
    for lo in range(0, inputs.shape[0], _CHUNK):
        sl = slice(lo, lo + _CHUNK)
        out, status, t_stop, sat = impl.integrate_batch(
            sys_a, sys_b, inputs[sl], float(fs), mode, elec, y0[sl], out_idx,
            RTOL, ATOL, 0.5 / fs,
        )
        if np.any(status):
            i = int(np.flatnonzero(status)[0])
            raise IntegrationError(
                f"rectifier simulation: step size underflow at t={t_stop[i]:.6g} s (event {lo + i})",
                float(t_stop[i]),
            )
        outs.append(out)
        sats.append(sat)
    return np.concatenate(outs), np.concatenate(sats)


def simulate_seh_batch(design: HarvesterDesign, params: SEHParams, traces, x0=None,
                       v_c0=0.0, backend=None):
    """Capacitor-voltage traces and final states for equal-length acceleration traces."""
    traces = list(traces)
    fs = _check_batch(traces)
    if not 0 <= v_c0 <= params.v_r:
        raise ValueError(f"initial capacitor voltage {v_c0} outside [0, {params.v_r}]")
    sys = assemble_state_space(design, load=False)
    n_mech = sys.A.shape[0]
    n_ev = len(traces)
    y0 = np.zeros((n_ev, n_mech + 1))
    if x0 is not None:
        y0[:, :n_mech] = np.asarray(x0, dtype=float)
    y0[:, n_mech] = v_c0
    inputs = np.stack([tr.samples for tr in traces])
    out_idx = np.arange(n_mech + 1)
    out, sat = _run(sys.A, np.ascontiguousarray(sys.B[:, 0]), inputs, fs,
                    kernels.MODE_RECTIFIER, params.elec(design.C_p), y0, out_idx, backend)
    t_end = (inputs.shape[1] - 1) / fs
    results = []
    for i in range(n_ev):
        if sat[i]:
            log.warning("%s: capacitor reached rated voltage %.3g V (event %d)",
                        design.name, params.v_r, i)
        vc = VoltageTrace(out[i, :, n_mech], fs)
        state = CircuitState(out[i, -1, :n_mech].copy(), float(out[i, -1, n_mech]), t_end,
                             bool(sat[i]))
        results.append((vc, state))
    return results


def simulate_seh(design: HarvesterDesign, params: SEHParams, trace: AccelerationTrace,
                 x0=None, v_c0=0.0, backend=None):
    """Return ``(capacitor_voltage, final_state)`` for one acceleration trace."""
    return simulate_seh_batch(design, params, [trace], x0, v_c0, backend)[0]


def charge_from_source(params: SEHParams, source: VoltageTrace, v_c0=0.0, backend=None):
    """Capacitor voltage when the bridge is driven by a prescribed voltage source."""
    fs = source.sample_rate
    inputs = source.samples[None, :].copy()
    out, sat = _run(np.zeros((0, 0)), np.zeros(0), inputs, fs, kernels.MODE_SOURCE,
                    params.elec(1.0), np.full((1, 1), float(v_c0)), np.array([0]), backend)
    return VoltageTrace(out[0, :, 0], fs)


def capacitor_energy(v_c: float, C: float) -> float:
    """Stored energy ``C * v_c^2 / 2``."""
    if v_c < 0:
        raise ValueError(f"capacitor voltage must be >= 0, got {v_c}")
    return 0.5 * C * v_c * v_c


def energy_at_times(v_c: VoltageTrace, C: float, times) -> np.ndarray:
    """Stored energy at each requested time (nearest sample, clipped to the last one)."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    n = len(v_c)
    if np.any(times < 0) or np.any(times > v_c.duration + 0.5 / v_c.sample_rate):
        raise ValueError(f"times {times.tolist()} outside the {v_c.duration} s trace")
    idx = np.minimum(np.rint(times * v_c.sample_rate).astype(int), n - 1)
    vals = np.maximum(v_c.samples[idx], 0.0)
    return np.array([capacitor_energy(float(x), C) for x in vals])


def source_resistance(design: HarvesterDesign) -> float:
    """Thevenin resistance a bridge sees from the piezo at its first mode, ``pi / (2 w C_p)``.

    A sinusoidal current source in parallel with ``C_p`` must swing
    ``2 (v_c + v_fd)`` every half cycle before the bridge conducts, which gives a
    DC charging current ``(2 w C_p / pi) (v_oc - v_fd - v_c)``.
    """
    omega = 2 * np.pi * design.natural_frequencies[0]
    return np.pi / (2 * omega * design.C_p)


def linear_window(params: SEHParams, R_equiv: float) -> float:
    """Half the charging time constant, ``R_equiv * C / 2``."""
    if not R_equiv > 0:
        raise ValueError(f"equivalent resistance must be > 0, got {R_equiv}")
    return 0.5 * R_equiv * params.C
