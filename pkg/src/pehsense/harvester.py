"""Modal electromechanical model of a cantilever piezoelectric harvester.

State layout for ``K`` modes: ``x = [eta (K), eta_dot (K), v]``.  The input
column ``B[:, 0]`` carries base acceleration and ``B[:, 1]`` the current
delivered to the piezo terminals (``-i`` where ``i`` is the load current).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .signal import AccelerationTrace, VoltageTrace

RTOL = 1e-6
ATOL = 1e-9

DEFAULT_DAMPING = 0.02
DEFAULT_PIEZO_CAPACITANCE = 100e-9  # F
DEFAULT_LOAD_RESISTANCE = 10e3  # Ohm
DEFAULT_COUPLING_SQUARED = 0.005  # theta^2 / (C_p * omega^2)
DEFAULT_MODAL_FORCING = 1.0

DEFAULT_BANK_FREQUENCIES = (100.0, 150.0, 50.0, 200.0, 250.0, 300.0, 350.0, 400.0, 450.0, 500.0)


class IntegrationError(RuntimeError):
    """The adaptive integrator could not advance (step size underflow)."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


@dataclass(frozen=True)
class HarvesterDesign:
    name: str
    natural_frequencies: tuple
    damping_ratios: tuple
    modal_coupling: tuple
    output_coupling: tuple
    modal_forcing: tuple
    C_p: float
    R_l: float

    def __post_init__(self):
        for f in ("natural_frequencies", "damping_ratios", "modal_coupling",
                  "output_coupling", "modal_forcing"):
            object.__setattr__(self, f, tuple(float(x) for x in np.atleast_1d(getattr(self, f))))
        k = len(self.natural_frequencies)
        if k < 1:
            raise ValueError(f"{self.name}: at least one mode is required")
        for f in ("damping_ratios", "modal_coupling", "output_coupling", "modal_forcing"):
            if len(getattr(self, f)) != k:
                raise ValueError(f"{self.name}: {f} has {len(getattr(self, f))} entries, expected {k}")
        if any(not fn > 0 for fn in self.natural_frequencies):
            raise ValueError(f"{self.name}: natural frequencies must be > 0")
        if any(not 0 < z < 1 for z in self.damping_ratios):
            raise ValueError(f"{self.name}: damping ratios must lie in (0, 1)")
        if not self.C_p > 0:
            raise ValueError(f"{self.name}: C_p must be > 0")
        if not self.R_l > 0:
            raise ValueError(f"{self.name}: R_l must be > 0")

    @property
    def n_modes(self) -> int:
        return len(self.natural_frequencies)

    @classmethod
    def single_mode(cls, name, natural_frequency, damping=DEFAULT_DAMPING,
                    C_p=DEFAULT_PIEZO_CAPACITANCE, R_l=DEFAULT_LOAD_RESISTANCE,
                    coupling_squared=DEFAULT_COUPLING_SQUARED, modal_forcing=DEFAULT_MODAL_FORCING):
        """Single-mode design with reciprocal coupling ``theta = omega * sqrt(k2 * C_p)``."""
        omega = 2 * np.pi * natural_frequency
        theta = omega * np.sqrt(coupling_squared * C_p)
        return cls(name, (natural_frequency,), (damping,), (theta,), (theta,),
                   (modal_forcing,), C_p, R_l)


@dataclass(frozen=True, eq=False)
class StateSpaceSystem:
    A: np.ndarray
    B: np.ndarray
    n_modes: int

    @property
    def voltage_index(self) -> int:
        return 2 * self.n_modes


@dataclass(frozen=True, eq=False)
class FRFCurve:
    frequencies: np.ndarray
    magnitude: np.ndarray
    phase: np.ndarray

    def peak_frequency(self) -> float:
        return float(self.frequencies[int(np.argmax(self.magnitude))])


def assemble_state_space(design: HarvesterDesign, load: bool = True) -> StateSpaceSystem:
    """Build ``A`` and ``B``; with ``load`` the resistor current ``v/R_l`` is folded into ``A``."""
    k = design.n_modes
    omega = 2 * np.pi * np.asarray(design.natural_frequencies)
    zeta = np.asarray(design.damping_ratios)
    n = 2 * k + 1
    A = np.zeros((n, n))
    A[:k, k:2 * k] = np.eye(k)
    A[k:2 * k, :k] = -np.diag(omega**2)
    A[k:2 * k, k:2 * k] = -np.diag(2 * zeta * omega)
    A[k:2 * k, 2 * k] = design.modal_coupling
    A[2 * k, k:2 * k] = -np.asarray(design.output_coupling) / design.C_p
    if load:
        A[2 * k, 2 * k] = -1.0 / (design.R_l * design.C_p)
    B = np.zeros((n, 2))
    B[k:2 * k, 0] = design.modal_forcing
    B[2 * k, 1] = 1.0 / design.C_p
    return StateSpaceSystem(A, B, k)


def _initial_states(x0, n_state, n_events):
    if x0 is None:
        return np.zeros((n_events, n_state))
    x0 = np.asarray(x0, dtype=float)
    if x0.shape == (n_state,):
        return np.tile(x0, (n_events, 1))
    if x0.shape != (n_events, n_state):
        raise ValueError(f"initial state must have shape ({n_state},), got {x0.shape}")
    return x0


def _check_batch(traces):
    fs = traces[0].sample_rate
    n = len(traces[0])
    for tr in traces:
        if tr.sample_rate != fs or len(tr) != n:
            raise ValueError("batched traces must share sample rate and length")
        if n < 2:
            raise ValueError("traces must hold at least 2 samples")
    return fs


def simulate_resistive_batch(design: HarvesterDesign, traces, x0=None, backend=None):
    """Voltage across ``R_l`` for several equal-length traces in one kernel call."""
    traces = list(traces)
    fs = _check_batch(traces)
    sys = assemble_state_space(design, load=True)
    inputs = np.stack([tr.samples for tr in traces])
    y0 = _initial_states(x0, sys.A.shape[0], len(traces))
    impl = kernels.get_backend(backend) if backend else kernels
    out, status, t_stop, _ = impl.integrate_batch(
        sys.A, np.ascontiguousarray(sys.B[:, 0]), inputs, float(fs), kernels.MODE_LINEAR,
        np.zeros(5), y0, np.array([sys.voltage_index]), RTOL, ATOL, 0.5 / fs,
    )
    if np.any(status):
        i = int(np.flatnonzero(status)[0])
        raise IntegrationError(
            f"{design.name}: step size underflow at t={t_stop[i]:.6g} s", float(t_stop[i])
        )
    return [VoltageTrace(out[i, :, 0], fs) for i in range(len(traces))]


def simulate_resistive(design: HarvesterDesign, trace: AccelerationTrace, x0=None,
                       backend=None) -> VoltageTrace:
    """Integrate the loaded harvester driven by ``trace`` from ``x0`` (default rest)."""
    return simulate_resistive_batch(design, [trace], x0, backend)[0]


def frf(design: HarvesterDesign, frequencies) -> FRFCurve:
    """Voltage per unit base acceleration from ``(j w I - A) X = B[:, 0]``."""
    freqs = np.asarray(frequencies, dtype=float)
    if np.any(freqs <= 0):
        raise ValueError("FRF frequencies must be > 0")
    sys = assemble_state_space(design, load=True)
    n = sys.A.shape[0]
    b = sys.B[:, 0].astype(complex)
    eye = np.eye(n)
    h = np.empty(freqs.size, dtype=complex)
    for i, f in enumerate(freqs):
        try:
            x = np.linalg.solve(2j * np.pi * f * eye - sys.A, b)
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError(f"{design.name}: singular system at {f} Hz") from exc
        h[i] = x[sys.voltage_index]
    return FRFCurve(freqs, np.abs(h), np.angle(h))


def default_device_bank() -> list:
    """Ten single-mode devices; Device 3 sits at 50 Hz and Device 9 at 450 Hz."""
    return [HarvesterDesign.single_mode(f"Device {i + 1}", f)
            for i, f in enumerate(DEFAULT_BANK_FREQUENCIES)]
