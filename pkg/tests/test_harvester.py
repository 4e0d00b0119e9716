import numpy as np
import pytest
from scipy.integrate import solve_ivp

from pehsense.harvester import (
    HarvesterDesign, assemble_state_space, default_device_bank, frf, simulate_resistive,
    simulate_resistive_batch,
)
from pehsense.signal import AccelerationTrace, energy_time_domain, fft_magnitude

FS = 12000.0


def sdof_voltage(design, f):
    """Closed-form voltage per unit acceleration for one mode (scalar elimination)."""
    wn = 2 * np.pi * design.natural_frequencies[0]
    z = design.damping_ratios[0]
    th, Th, fo = design.modal_coupling[0], design.output_coupling[0], design.modal_forcing[0]
    w = 2 * np.pi * f
    elec = 1j * w * design.C_p + 1.0 / design.R_l
    X = fo / (wn**2 - w**2 + 2j * z * wn * w + 1j * w * th * Th / elec)
    return -1j * w * Th * X / elec


def fit_amplitude(t, y, f):
    A = np.column_stack([np.sin(2 * np.pi * f * t), np.cos(2 * np.pi * f * t)])
    c, *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(np.hypot(*c))


def tone(f, dur, amp=1.0):
    t = np.arange(int(round(dur * FS))) / FS
    return AccelerationTrace(amp * np.sin(2 * np.pi * f * t), FS)


def test_design_invariants():
    with pytest.raises(ValueError):
        HarvesterDesign.single_mode("d", -1.0)
    with pytest.raises(ValueError):
        HarvesterDesign.single_mode("d", 50.0, damping=1.5)
    with pytest.raises(ValueError):
        HarvesterDesign("d", (50.0, 60.0), (0.02,), (1.0, 1.0), (1.0, 1.0), (1.0, 1.0), 1e-7, 1e4)


def test_state_space_structure():
    d = HarvesterDesign.single_mode("d", 50.0)
    sys = assemble_state_space(d)
    assert sys.A[1, 0] == pytest.approx(-(2 * np.pi * 50) ** 2)
    assert sys.A[1, 0] == pytest.approx(-98696.044, rel=1e-7)
    assert sys.A[2, 2] == pytest.approx(-1 / (d.R_l * d.C_p))
    assert sys.B[1, 0] == 1.0 and sys.B[2, 1] == pytest.approx(1 / d.C_p)
    d2 = HarvesterDesign("two", (50.0, 300.0), (0.02, 0.02), (1e-3, 2e-3), (1e-3, 2e-3),
                         (1.0, 0.5), 1e-7, 1e4)
    A = assemble_state_space(d2).A
    assert A.shape == (5, 5)
    assert np.array_equal(A[0:2, 2:4], np.eye(2))
    assert np.all(A[0:2, 0:2] == 0) and np.all(A[0:2, 4] == 0)


def test_zero_coupling_gives_zero_voltage():
    d = HarvesterDesign("z", (100.0,), (0.02,), (0.0,), (0.0,), (1.0,), 1e-7, 1e4)
    v = simulate_resistive(d, tone(100.0, 0.05))
    assert np.all(v.samples == 0)
    assert np.all(frf(d, [50.0, 100.0]).magnitude == 0)


def test_zero_input_zero_output():
    d = default_device_bank()[0]
    v = simulate_resistive(d, AccelerationTrace(np.zeros(600), FS))
    assert np.all(v.samples == 0)


def test_frf_matches_closed_form():
    for d in default_device_bank():
        fn = d.natural_frequencies[0]
        freqs = np.linspace(0.3 * fn, 3 * fn, 97)
        h = frf(d, freqs)
        ref = np.array([sdof_voltage(d, f) for f in freqs])
        assert np.allclose(h.magnitude, np.abs(ref), rtol=1e-9)
        assert np.allclose(np.exp(1j * h.phase), np.exp(1j * np.angle(ref)), atol=1e-9)


def test_frf_peak_and_rolloff():
    d = HarvesterDesign.single_mode("d", 120.0)
    fn, z = 120.0, d.damping_ratios[0]
    freqs = np.linspace(100.0, 140.0, 40001)
    fd = fn * np.sqrt(1 - 2 * z**2)
    peak = frf(d, freqs).peak_frequency()
    assert abs(peak - fd) / fd < 0.01
    top = frf(d, [peak]).magnitude[0]
    assert frf(d, [10 * fn]).magnitude[0] < 0.05 * top


def test_steady_state_matches_frf():
    d = HarvesterDesign.single_mode("d", 200.0)
    fn = 200.0
    tr = tone(fn, 50 / fn + 0.05)
    v = simulate_resistive(d, tr)
    t = v.times
    tail = t > t[-1] - 10 / fn
    amp = fit_amplitude(t[tail], v.samples[tail], fn)
    assert amp == pytest.approx(abs(sdof_voltage(d, fn)), rel=0.02)


def test_linearity_and_energy_scaling(rng):
    d = default_device_bank()[8]
    x = rng.standard_normal(2400)
    v1 = simulate_resistive(d, AccelerationTrace(x, FS)).samples
    v2 = simulate_resistive(d, AccelerationTrace(2 * x, FS)).samples
    assert np.max(np.abs(v2 - 2 * v1)) <= 1e-3 * np.max(np.abs(2 * v1))
    e1 = energy_time_domain(simulate_resistive(d, AccelerationTrace(x, FS)), d.R_l)
    e3 = energy_time_domain(simulate_resistive(d, AccelerationTrace(3 * x, FS)), d.R_l)
    assert e3 == pytest.approx(9 * e1, rel=5e-3)


def test_band_pass_two_tones():
    d = HarvesterDesign.single_mode("d", 100.0)
    a = tone(100.0, 1.0).samples + tone(400.0, 1.0).samples
    v = simulate_resistive(d, AccelerationTrace(a, FS))
    spec = fft_magnitude(v)
    assert spec.magnitude_at(100.0) >= 10 * spec.magnitude_at(400.0)


def test_integrator_against_solve_ivp(rng):
    """Independent reference: scipy's RK45 at tight tolerance on the same linear-interpolated input."""
    d = default_device_bank()[4]
    sys = assemble_state_space(d)
    x = rng.standard_normal(600)
    t = np.arange(x.size) / FS
    v = simulate_resistive(d, AccelerationTrace(x, FS)).samples

    def rhs(tt, y):
        return sys.A @ y + sys.B[:, 0] * np.interp(tt, t, x)

    ref = solve_ivp(rhs, (0, t[-1]), np.zeros(3), method="DOP853", t_eval=t,
                    rtol=1e-11, atol=1e-14, max_step=0.5 / FS).y[2]
    assert np.max(np.abs(v - ref)) <= 1e-4 * np.max(np.abs(ref))


def test_batch_matches_single(rng):
    d = default_device_bank()[1]
    trs = [AccelerationTrace(rng.standard_normal(500), FS) for _ in range(3)]
    batch = simulate_resistive_batch(d, trs)
    for tr, vb in zip(trs, batch):
        assert np.array_equal(simulate_resistive(d, tr).samples, vb.samples)


def test_batch_rejects_mixed_lengths():
    d = default_device_bank()[0]
    with pytest.raises(ValueError):
        simulate_resistive_batch(d, [AccelerationTrace(np.zeros(10), FS),
                                     AccelerationTrace(np.zeros(11), FS)])


def test_default_bank():
    bank = default_device_bank()
    assert len(bank) == 10
    assert bank[2].natural_frequencies == (50.0,)
    assert bank[8].natural_frequencies == (450.0,)
    assert [b.name for b in bank] == [f"Device {i}" for i in range(1, 11)]
