import numpy as np
import pytest

from pehsense.dataset import (
    EnergyFeatureTable, SyntheticFaultSpec, benchmark_specs, build_feature_table, fuse,
    kfold_split, read_feature_csv, synth_benchmark, synth_trace, truncate, write_feature_csv,
)
from pehsense.harvester import default_device_bank
from pehsense.seh import SEHParams
from pehsense.signal import AccelerationTrace, fft_magnitude

FS = 12000.0


def small_table(n_per_label=10, labels=range(1, 11), seed=0):
    rng = np.random.default_rng(seed)
    labs = np.repeat(list(labels), n_per_label)
    return EnergyFeatureTable(np.arange(labs.size), labs, rng.uniform(size=(labs.size, 2)))


def test_synth_single_tone():
    spec = SyntheticFaultSpec(((450.0, 1.0),), 0.0, 1.0)
    tr = synth_trace(spec, np.random.default_rng(0))
    assert fft_magnitude(tr).peak_frequency() == pytest.approx(450.0)


def test_synth_noise_rms():
    tr = synth_trace(SyntheticFaultSpec((), 1.0, 5.0), np.random.default_rng(1))
    assert np.sqrt(np.mean(tr.samples**2)) == pytest.approx(1.0, rel=0.05)


def test_synth_deterministic_and_validated():
    spec = SyntheticFaultSpec(((100.0, 0.5),), 0.2, 0.5, label=3)
    a = synth_trace(spec, np.random.default_rng(9))
    b = synth_trace(spec, np.random.default_rng(9))
    assert np.array_equal(a.samples, b.samples) and a.label == 3
    with pytest.raises(ValueError):
        SyntheticFaultSpec(((7000.0, 1.0),), 0.0, 1.0)
    with pytest.raises(ValueError):
        SyntheticFaultSpec(((100.0, -1.0),), 0.0, 1.0)


def test_benchmark_shape():
    specs = benchmark_specs()
    assert [s.label for s in specs] == list(range(1, 11))
    assert all(50 <= f <= 500 for s in specs for f, _ in s.harmonics if f >= 50)
    tr = synth_benchmark(0, duration=1.0)
    assert sorted(tr) == list(range(1, 11)) and len(tr[1][0]) == 12000


def test_truncate_split():
    tr = AccelerationTrace(np.arange(40.0), 4.0, label=7)
    head, tail = truncate(tr, 4.0)
    assert len(head) == 16 and len(tail) == 24
    assert np.array_equal(np.concatenate([head.samples, tail.samples]), tr.samples)
    assert truncate(tr, 20.0) == (tr, None)


def test_feature_table_row_count():
    traces = {lab: [AccelerationTrace(np.zeros(int(10 * FS)), FS)] for lab in range(1, 11)}
    t = build_feature_table(traces, [default_device_bank()[8]], window_s=0.3)
    assert len(t) == 330 and t.n_features == 1
    assert np.all(t.features == 0)  # zero acceleration, zero energy
    assert t.feature_names == ("Device 9@0.3s",)


def test_seh_feature_dimension(rng):
    traces = {lab: [AccelerationTrace(rng.standard_normal(2400), FS)] for lab in (1, 2)}
    bank = default_device_bank()
    t = build_feature_table(traces, [bank[0], bank[8]], "seh", 0.1, [0.05, 0.1], SEHParams(10e-6))
    assert t.features.shape == (4, 4)  # two 0.1 s events per label
    assert t.feature_names[:2] == ("Device 1@0.05s", "Device 1@0.1s")
    assert np.all(t.features[:, 1] >= t.features[:, 0])
    with pytest.raises(ValueError):
        build_feature_table(traces, [bank[0]], "seh", 0.1, [0.2], SEHParams(10e-6))


def test_table_invariants():
    with pytest.raises(ValueError):
        EnergyFeatureTable([0, 1], [1, 11], [[0.0], [1.0]])
    with pytest.raises(ValueError):
        EnergyFeatureTable([0, 1], [1, 2], [[0.0], [-1.0]])
    with pytest.raises(ValueError):
        EnergyFeatureTable([0, 0], [1, 2], [[0.0], [1.0]])


def test_fuse():
    a = small_table(seed=1)
    b = small_table(seed=2)
    f = fuse(a, b, b)
    assert f.n_features == 6 and np.array_equal(f.labels, a.labels)
    empty = EnergyFeatureTable(a.event_ids, a.labels, np.zeros((len(a), 0)))
    assert np.array_equal(fuse(a, empty).features, a.features)
    with pytest.raises(ValueError):
        fuse(a, small_table(n_per_label=9))


def test_kfold_330():
    labs = np.repeat(np.arange(1, 11), 33)
    t = EnergyFeatureTable(np.arange(330), labs, np.zeros((330, 1)))
    fa = kfold_split(t, 5, seed=0)
    sizes = np.bincount(fa.folds)
    assert sizes.tolist() == [66] * 5
    for lab in range(1, 11):
        per = np.bincount(fa.folds[labs == lab], minlength=5)
        assert set(per.tolist()) <= {6, 7} and per.sum() == 33
    assert np.array_equal(kfold_split(t, 5, 0).folds, fa.folds)


def test_kfold_two_exact():
    t = small_table(n_per_label=10)
    fa = kfold_split(t, 2, seed=4)
    for lab in range(1, 11):
        assert np.bincount(fa.folds[t.labels == lab]).tolist() == [5, 5]


def test_kfold_errors():
    with pytest.raises(ValueError):
        kfold_split(small_table(n_per_label=3), 5)
    with pytest.raises(ValueError):
        kfold_split(small_table(), 1)


def test_feature_csv_round_trip(tmp_path):
    t = small_table()
    write_feature_csv(tmp_path / "f.csv", t)
    assert (tmp_path / "f.csv").read_text().splitlines()[0] == "event_id,label,f0,f1"
    back = read_feature_csv(tmp_path / "f.csv")
    assert np.array_equal(back.features, t.features) and np.array_equal(back.labels, t.labels)
