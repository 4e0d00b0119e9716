import copy
import textwrap

import pytest

from pehsense import config
from pehsense.config import ConfigError

BASE = {
    "experiment": {"name": "t", "seed": 3},
    "data": {"duration_s": 2.0},
    "study": {"window_s": [0.1], "classifiers": ["knn", "gaussian_nb"]},
    "augmentation": {"signal_s": 0.5, "seed_signals_per_label": 2, "test_signals_per_label": 2},
}


def raw(**sections):
    r = copy.deepcopy(BASE)
    for name, values in sections.items():
        r.setdefault(name, {}).update(values)
    return r


def test_defaults_load():
    c = config.from_dict(raw())
    assert c.experiment.seed == 3 and c.study.k_folds == 5
    assert [d.name for d in c.device_bank()][:2] == ["Device 1", "Device 2"]
    assert c.hyperparams("knn")["k"] == 5


def test_round_trip(tmp_path):
    c = config.from_dict(raw(
        devices={"names": ["Device 3", "Device 9"]},
        circuit={"kinds": ["resistive", "seh"], "capacitance_uF": [10.0, 1000.0], "time_points_s": [0.1]},
        study={"device_sets": [["Device 3"], ["Device 3", "Device 9"]], "classifiers": ["random_forest"],
               "hyperparams": {"random_forest": {"n_trees": 7}}},
        anomaly={"enabled": True, "window_s": 0.1},
    ))
    assert config.loads(c.dumps()) == c
    config.dump(c, tmp_path / "c.toml")
    back = config.load(tmp_path / "c.toml")
    assert back == c and back.digest() == c.digest()
    assert back.hyperparams("random_forest")["n_trees"] == 7
    assert back.device_sets() == [["Device 3"], ["Device 3", "Device 9"]]
    assert back.seh_params(1000.0).C == pytest.approx(1e-3)


def test_toml_text():
    text = textwrap.dedent("""
        [experiment]
        seed = 9
        [data]
        duration_s = 10.0
        [study]
        window_s = [0.3]
    """)
    c = config.loads(text)
    assert c.experiment.seed == 9 and c.study.window_s == [0.3]


def test_digest_changes_with_content():
    a = config.from_dict(raw())
    b = config.from_dict(raw(experiment={"seed": 4}))
    assert a.digest() != b.digest()


@pytest.mark.parametrize("section, values, path", [
    ("circuit", {"capacitance_uF": [-1.0]}, "circuit.capacitance_uF"),
    ("circuit", {"kinds": ["buck"]}, "circuit.kinds"),
    ("study", {"k_folds": 1}, "study.k_folds"),
    ("study", {"classifiers": ["mlp"]}, "study.classifiers"),
    ("augmentation", {"beta": -0.1}, "augmentation.beta"),
    ("anomaly", {"z_threshold": 0.0}, "anomaly.z_threshold"),
    ("devices", {"names": ["Device 42"]}, "devices.names"),
])
def test_invalid_values_name_field(section, values, path):
    with pytest.raises(ConfigError) as ei:
        config.from_dict(raw(**{section: values}))
    assert ei.value.path.startswith(path)
    assert str(ei.value).startswith(path)


def test_unknown_key_rejected():
    with pytest.raises(ConfigError) as ei:
        config.from_dict(raw(anomaly={"threshold": 3}))
    assert ei.value.path == "anomaly.threshold"


def test_type_error_reported():
    with pytest.raises(ConfigError) as ei:
        config.from_dict(raw(experiment={"seed": "three"}))
    assert ei.value.path == "experiment.seed"


def test_missing_mat_directory(tmp_path):
    r = raw(data={"source": "mat", "directory": "nowhere", "files": [{"file": "a.mat", "label": 1}]})
    with pytest.raises(ConfigError) as ei:
        config.from_dict(r, base_dir=tmp_path)
    assert ei.value.path.startswith("data.directory")
    assert config.from_dict(r, base_dir=tmp_path, check_files=False).data.source == "mat"


def test_empty_device_set():
    with pytest.raises(ConfigError) as ei:
        config.from_dict(raw(study={"device_sets": [[]]}))
    assert ei.value.path.startswith("study.device_sets")


def test_custom_bank():
    c = config.from_dict(raw(devices={"custom": [{"name": "A", "natural_frequency_Hz": 120.0},
                                                 {"name": "B", "natural_frequency_Hz": 320.0}]}))
    bank = c.device_bank()
    assert [d.name for d in bank] == ["A", "B"]
    assert bank[1].natural_frequencies == (320.0,)
