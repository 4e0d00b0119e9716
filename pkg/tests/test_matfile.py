import struct

import numpy as np
import pytest
import scipy.io

from pehsense import matfile
from pehsense.dataset import read_mat_trace


def cwru_like(path, n=5000, seed=0, compress=True):
    rng = np.random.default_rng(seed)
    data = {
        "X097_DE_time": rng.standard_normal((n, 1)),
        "X097_FE_time": rng.standard_normal((n, 1)),
        "X097RPM": np.array([[1796]], dtype=np.uint16),
    }
    scipy.io.savemat(path, data, do_compression=compress)
    return data


def big_endian_mat(path, name, values):
    """Hand-assembled big-endian MAT-5 file holding one double column vector."""
    def element(dtype, payload):
        pad = (-len(payload)) % 8
        return struct.pack(">II", dtype, len(payload)) + payload + b"\0" * pad

    vals = np.asarray(values, dtype=">f8")
    body = (element(6, struct.pack(">II", 6, 0))  # flags: mxDOUBLE_CLASS
            + element(5, struct.pack(">ii", vals.size, 1))
            + element(1, name.encode())
            + element(9, vals.tobytes()))
    header = b"MATLAB 5.0 MAT-file, test".ljust(116, b" ") + b"\0" * 8 + struct.pack(">H", 0x0100) + b"MI"
    with open(path, "wb") as fh:
        fh.write(header + struct.pack(">II", 14, len(body)) + body)


@pytest.mark.parametrize("compress", [True, False])
def test_matches_reference_reader(tmp_path, compress):
    path = tmp_path / "a.mat"
    cwru_like(path, compress=compress)
    ref = scipy.io.loadmat(path)
    ours = matfile.load_variables(path)
    for key in ("X097_DE_time", "X097_FE_time", "X097RPM"):
        assert ours[key].data.shape == ref[key].shape
        assert ours[key].data.astype(np.float64).tobytes() == ref[key].astype(np.float64).tobytes()


def test_read_vector_first_values_bytewise(tmp_path):
    path = tmp_path / "b.mat"
    data = cwru_like(path, n=1234, seed=3)
    name, vec = matfile.read_vector(path, r"_DE_time$")
    assert name == "X097_DE_time" and vec.size == 1234
    assert vec[:5].tobytes() == data["X097_DE_time"][:5, 0].tobytes()


def test_big_endian(tmp_path):
    path = tmp_path / "be.mat"
    big_endian_mat(path, "x_DE_time", [1.5, -2.25, 3.0])
    name, vec = matfile.read_vector(path, "DE")
    assert vec.tolist() == [1.5, -2.25, 3.0]
    assert vec.dtype == np.float64


def test_missing_variable(tmp_path):
    path = tmp_path / "c.mat"
    cwru_like(path, n=10)
    with pytest.raises(matfile.MatVariableError):
        matfile.read_vector(path, "BA_time")


def test_truncated_file(tmp_path):
    path = tmp_path / "d.mat"
    cwru_like(path, n=10)
    (tmp_path / "t.mat").write_bytes(path.read_bytes()[:100])
    with pytest.raises(matfile.MatFormatError):
        matfile.load_variables(tmp_path / "t.mat")
    (tmp_path / "u.mat").write_bytes(path.read_bytes()[:-7])
    with pytest.raises(matfile.MatFormatError):
        matfile.load_variables(tmp_path / "u.mat")


def test_bad_header(tmp_path):
    (tmp_path / "e.mat").write_bytes(b"\0" * 200)
    with pytest.raises(matfile.MatFormatError):
        matfile.load_variables(tmp_path / "e.mat")


def test_unsupported_types(tmp_path):
    path = tmp_path / "f.mat"
    scipy.io.savemat(path, {"cplx": np.array([1 + 2j, 3j]), "s": {"a": 1.0},
                            "c": np.array(["x"], dtype=object)})
    assert matfile.load_variables(path)["cplx"].data is None
    for name in ("cplx", "s"):
        with pytest.raises(matfile.MatUnsupportedError):
            matfile.read_vector(path, f"^{name}$")


def test_matrix_rejected_as_vector(tmp_path):
    path = tmp_path / "g.mat"
    scipy.io.savemat(path, {"m": np.ones((3, 4))})
    assert matfile.load_variables(path)["m"].data.shape == (3, 4)
    with pytest.raises(matfile.MatUnsupportedError):
        matfile.read_vector(path, "m")


def test_read_mat_trace(tmp_path):
    path = tmp_path / "h.mat"
    cwru_like(path, n=600)
    tr = read_mat_trace(path, label=7)
    assert len(tr) == 600 and tr.sample_rate == 12000.0 and tr.label == 7
