import math

import numpy as np
import pytest

from mlfrac.errors import ConfigError
from mlfrac.grid import SpectralGrid, StateField
from mlfrac.io import MAGIC, read_field, read_json, sha256_file, write_columns, write_csv, write_field, write_json


@pytest.fixture
def field2d():
    g = SpectralGrid((2 * math.pi, 4.0), (8, 4))
    rng = np.random.default_rng(0)
    return StateField(g, rng.normal(size=(2, 8, 4)) + 1j * rng.normal(size=(2, 8, 4)))


def test_round_trip_exact(tmp_path, field2d):
    p = write_field(tmp_path / "u.mlf", field2d, t=0.1)
    back, meta = read_field(p)
    assert np.array_equal(back.data, field2d.data)
    assert back.grid == field2d.grid
    assert meta == {"n": 2, "m": 2, "space": "physical", "t": 0.1}
    assert p.read_bytes().startswith(MAGIC.encode())


def test_round_trip_frequency(tmp_path, field2d):
    F = field2d.to_frequency()
    back, meta = read_field(write_field(tmp_path / "f.mlf", F))
    assert meta["space"] == "frequency" and "t" not in meta
    assert np.array_equal(back.data, F.data)


def test_rejects_bad_files(tmp_path, field2d):
    p = write_field(tmp_path / "u.mlf", field2d)
    raw = p.read_bytes()
    (tmp_path / "short.mlf").write_bytes(raw[:-8])
    (tmp_path / "magic.mlf").write_bytes(b"OTHER" + raw[5:])
    (tmp_path / "nohdr.mlf").write_bytes(b"abc")
    (tmp_path / "dims.mlf").write_bytes(raw.replace(b"n=2", b"n=3", 1))
    for name in ("short", "magic", "nohdr", "dims"):
        with pytest.raises(ConfigError):
            read_field(tmp_path / f"{name}.mlf")


def test_checksum_changes(tmp_path, field2d):
    a = write_field(tmp_path / "a.mlf", field2d)
    b = write_field(tmp_path / "b.mlf", field2d)
    assert sha256_file(a) == sha256_file(b)
    write_field(b, field2d.scale(1 + 1e-15))
    assert sha256_file(a) != sha256_file(b)


def test_csv(tmp_path, field2d):
    p = write_csv(tmp_path / "u.csv", field2d)
    header = p.read_text().splitlines()[0]
    assert header == "x1,x2,re_u1,im_u1,re_u2,im_u2"
    arr = np.loadtxt(p, delimiter=",", skiprows=1)
    assert arr.shape == (32, 6)
    assert np.array_equal(arr[:, 2], field2d.data[0].real.ravel())
    assert np.array_equal(arr[:, 5], field2d.data[1].imag.ravel())


def test_columns(tmp_path, field2d):
    lines = write_columns(tmp_path / "u.dat", field2d).read_text().split("\n")
    blocks = [b for b in "\n".join(lines).split("\n\n") if b.strip()]
    assert len(blocks) == 8
    assert all(len(b.splitlines()) == 4 for b in blocks)
    g1 = SpectralGrid((1.0,), (8,))
    one = write_columns(tmp_path / "v.dat", StateField(g1, np.ones(8))).read_text().splitlines()
    assert len(one) == 8 and len(one[0].split()) == 3


def test_json(tmp_path):
    p = write_json(tmp_path / "a.json", {"b": np.float64(1.5), "a": np.arange(3), "c": float("nan"), "z": 1j})
    assert read_json(p) == {"a": [0, 1, 2], "b": 1.5, "c": "nan", "z": [0.0, 1.0]}
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(ConfigError):
        read_json(tmp_path / "bad.json")
    with pytest.raises(ConfigError):
        read_json(tmp_path / "missing.json")
