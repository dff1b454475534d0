import numpy as np
import pytest

from abmat import tensorio
from abmat.errors import InputError


def test_abmf_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    a = rng.normal(size=(3, 4, 5)).astype(np.float32)
    p = str(tmp_path / "t.abmf")
    tensorio.write_abmf(p, a)
    back = tensorio.read_abmf(p)
    assert back.shape == (3, 4, 5)
    np.testing.assert_array_equal(back, a.astype(np.float64))


def test_abmf_header_layout(tmp_path):
    p = str(tmp_path / "t.abmf")
    tensorio.write_abmf(p, np.zeros((2, 3), dtype=np.float32))
    raw = open(p, "rb").read()
    assert raw[:4] == b"ABMF"
    assert int.from_bytes(raw[4:8], "little") == 2
    assert int.from_bytes(raw[8:12], "little") == 2
    assert int.from_bytes(raw[12:16], "little") == 3
    assert len(raw) == 16 + 4 * 6


def test_abmf_bad_magic(tmp_path):
    p = str(tmp_path / "bad.abmf")
    with open(p, "wb") as f:
        f.write(b"XXXX" + b"\x00" * 16)
    with pytest.raises(InputError):
        tensorio.read_abmf(p)


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    params = {
        "conv0.w": rng.normal(size=(4, 3, 3, 3)).astype(np.float32).astype(np.float64),
        "conv0.b": np.zeros(4),
        "fc.w": rng.normal(size=(8, 2)).astype(np.float32).astype(np.float64),
    }
    p = str(tmp_path / "model.ckpt")
    tensorio.save_checkpoint(params, p)
    back = tensorio.load_checkpoint(p)
    assert list(back) == list(params)
    for name in params:
        np.testing.assert_array_equal(back[name], params[name])


def test_checkpoint_bytes_stable(tmp_path):
    params = {"a": np.arange(6, dtype=np.float64).reshape(2, 3)}
    p1, p2 = str(tmp_path / "a.ckpt"), str(tmp_path / "b.ckpt")
    tensorio.save_checkpoint(params, p1)
    tensorio.save_checkpoint(tensorio.load_checkpoint(p1), p2)
    assert open(p1, "rb").read() == open(p2, "rb").read()
