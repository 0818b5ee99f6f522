import numpy as np
import pytest

from hairgan import fileio
from hairgan.errors import DataError

RNG = np.random.default_rng(7)


def test_strands_roundtrip(tmp_path):
    strands = [RNG.random((n, 3)).astype("<f4").astype(np.float64)
               for n in (2, 17, 5)]
    p = tmp_path / "m.strands"
    fileio.write_strands(p, strands)
    back = fileio.read_strands(p)
    assert len(back) == 3
    for a, b in zip(strands, back):
        assert np.array_equal(a.astype("<f4"), b.astype("<f4"))


def test_strands_write_read_write_identical(tmp_path):
    strands = [RNG.random((4, 3))]
    p1, p2 = tmp_path / "a.strands", tmp_path / "b.strands"
    fileio.write_strands(p1, strands)
    fileio.write_strands(p2, fileio.read_strands(p1))
    assert p1.read_bytes() == p2.read_bytes()


def test_strands_bad_magic(tmp_path):
    p = tmp_path / "bad.strands"
    p.write_bytes(b"NOTMAGIC" + b"\x00" * 16)
    with pytest.raises(DataError):
        fileio.read_strands(p)


def test_vol3d_roundtrip(tmp_path):
    v = RNG.random((6, 6, 4, 3)).astype("<f4").astype(np.float64)
    p = tmp_path / "v.vol3d"
    fileio.write_vol3d(p, v)
    assert np.array_equal(fileio.read_vol3d(p), v)


def test_vol3d_layout_x_fastest(tmp_path):
    # voxel (ix,iy,iz) sits at byte offset ((iz*ny+iy)*nx+ix)*12 after header
    v = np.zeros((2, 3, 2, 3))
    v[1, 2, 0] = (0.25, 0.5, 0.75)
    p = tmp_path / "v.vol3d"
    fileio.write_vol3d(p, v)
    raw = p.read_bytes()[7 + 12:]
    flat = np.frombuffer(raw, dtype="<f4").reshape(-1, 3)
    assert np.allclose(flat[(0 * 3 + 2) * 2 + 1], [0.25, 0.5, 0.75])


def test_map2d_roundtrip(tmp_path):
    m = RNG.random((5, 8, 4)).astype("<f4").astype(np.float64)
    p = tmp_path / "m.map2d"
    fileio.write_map2d(p, m)
    assert np.array_equal(fileio.read_map2d(p), m)
    fileio.write_map2d(p, m[:, :, 0])
    assert fileio.read_map2d(p).shape == (5, 8, 1)


def test_checkpoint_roundtrip_bitwise(tmp_path):
    tensors = {
        "g/enc1.w": RNG.normal(size=(5, 5, 4, 2)),
        "d/fc.b": np.asarray(3.25),
        "opt/m:g/enc1.w": RNG.normal(size=(5, 5, 4, 2)),
    }
    p = tmp_path / "c.ckpt"
    fileio.write_checkpoint(p, tensors)
    back = fileio.read_checkpoint(p)
    assert set(back) == set(tensors)
    for k in tensors:
        assert np.array_equal(back[k], np.asarray(tensors[k]))
        assert back[k].shape == np.asarray(tensors[k]).shape


def test_checkpoint_magic(tmp_path):
    p = tmp_path / "c.ckpt"
    p.write_bytes(b"WRONG!!!")
    with pytest.raises(DataError):
        fileio.read_checkpoint(p)


def test_meta_roundtrip(tmp_path):
    p = tmp_path / "m.meta"
    fileio.write_meta(p, {"k": 8, "alpha": repr(1e-2), "name": "x y z"})
    back = fileio.read_meta(p)
    assert back["k"] == "8"
    assert float(back["alpha"]) == 1e-2
    assert back["name"] == "x y z"


def test_off_roundtrip(tmp_path):
    verts = RNG.random((5, 3))
    faces = np.array([[0, 1, 2], [2, 3, 4]])
    p = tmp_path / "m.off"
    fileio.write_off(p, verts, faces)
    v2, f2 = fileio.read_off(p)
    assert np.allclose(v2, verts, atol=1e-8)
    assert np.array_equal(f2, faces)


def test_pgm_roundtrip(tmp_path):
    img = np.linspace(0, 1, 12).reshape(3, 4)
    p = tmp_path / "i.pgm"
    fileio.write_pgm(p, img)
    back = fileio.read_pgm(p)
    assert back.shape == (3, 4)
    assert np.abs(back - img).max() < 1.0 / 255


def test_ppm_write(tmp_path):
    p = tmp_path / "i.ppm"
    fileio.write_ppm(p, RNG.random((4, 5, 3)))
    data = p.read_bytes()
    assert data.startswith(b"P6\n5 4\n255\n")
    assert len(data) == len(b"P6\n5 4\n255\n") + 4 * 5 * 3
