import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hairgan.errors import InvalidInput
from hairgan.mspace import (OUTSIDE, ModelSpace, decode_dir, encode_dir,
                            pixel_to_world_xy, project_to_image, voxel_center,
                            world_to_voxel)

MS = ModelSpace()


class TestEncodeDecode:
    def test_plus_z(self):
        assert np.array_equal(encode_dir([0, 0, 1]), [0.5, 0.5, 1.0])

    def test_zero_is_empty_code(self):
        assert np.array_equal(encode_dir([0, 0, 0]), [0.5, 0.5, 0.5])

    def test_plus_x(self):
        assert np.array_equal(encode_dir([1, 0, 0]), [1.0, 0.5, 0.5])

    def test_decode_examples(self):
        assert np.array_equal(decode_dir([0.5, 0.5, 1.0]), [0, 0, 1])
        assert np.array_equal(decode_dir([0.5, 0.5, 0.5]), [0, 0, 0])

    def test_nonfinite_rejected(self):
        with pytest.raises(InvalidInput):
            encode_dir([np.nan, 0, 0])
        with pytest.raises(InvalidInput):
            decode_dir([1.5, 0, 0])

    @given(st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1)))
    @settings(max_examples=200, deadline=None)
    def test_roundtrip_one_ulp(self, v):
        d = np.array(v)
        n = np.linalg.norm(d)
        d = d / n if n > 1e-6 else np.zeros(3)
        back = decode_dir(np.clip(encode_dir(d), 0, 1))
        ulp = np.spacing(np.maximum(np.abs(d), 1.0))
        assert (np.abs(back - d) <= ulp).all()


class TestWorldToVoxel:
    def test_center(self):
        assert world_to_voxel([0, 0, 0], MS) == (64, 64, 48)

    def test_min_corner(self):
        eps = 1e-9
        p = MS.box_min + eps
        assert world_to_voxel(p, MS) == (0, 0, 0)

    def test_outside(self):
        assert world_to_voxel([0.6, 0, 0], MS) == OUTSIDE

    def test_max_face_closed(self):
        assert world_to_voxel(MS.box_max, MS) == (127, 127, 95)

    def test_half_open_boundary(self):
        # a cell boundary point belongs to the upper cell
        x = MS.box_min[0] + 3 * MS.voxel_edge
        assert world_to_voxel([x, 0, 0], MS)[0] == 3

    def test_partition(self):
        rng = np.random.default_rng(0)
        pts = rng.uniform(MS.box_min, MS.box_max, size=(200, 3))
        for p in pts:
            idx = world_to_voxel(p, MS)
            lo = MS.box_min + np.array(idx) * MS.voxel_edge
            hi = lo + MS.voxel_edge
            assert (p >= lo - 1e-12).all() and (p <= hi + 1e-12).all()

    def test_voxel_center_roundtrip(self):
        assert world_to_voxel(voxel_center((3, 70, 11), MS), MS) == (3, 70, 11)


class TestProjection:
    def test_center_to_image_center(self):
        assert np.allclose(project_to_image([0, 0, 0], MS), [512, 512])

    def test_half_width_offset(self):
        # scale = img_res / H applied to the x offset
        uv = project_to_image([MS.h / 2, 0, 0], MS)
        assert np.allclose(uv, [1024, 512])

    def test_orthographic_z_invariance(self):
        a = project_to_image([0.1, -0.2, 0.3], MS)
        b = project_to_image([0.1, -0.2, -0.3], MS)
        assert np.array_equal(a, b)

    def test_affine(self):
        rng = np.random.default_rng(1)
        a, b = rng.uniform(-0.4, 0.4, size=(2, 3))
        lhs = (project_to_image(a, MS) + project_to_image(b, MS)
               - project_to_image([0, 0, 0], MS))
        rhs = project_to_image(a + b - np.zeros(3), MS)
        assert np.allclose(lhs, rhs, atol=1e-9)

    def test_pixel_world_roundtrip(self):
        uv = np.array([123.25, 871.5])
        assert np.allclose(project_to_image(
            np.append(pixel_to_world_xy(uv, MS), 0.1), MS), uv)


class TestModelSpace:
    def test_defaults(self):
        assert MS.vol_res == (128, 128, 96)
        assert MS.img_res == 1024
        assert MS.scale == 1024.0
        assert MS.img_res % MS.vol_res[0] == 0

    def test_cubic_voxels_enforced(self):
        with pytest.raises(InvalidInput):
            ModelSpace(vol_res=(128, 128, 90))
        with pytest.raises(InvalidInput):
            ModelSpace(vol_res=(128, 120, 96))

    def test_scaled(self):
        s = MS.scaled(8)
        assert s.vol_res == (16, 16, 12)
        assert s.img_res == 128
        assert abs(s.voxel_edge - MS.h / 16) < 1e-15
