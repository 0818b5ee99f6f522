import numpy as np
import pytest

from hairgan.errors import InvalidBust
from hairgan.mspace import ModelSpace, decode_dir, voxel_center
from hairgan.rasterize import (build_pair, bust_depth_map, hair_mask,
                               make_training_pairs, mirror_volume_x,
                               render_strands, strands_to_volume,
                               tangent_hint_map)
from hairgan.strands import (BustModel, HairModel, StyleParams, _uv_sphere,
                             flip_model, gen_hairstyle, make_default_bust,
                             resample_model)

from helpers import brute_voxelize

SMALL = ModelSpace(vol_res=(32, 32, 24), img_res=256)
BUST = make_default_bust(SMALL)


class TestStrandsToVolume:
    def test_empty_model(self):
        v = strands_to_volume(HairModel([]), SMALL)
        assert np.array_equal(v.rgb, np.full(v.rgb.shape, 0.5))

    def test_straight_x_strand_matches_hand_dda(self):
        ms = ModelSpace(vol_res=(8, 8, 6), img_res=64)
        # +x strand through the row of voxel centers at iy=4, iz=3
        y = ms.box_min[1] + 4.5 * ms.voxel_edge
        z = ms.box_min[2] + 3.5 * ms.voxel_edge
        xs = np.linspace(ms.box_min[0] + 0.01, ms.box_max[0] - 0.01, 30)
        strand = np.stack([xs, np.full_like(xs, y), np.full_like(xs, z)],
                          axis=1)
        m = resample_model(HairModel([strand]), ms)
        vol = strands_to_volume(m, ms)
        dirs = vol.decoded()
        oracle = brute_voxelize(m.strands[0], ms)
        hit = np.linalg.norm(dirs, axis=-1) > 0.5
        assert set(zip(*np.nonzero(hit))) == set(oracle)
        for idx in oracle:
            assert np.abs(dirs[idx] - [1, 0, 0]).max() < 1e-6

    def test_generic_strand_matches_brute_force(self):
        ms = ModelSpace(vol_res=(8, 8, 6), img_res=64)
        rng = np.random.default_rng(0)
        pts = np.cumsum(rng.normal(0, 0.3 * ms.voxel_edge, size=(40, 3)),
                        axis=0)
        m = resample_model(HairModel([pts]), ms)
        vol = strands_to_volume(m, ms)
        dirs = vol.decoded()
        oracle = brute_voxelize(m.strands[0], ms, n_sub=20000)
        total_w = sum(w for w, _ in oracle.values())
        for idx, (w, s) in oracle.items():
            if w > 1e-3 * total_w and np.linalg.norm(s) > 1e-9:
                want = s / np.linalg.norm(s)
                assert np.abs(dirs[idx] - want).max() < 5e-3

    def test_mirror_equivariance(self):
        m = gen_hairstyle(StyleParams(n_strands=60), 3, BUST, SMALL)
        m = resample_model(m, SMALL)
        a = strands_to_volume(flip_model(m), SMALL)
        b = mirror_volume_x(strands_to_volume(m, SMALL))
        assert np.abs(a.rgb - b.rgb).max() < 1e-6

    def test_growth_direction_not_flipped(self):
        # two anti-parallel strands in one voxel cancel instead of aligning
        ms = ModelSpace(vol_res=(8, 8, 6), img_res=64)
        c = voxel_center((4, 4, 3), ms)
        e = ms.voxel_edge * 0.4
        s1 = np.array([c - [e, 0, 0], c + [e, 0, 0]])
        s2 = np.array([c + [e, 0, 0], c - [e, 0, 0]])
        vol = strands_to_volume(HairModel([s1, s2]), ms)
        assert np.abs(vol.decoded()[4, 4, 3]).max() < 1e-9


class TestHairMask:
    def test_empty(self):
        assert hair_mask(HairModel([]), SMALL).data.sum() == 0

    def test_flip_mirrors(self):
        m = gen_hairstyle(StyleParams(n_strands=50), 8, BUST, SMALL)
        a = hair_mask(flip_model(m), SMALL).data
        b = hair_mask(m, SMALL).data[:, ::-1]
        assert np.array_equal(a, b)

    def test_vertical_strand_single_column(self):
        # strand projecting exactly onto a pixel-center column
        ms = SMALL
        col = 128
        x = (col + 0.5 - ms.img_res / 2) / ms.scale
        s = np.array([[x, 0.3, 0.0], [x, -0.3, 0.0]])
        m = resample_model(HairModel([s]), ms)
        mask = hair_mask(m, ms).data
        rows = slice(100, 160)
        assert (mask[rows, col] == 1).all()
        assert mask[rows, col - 1].sum() == 0
        assert mask[rows, col + 1].sum() == 0


class TestRender:
    def test_empty_constant(self):
        img = render_strands(HairModel([]), SMALL).data
        assert np.array_equal(img, np.full((256, 256), 0.15))

    def test_deterministic(self):
        m = gen_hairstyle(StyleParams(n_strands=30), 2, BUST, SMALL)
        a = render_strands(m, SMALL, seed=5).data
        b = render_strands(m, SMALL, seed=5).data
        assert np.array_equal(a, b)

    def test_range(self):
        m = gen_hairstyle(StyleParams(n_strands=30), 2, BUST, SMALL)
        img = render_strands(m, SMALL, seed=1).data
        assert img.min() >= 0.0 and img.max() <= 1.0


class TestDepth:
    def test_miss_value(self):
        # one tiny triangle in a corner; everywhere else reads 1.0
        v = np.array([[-0.49, -0.49, 0.0], [-0.48, -0.49, 0.0],
                      [-0.49, -0.48, 0.0]])
        bust = BustModel(v, np.array([[0, 1, 2]]),
                         np.array([0], dtype=np.int64))
        d = bust_depth_map(bust, SMALL).data
        assert d[0, 0] == 1.0 and d[128, 128] == 1.0
        assert d.min() < 1.0  # the triangle itself

    def test_front_quad_zero(self):
        z = SMALL.dz / 2
        v = np.array([[-1, -1, z], [1, -1, z], [1, 1, z], [-1, 1, z]])
        bust = BustModel(v, np.array([[0, 1, 2], [0, 2, 3]]),
                         np.array([0], dtype=np.int64))
        d = bust_depth_map(bust, SMALL).data
        assert np.abs(d).max() == 0.0

    def test_sphere_analytic(self):
        # unit-diameter sphere centered in a box with H=2, Dz=1.5:
        # nearest depth = (Dz/2 - r)/Dz = 1/6
        ms = ModelSpace(h=2.0, dz=1.5, vol_res=(32, 32, 24), img_res=256)
        sv, sf = _uv_sphere((0, 0, 0), (0.5, 0.5, 0.5), n_lat=48, n_lon=96)
        bust = BustModel(sv, sf, np.array([0], dtype=np.int64))
        d = bust_depth_map(bust, ms).data
        analytic = (ms.dz / 2 - 0.5) / ms.dz
        assert abs(d.min() - analytic) < 2e-3
        r, c = np.unravel_index(d.argmin(), d.shape)
        assert abs(r - 127.5) < 2 and abs(c - 127.5) < 2

    def test_degenerate_rejected(self):
        with pytest.raises(InvalidBust):
            BustModel(np.zeros((3, 3)), np.zeros((0, 3), dtype=np.int64),
                      np.array([], dtype=np.int64))


class TestPairs:
    def test_n_rot_count(self):
        m = gen_hairstyle(StyleParams(n_strands=25), 4, BUST, SMALL)
        pairs = make_training_pairs(m, BUST, SMALL, 3, seed=0)
        assert len(pairs) == 3

    def test_deterministic(self):
        m = gen_hairstyle(StyleParams(n_strands=25), 4, BUST, SMALL)
        a = make_training_pairs(m, BUST, SMALL, 2, seed=9)
        b = make_training_pairs(m, BUST, SMALL, 2, seed=9)
        for pa, pb in zip(a, b):
            assert np.array_equal(pa.x.data, pb.x.data)
            assert np.array_equal(pa.y.rgb, pb.y.rgb)
            assert pa.euler == pb.euler

    def test_rotations_within_ranges(self):
        m = gen_hairstyle(StyleParams(n_strands=10), 4, BUST, SMALL)
        pairs = make_training_pairs(m, BUST, SMALL, 8, seed=1)
        for p in pairs:
            assert -15 <= p.euler[0] <= 15
            assert -30 <= p.euler[1] <= 30
            assert -20 <= p.euler[2] <= 20
            assert p.iters in (3, 4, 5)

    def test_mask_volume_consistency(self):
        # Occupied voxel centers project inside the dilated mask. A voxel
        # corner-clipped by a strand puts its center up to half an in-plane
        # voxel diagonal (~5.7 px here) from the stroke, so 3 px dilation
        # covers all but those corner cases and the half-diagonal bound
        # covers everything.
        from scipy import ndimage
        from hairgan.mspace import project_to_image
        m = gen_hairstyle(StyleParams(n_strands=60), 5, BUST, SMALL)
        mr = resample_model(m, SMALL)
        vol = strands_to_volume(mr, SMALL)
        mask = hair_mask(mr, SMALL).data > 0
        yy, xx = np.mgrid[-3:4, -3:4]
        dil3 = ndimage.binary_dilation(mask, structure=yy**2 + xx**2 <= 9)
        half_diag = int(np.ceil((256 // 32) / 2 * np.sqrt(2) + 0.75))
        yy, xx = np.mgrid[-half_diag:half_diag + 1, -half_diag:half_diag + 1]
        dil_full = ndimage.binary_dilation(
            mask, structure=yy**2 + xx**2 <= half_diag**2)
        occ = vol.occupancy() >= 0.5
        idx = np.stack(np.nonzero(occ), axis=1)
        centers = np.array([voxel_center(i, SMALL) for i in idx])
        uv = project_to_image(centers, SMALL)
        cols = np.clip(uv[:, 0].astype(int), 0, 255)
        rows = np.clip(uv[:, 1].astype(int), 0, 255)
        assert dil3[rows, cols].mean() >= 0.98
        assert dil_full[rows, cols].all()

    def test_pair_mirror_equivariance(self):
        m = gen_hairstyle(StyleParams(n_strands=40, length_mean=0.35), 11,
                          BUST, SMALL)
        a = build_pair(m, BUST, SMALL, (0, 0, 0), 3, 77)
        b = build_pair(flip_model(m), BUST, SMALL, (0, 0, 0), 3, 77)
        ym = mirror_volume_x(a.y)
        assert np.abs(b.y.rgb - ym.rgb).max() < 1e-6
        xm = a.x.data[:, ::-1].copy()
        xm[:, :, 0] = 1.0 - xm[:, :, 0]
        assert np.abs(b.x.data - xm).max() < 1e-6

    def test_hint_map_covers_strands(self):
        m = gen_hairstyle(StyleParams(n_strands=30), 6, BUST, SMALL)
        mr = resample_model(m, SMALL)
        hint = tangent_hint_map(mr, SMALL)
        norms = np.linalg.norm(hint, axis=-1)
        assert (norms > 0).sum() > 100
        nz = norms[norms > 0]
        assert np.abs(nz - 1.0).max() < 1e-9
